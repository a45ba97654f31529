"""
The life of one job through the testbed, recorded as an ordered transcript:
discovery, replica lookup, submission and upload, the Grid Manager's stages,
status seen through the information system, optional cancellation, output
download and replica registration, and the GIIS cache refreshes it caused.
"""
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import pandas as pd

from grid_testbed.broker.matching import match
from grid_testbed.broker.ui import SubmissionError
from grid_testbed.grid_manager.records import JobState
from grid_testbed.grid_manager.staging import split_destination
from grid_testbed.replica_catalog.catalog import lookup as rc_lookup
from grid_testbed.utils.instrumentation import log_time_and_shape
from grid_testbed.wire.transport import RemoteError

logger = logging.getLogger(__name__)

TERMINAL_STATUSES = ('FINISHED', 'FAILED')


@dataclass
class TranscriptEvent:
    time: float
    step: str
    detail: str = ''

    def line(self, with_time=False):
        text = '%s %s' % (self.step, self.detail) if self.detail else self.step
        return '%.1f %s' % (self.time, text) if with_time else text


@dataclass
class Transcript:
    events: List[TranscriptEvent] = field(default_factory=list)
    gridid: str = ''
    final_state: str = ''
    failure_reason: str = ''
    failed_step: str = ''
    downloaded: Dict[str, bytes] = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failed_step

    def add(self, time, step, detail=''):
        self.events.append(TranscriptEvent(time, step, detail))
        logger.debug('transcript: %s %s', step, detail)

    def steps(self):
        return [e.step for e in self.events]

    def lines(self, with_time=False):
        """one line per event, the grid id masked so transcripts compare across runs"""
        lines = [e.line(with_time) for e in self.events]
        return [line.replace(self.gridid, '<gridid>') for line in lines] if self.gridid else lines

    def frame(self):
        return pd.DataFrame([vars(e) for e in self.events], columns=['time', 'step', 'detail'])


def _gm_listener(transcript, fleet, gridid_box):
    def listener(record, old, new):
        if record.gridid != gridid_box.get('gridid'):
            return
        now = fleet.clock.now()
        job = record.job
        if new == JobState.INLRMS_Q:
            for name, source in job.inputfiles:
                transcript.add(now, 'stage-in', '%s <- %s' % (name, source or 'upload'))
            transcript.add(now, 'qsub', 'local id %s queue %s' % (record.local_id, record.queue))
        elif new == JobState.INLRMS_R:
            transcript.add(now, 'run')
        elif old == JobState.FINISHING:
            for name, destination in job.outputfiles:
                if destination:
                    url, lfn = split_destination(destination)
                    transcript.add(now, 'stage-out', '%s -> %s' % (name, url))
                    if lfn and new == JobState.FINISHED:
                        transcript.add(now, 'rc-register', lfn)
        if old is not None:
            transcript.add(now, 'gm-state', '%s->%s' % (old.label, new.label))
    return listener


@log_time_and_shape
def run_taskflow(fleet, job, subject=None, local_files=None,
                 on_state: Optional[Dict[str, Callable]] = None,
                 before_submit: Optional[Callable] = None,
                 max_steps=600, step=0.1, real_pause=0.01, download=True):
    """
    Runs one job from discovery to output download.
    :param on_state: GM state label -> callable(fleet, ui, gridid), invoked once
        right after the job is first seen in that state (fault and cancel injection)
    :param before_submit: callable(fleet) run after brokering, before submission
    :return: Transcript, with failed_step naming the step that did not complete
    """
    ui = fleet.ui(subject) if subject else fleet.ui()
    transcript = Transcript()
    clock = fleet.clock
    on_state = dict(on_state or {})
    fleet.tick()

    # steps 1-2: discovery and replica lookup at the client
    try:
        clusters = ui.discover()
        transcript.add(clock.now(), 'giis-query', 'clusters=%d' % len(clusters))
        resolved = ui.resolve_inputs(job)
        for choice in resolved:
            transcript.add(clock.now(), 'rc-lookup', '%s -> %s' % (choice.name, choice.chosen_pfn))
        candidates = match(job, clusters, ui.subject)
        if not candidates:
            raise SubmissionError('no resource matches the job')
        target = candidates[0]
        transcript.add(clock.now(), 'broker', '%s/%s' % (target.cluster.name, target.queue.name))
    except (SubmissionError, RemoteError) as e:
        transcript.failed_step = 'brokering: %s' % e
        return transcript

    if before_submit is not None:
        before_submit(fleet)

    # steps 3-5: submission and upload
    node = fleet.clusters[target.cluster.name]
    gridid_box = {}
    listener = _gm_listener(transcript, fleet, gridid_box)
    node.gm.listeners.append(listener)
    seen_states = []

    def record_state(record, old, new):
        if record.gridid == gridid_box.get('gridid'):
            seen_states.append(new.label)

    node.gm.listeners.append(record_state)
    try:
        try:
            gridid = ui.submit(job, target, local_files, resolved)
        except (SubmissionError, RemoteError) as e:
            transcript.failed_step = 'submit: %s' % e
            return transcript
        gridid_box['gridid'] = gridid
        transcript.gridid = gridid
        transcript.add(clock.now(), 'submit', gridid)
        for name in job.uploads:
            transcript.add(clock.now(), 'upload', name)

        # steps 6-10: the job runs, the client watches the information system
        status = ''

        def finished():
            nonlocal status
            for label in list(seen_states):
                hook = on_state.pop(label, None)
                if hook is not None:
                    transcript.add(clock.now(), 'inject', 'at %s' % label)
                    hook(fleet, ui, gridid)
            current = ui.status(gridid)
            if current != status:
                status = current
                transcript.add(clock.now(), 'status', current)
            return status in TERMINAL_STATUSES

        if not fleet.run_until(finished, max_steps, step, real_pause):
            transcript.failed_step = 'wait for completion (last status %s)' % status
            return transcript
        record = node.gm.record(gridid)
        transcript.final_state = record.status
        transcript.failure_reason = record.failure_reason

        # step 11: download and replica check
        if download and record.state == JobState.FINISHED:
            with tempfile.TemporaryDirectory() as destdir:
                for path in ui.fetch_outputs(gridid, destdir, contact=target.cluster.contact):
                    with open(path, 'rb') as f:
                        data = f.read()
                    name = os.path.relpath(path, os.path.realpath(destdir))
                    transcript.downloaded[name] = data
                    transcript.add(clock.now(), 'download', '%s %d bytes' % (name, len(data)))
            for name, destination in job.outputfiles:
                url, lfn = split_destination(destination) if destination else ('', '')
                if lfn:
                    pfns = rc_lookup(ui.transport, ui.rc_url, lfn, ui.subject)
                    transcript.add(clock.now(), 'rc-verify', '%s %s' % (
                        lfn, 'found' if url in pfns else 'missing'))
    finally:
        node.gm.listeners[:] = [l for l in node.gm.listeners if l not in (listener, record_state)]

    # step 12: the caches the information system refreshed along the way
    for name, giis in sorted(fleet.giises.items()):
        for child in giis.children():
            transcript.add(clock.now(), 'giis-refresh',
                           '%s %s fetches=%d' % (name, child.endpoint, child.fetch_count))
    return transcript
