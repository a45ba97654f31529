"""
The Grid Manager: owns every job of one cluster and advances it through
ACCEPTED -> PREPARING -> INLRMS_Q -> INLRMS_R -> FINISHING -> FINISHED,
with failure, cancellation and cleanup edges. All state lives in the status
directory, so a new GridManager over the same control directory continues
where a killed one stopped.
"""
import logging
import os
import re
import shlex
import threading
import time
from collections import defaultdict

from grid_testbed.grid_manager.records import (
    JobEvent, JobRecord, JobState, new_gridid, next_state)
from grid_testbed.grid_manager.staging import (
    StagingError, check_disk, deliver_output, fetch_input, remove_session)
from grid_testbed.grid_manager.status_directory import StatusDirectory
from grid_testbed.lrms.pbs_simulator import EXITED, EXIT_CPUTIME_EXCEEDED, QUEUED, JobLimits, LrmsError
from grid_testbed.storage.file_store import FileStore, normalize
from grid_testbed.utils.clock import WallClock
from grid_testbed.utils.instrumentation import log_time_and_shape
from grid_testbed.utils.logging_config import notification_logger
from grid_testbed.utils.parallelism import map_threads
from grid_testbed.wire.transport import ServiceError, service_subject

logger = logging.getLogger(__name__)

_GRIDID = re.compile(r'.*:(\d+)-[0-9a-f]{6}\Z')


def rfc3339(seconds):
    return time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime(seconds))


def exit_reason(exit_code):
    if exit_code == EXIT_CPUTIME_EXCEEDED:
        return 'cputime limit exceeded'
    return 'job exited with code %d' % exit_code


class GridManager:

    def __init__(self, config, lrms, transport, clock=None):
        self.config = config
        self.lrms = lrms
        self.transport = transport.for_role('cluster')
        self.clock = clock or WallClock()
        self.subject = service_subject(config.name)
        self.status_dir = StatusDirectory(config.control_dir)
        self.listeners = []
        self.notifications = (notification_logger(config.name, config.notify_log)
                              if config.notify_log else None)
        self._records = {}
        self._counter = 0
        self._lock = threading.Lock()
        self._job_locks = defaultdict(threading.RLock)
        os.makedirs(config.session_root, exist_ok=True)

    # records

    def record(self, gridid):
        """:raises KeyError: unknown grid id"""
        with self._lock:
            return self._records[gridid]

    def records(self):
        with self._lock:
            return list(self._records.values())

    def _owned(self, gridid, subject):
        try:
            record = self.record(gridid)
        except KeyError:
            raise KeyError('unknown job %s' % gridid)
        if record.owner != subject:
            raise PermissionError('%s is not the owner of %s' % (subject, gridid))
        return record

    @log_time_and_shape
    def recover(self):
        """Rebuilds all records from the status directory."""
        records = []
        for record in self.status_dir.load_all():
            if record.state == JobState.DELETED:
                # stopped between recording the deletion and removing the files
                self._forget(record)
            else:
                records.append(record)
        with self._lock:
            self._records = {r.gridid: r for r in records}
            self._counter = max(self._counter, self.status_dir.load_counter())
            for record in records:
                match = _GRIDID.match(record.gridid)
                if match:
                    self._counter = max(self._counter, int(match.group(1)))
        pending = sum(1 for r in records if not r.is_terminal)
        logger.info('%s: recovered %d jobs, %d in progress', self.config.name, len(records), pending)
        return records

    # requests from the gatekeeper

    def submit(self, owner, job):
        """
        Accepts a job: grid id, session directory and status files.
        :raises ValueError: the job cannot run on this cluster
        """
        job.validate()
        if job.action != 'submit':
            raise ValueError('not a submission: action=%s' % job.action)
        queue = job.queue or next(iter(self.lrms.queues))
        if queue not in self.lrms.queues:
            raise ValueError('unknown queue %s' % queue)
        try:
            for name in ([n for n, _ in job.inputfiles] + [n for n, _ in job.outputfiles]
                         + [n for n in (job.stdout, job.stderr) if n]):
                if normalize(name) == '.':
                    raise ValueError('invalid file name %r' % name)
        except ServiceError as e:
            raise ValueError(e.reason)

        now = self.clock.now()
        with self._lock:
            while True:
                self._counter += 1
                gridid = new_gridid(self.config.name, self._counter)
                if gridid not in self._records and not os.path.exists(self.status_dir.job_dir(gridid)):
                    break
            self.status_dir.save_counter(self._counter)
            session_dir = os.path.join(self.config.session_root, gridid)
            os.makedirs(session_dir)
            record = JobRecord(gridid=gridid, owner=owner, job=job, session_dir=session_dir,
                               queue=queue, created=now, modified=now,
                               lifetime=job.lifetime or self.config.lifetime)
            self.status_dir.create(record)
            self._records[gridid] = record
        logger.info('%s: accepted %s from %s', self.config.name, gridid, owner)
        self._tell_listeners(record, None, JobState.ACCEPTED)
        return record

    def request_cancel(self, gridid, subject):
        """
        :raises KeyError: unknown job
        :raises PermissionError: subject is not the owner
        """
        record = self._owned(gridid, subject)
        with self._job_locks[gridid]:
            if not record.is_terminal and record.state != JobState.CANCELING:
                self.apply_event(record, JobEvent.CANCEL)
        return record

    def request_clean(self, gridid, subject):
        """Cleaning a job still in progress cancels it first."""
        record = self._owned(gridid, subject)
        with self._job_locks[gridid]:
            if record.state == JobState.DELETED:
                return record
            record.clean_requested = True
            if not record.is_terminal and record.state != JobState.CANCELING:
                self.apply_event(record, JobEvent.CANCEL)
            else:
                self.status_dir.save(record)
        return record

    # the state machine

    def apply_event(self, record, event, reason='', now=None):
        """
        Moves a record along a legal edge and persists it; illegal events are ignored.
        :return: True when the state changed
        """
        new = next_state(record.state, event)
        if new is None:
            logger.debug('%s: ignoring %s in %s', record.gridid, JobEvent(event).value,
                         record.state.label)
            return False
        now = self.clock.now() if now is None else now
        old = record.state
        record.state = new
        record.modified = now
        if reason:
            record.failure_reason = reason
        self.status_dir.save(record)
        logger.info('%s: %s -> %s%s', record.gridid, old.label, new.label,
                    ' (%s)' % reason if reason else '')
        self._notify(record, old, new, now)
        self._tell_listeners(record, old, new)
        return True

    def gm_step(self, record, now=None):
        """Advances one job as far as it can go at this instant."""
        now = self.clock.now() if now is None else now
        with self._job_locks[record.gridid]:
            while True:
                before = record.state
                self._advance(record, now)
                if record.state == before:
                    return record

    def step_all(self, now=None):
        now = self.clock.now() if now is None else now
        active = [r for r in self.records() if r.state != JobState.DELETED]
        map_threads(lambda r: self.gm_step(r, now), active)
        return active

    def _advance(self, record, now):
        state = record.state
        if state == JobState.ACCEPTED:
            self.apply_event(record, JobEvent.ADMIT, now=now)
        elif state == JobState.PREPARING:
            if self.stage_in(record, now):
                self._submit_to_lrms(record, now)
        elif state in (JobState.INLRMS_Q, JobState.INLRMS_R):
            self._poll_lrms(record, now)
        elif state == JobState.FINISHING:
            self.stage_out(record, now)
        elif state == JobState.CANCELING:
            self._remove_from_lrms(record)
            self.apply_event(record, JobEvent.CANCELLED, 'cancelled', now=now)
        elif state in (JobState.FINISHED, JobState.FAILED):
            if record.clean_requested or now - record.modified >= record.lifetime:
                remove_session(record.session_dir)
                if self.apply_event(record, JobEvent.EXPIRE, now=now):
                    self._forget(record)

    def _forget(self, record):
        """Drops a deleted job from the control directory, the LRMS and memory."""
        self.status_dir.remove(record.gridid)
        self.lrms.purge(record.gridid)
        with self._lock:
            self._records.pop(record.gridid, None)
            self._job_locks.pop(record.gridid, None)

    # stages

    def stage_in(self, record, now):
        """
        Fetches remote and local inputs once, then waits for user uploads.
        :return: True when every input is in the session directory
        """
        session = FileStore(record.session_dir)
        if not record.downloads_done:
            try:
                check_disk(record.job, record.session_dir)
                for name, source in record.job.inputfiles:
                    if source:
                        fetch_input(self.transport, session, name, source, self.subject,
                                    self.config.local_se_paths, self.config.retries,
                                    self.config.backoff)
            except StagingError as e:
                self.apply_event(record, JobEvent.FAILURE, str(e), now=now)
                return False
            record.downloads_done = True

        missing = [name for name in record.job.uploads if not session.exists(name)]
        if missing:
            if now - record.modified >= self.config.upload_timeout:
                self.apply_event(record, JobEvent.FAILURE, 'input not uploaded: %s' % missing[0],
                                 now=now)
            return False
        return True

    def job_script(self, record):
        job = record.job
        executable = job.executable
        if executable in {name for name, _ in job.inputfiles}:
            path = FileStore(record.session_dir).resolve(executable)
            os.chmod(path, os.stat(path).st_mode | 0o755)
            executable = './' + normalize(executable)
        command = ' '.join(shlex.quote(part) for part in [executable] + job.arguments)
        return '#!/bin/sh\nexec %s\n' % command

    def _submit_to_lrms(self, record, now):
        job = record.job
        session = FileStore(record.session_dir)
        script = self.status_dir.script_path(record.gridid)
        try:
            with open(script, 'w', encoding='utf-8') as f:
                f.write(self.job_script(record))
            # the grid id names the LRMS job, a repeated qsub returns the same id
            record.local_id = self.lrms.qsub(
                script, record.session_dir, record.queue,
                JobLimits(job.cputime, job.memory, job.disk), name=record.gridid,
                stdout=session.resolve(job.stdout) if job.stdout else '',
                stderr=session.resolve(job.stderr) if job.stderr else '')
        except (LrmsError, OSError) as e:
            self.apply_event(record, JobEvent.FAILURE, 'LRMS submission failed: %s' % e, now=now)
            return
        self.status_dir.save_local_id(record)
        self.apply_event(record, JobEvent.STAGED, now=now)

    def _poll_lrms(self, record, now):
        local = self.lrms.find(record.gridid)
        if local is None:
            self.apply_event(record, JobEvent.FAILURE, 'job lost by the LRMS', now=now)
        elif record.state == JobState.INLRMS_Q:
            if local.state != QUEUED:
                self.apply_event(record, JobEvent.LRMS_RUNNING, now=now)
        elif local.state == EXITED:
            record.exit_code = local.exit_code
            self.apply_event(record, JobEvent.LRMS_EXITED, now=now)

    def _remove_from_lrms(self, record):
        local = self.lrms.find(record.gridid)
        if local is not None and local.state != EXITED:
            try:
                self.lrms.qdel(local.local_id)
            except LrmsError as e:
                logger.warning('%s: qdel failed: %s', record.gridid, e)

    def stage_out(self, record, now):
        """
        Delivers outputs with a destination and checks the retained ones. After a
        nonzero exit only the outputs the job did produce are handled.
        """
        session = FileStore(record.session_dir)
        succeeded = record.exit_code == 0
        failure = ''
        for name, destination in record.job.outputfiles:
            if not succeeded and not session.exists(name):
                continue
            if not destination:
                if not session.exists(name):
                    failure = 'output missing: %s' % name
                    break
                continue
            try:
                deliver_output(self.transport, session, name, destination, self.subject,
                               self.config.local_se_paths, self.config.rc_url,
                               self.config.retries, self.config.backoff)
            except StagingError as e:
                failure = str(e)
                break
        if not failure and not succeeded:
            failure = exit_reason(record.exit_code)
        if failure:
            self.apply_event(record, JobEvent.FAILURE, failure, now=now)
        else:
            self.apply_event(record, JobEvent.STAGED_OUT, now=now)

    # reporting

    def _notify(self, record, old, new, now):
        if record.job.notify and self.notifications is not None:
            self.notifications.info('%s %s %s->%s notify:%s', rfc3339(now), record.gridid,
                                    old.label, new.label, record.job.notify)

    def _tell_listeners(self, record, old, new):
        for listener in self.listeners:
            try:
                listener(record, old, new)
            except Exception:
                logger.exception('job listener failed')
