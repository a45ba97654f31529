"""
The user interface library: the broker runs here, at the client, against
information fetched from the GIIS. Job status is only ever read from the
information system, files move directly between the client, clusters and
storage elements.
"""
import dataclasses
import logging
import os

from grid_testbed.broker.matching import ResolvedInput, clusters_from_entries, match, rank
from grid_testbed.grid_manager.cluster import JOBS_TARGET, session_target
from grid_testbed.infomodel.entries import parse_entries
from grid_testbed.infomodel.filters import Eq, And, Or, Present
from grid_testbed.replica_catalog.catalog import lookup as rc_lookup
from grid_testbed.storage.file_store import FileStore
from grid_testbed.storage.storage_element import parse_listing
from grid_testbed.utils.instrumentation import LogLongCallsMeta, log_errors
from grid_testbed.wire.transport import RemoteError, endpoint_of
from grid_testbed.xrsl.job_description import action_request, serialize

logger = logging.getLogger(__name__)

RC_SCHEME = 'rc:'
UNKNOWN = 'UNKNOWN'

DISCOVERY_FILTER = Or((Eq('objectclass', 'nordugrid-cluster'),
                       Eq('objectclass', 'nordugrid-pbsqueue'),
                       Eq('objectclass', 'nordugrid-authuser')))


class SubmissionError(Exception):
    pass


class JobNotFound(LookupError):
    pass


def job_filter(gridid):
    return And((Eq('objectclass', 'nordugrid-pbsjob'), Eq('nordugrid-pbsjob-globalid', gridid)))


def cluster_filter(name):
    return And((Eq('objectclass', 'nordugrid-cluster'), Eq('nordugrid-cluster-name', name)))


def cluster_of(gridid):
    """the cluster name a grid id was issued by"""
    name, sep, _ = gridid.rpartition(':')
    if not sep or not name:
        raise JobNotFound('malformed grid id %s' % gridid)
    return name


class UserInterface(LogLongCallsMeta):
    """One client session acting as `subject`."""

    def __init__(self, subject, transport, giis_url='', rc_url='', joblist=None):
        self.subject = subject
        self.transport = transport.for_role('ui')
        self.giis_url = giis_url
        self.rc_url = rc_url
        self.joblist = joblist
        self.warnings = []

    # information system

    def query(self, f=Present('objectclass'), giis=None, recurse=True):
        """:return: (entries, partial)"""
        giis = giis or self.giis_url
        if not giis:
            raise SubmissionError('no GIIS configured')
        response = self.transport.call(
            giis, 'QUERY', '/mds', self.subject,
            headers={'Filter': str(f), 'Recurse': 'true' if recurse else 'false'})
        partial = response.header('Partial', '').lower() == 'true'
        return parse_entries(response.body.decode('utf-8')), partial

    def discover(self, giis=None):
        entries, partial = self.query(DISCOVERY_FILTER, giis)
        if partial:
            warning = 'partial information from %s: some resources did not answer' % (
                giis or self.giis_url)
            logger.warning(warning)
            self.warnings.append(warning)
        return clusters_from_entries(entries, self.subject)

    # brokering

    def resolve_inputs(self, job, rc=None):
        """
        Picks the first replica of every "rc:<lfn>" input.
        :raises SubmissionError: an lfn the catalog does not know
        """
        resolved = []
        for name, source in job.inputfiles:
            if not source.startswith(RC_SCHEME):
                continue
            lfn = source[len(RC_SCHEME):].lstrip('/')
            rc = rc or self.rc_url
            if not rc:
                raise SubmissionError('unresolved input %s: no replica catalog' % lfn)
            try:
                pfns = rc_lookup(self.transport, rc, lfn, self.subject)
            except RemoteError as e:
                if e.code == 404:
                    raise SubmissionError('unresolved input %s' % lfn)
                raise
            if not pfns:
                raise SubmissionError('unresolved input %s' % lfn)
            resolved.append(ResolvedInput(name, pfns[0], tuple(pfns)))
        return resolved

    def rank(self, job, giis=None):
        return rank(job, self.discover(giis), self.subject)

    def match(self, job, giis=None):
        return match(job, self.discover(giis), self.subject)

    # job control

    def submit(self, job, target, local_files=None, resolved=None):
        """
        Sends the job to the target cluster and uploads the inputs it expects from the user.
        :param local_files: name -> bytes of inputs without a source
        :param resolved: replica choices, looked up when not given
        :return: grid id
        """
        local_files = local_files or {}
        resolved = {r.name: r.chosen_pfn for r in
                    (self.resolve_inputs(job) if resolved is None else resolved)}
        job = dataclasses.replace(
            job, queue=target.queue.name,
            inputfiles=[(name, resolved.get(name, source)) for name, source in job.inputfiles])
        missing = [name for name in job.uploads if name not in local_files]
        if missing:
            raise SubmissionError('no local file for input %s' % missing[0])

        contact = target.cluster.contact
        response = self.transport.call(contact, 'SUBMIT', JOBS_TARGET, self.subject,
                                       body=serialize(job).encode('utf-8'))
        gridid = response.header('GridId')
        for name in job.uploads:
            try:
                self.transport.call(contact, 'PUT', session_target(gridid, name), self.subject,
                                    headers={'Overwrite': 'true'}, body=local_files[name])
            except RemoteError as e:
                self._cancel_quietly(gridid, contact)
                raise SubmissionError('upload of %s failed: %s' % (name, e))
        if self.joblist is not None:
            self.joblist.add(gridid, contact)
        logger.info('submitted %s to %s/%s', gridid, target.cluster.name, target.queue.name)
        return gridid

    def submit_best(self, job, local_files=None, giis=None):
        """Discovery, replica resolution, matching and submission to the best candidate."""
        resolved = self.resolve_inputs(job)
        candidates = self.match(job, giis)
        if not candidates:
            raise SubmissionError('no resource matches the job')
        return self.submit(job, candidates[0], local_files, resolved)

    @log_errors('best-effort cancel after a failed upload')
    def _cancel_quietly(self, gridid, contact):
        self.cancel(gridid, contact)

    def contact_for(self, gridid, giis=None):
        """The cluster contact of a job: from the job list, else from the GIIS."""
        if self.joblist is not None:
            contact = self.joblist.contact(gridid)
            if contact:
                return contact
        entries, _ = self.query(cluster_filter(cluster_of(gridid)), giis)
        for entry in entries:
            contact = entry.first('nordugrid-cluster-contactstring')
            if contact:
                return contact
        raise JobNotFound('no contact for job %s' % gridid)

    @LogLongCallsMeta.do_not_decorate
    def status(self, gridid, giis=None):
        """The job's state as published by its cluster, UNKNOWN when not published."""
        entries, _ = self.query(job_filter(gridid), giis)
        for entry in entries:
            return entry.first('nordugrid-pbsjob-status', UNKNOWN)
        return UNKNOWN

    @LogLongCallsMeta.do_not_decorate
    def job_info(self, gridid, giis=None):
        entries, _ = self.query(job_filter(gridid), giis)
        return entries[0] if entries else None

    def fetch_outputs(self, gridid, destdir, contact=None):
        """
        Downloads the retained outputs (and stdout / stderr) of a job.
        :return: local paths written
        """
        contact = contact or self.contact_for(gridid)
        response = self.transport.call(contact, 'LIST', session_target(gridid), self.subject,
                                       headers={'Select': 'outputs'})
        store = FileStore(destdir)
        written = []
        for name, _ in parse_listing(response.body):
            data = self.transport.call(contact, 'GET', session_target(gridid, name),
                                       self.subject).body
            store.put(name, data, overwrite=True)
            written.append(os.path.join(store.root, name))
        return written

    def cancel(self, gridid, contact=None):
        self._control('CANCEL', 'cancel', gridid, contact)

    def clean(self, gridid, contact=None):
        self._control('CLEAN', 'clean', gridid, contact)
        if self.joblist is not None:
            self.joblist.remove(gridid)

    def _control(self, verb, action, gridid, contact):
        contact = contact or self.contact_for(gridid)
        self.transport.call(endpoint_of(contact), verb, JOBS_TARGET, self.subject,
                            headers={'GridId': gridid},
                            body=action_request(action).encode('utf-8'))
