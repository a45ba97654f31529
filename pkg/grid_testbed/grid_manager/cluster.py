"""
A computing element in one process: gatekeeper, session file access and the
GRIS on the front-end, the Grid Manager behind them and the LRMS beneath.
"""
import logging
import threading

import psutil

from grid_testbed.grid_manager.config import ClusterConfig
from grid_testbed.grid_manager.manager import GridManager
from grid_testbed.grid_manager.records import JobState
from grid_testbed.infomodel.giis import Registration, answer_query
from grid_testbed.infomodel.gris import ClusterState, QueueState, gris_snapshot
from grid_testbed.lrms.pbs_simulator import PbsSimulator, Defaults as LrmsDefaults
from grid_testbed.storage.file_store import FileStore
from grid_testbed.utils.clock import WallClock
from grid_testbed.wire.protocol import make_response
from grid_testbed.wire.transport import Service, BadRequest, Forbidden, NotFound, service_subject
from grid_testbed.xrsl.job_description import parse_job
from grid_testbed.xrsl.parser import XrslError

logger = logging.getLogger(__name__)

MB = 1024 * 1024
SESSIONS_PREFIX = '/sessions/'
JOBS_TARGET = '/jobs'


def split_session_target(target):
    """'/sessions/<gridid>/<file>' -> (gridid, file), file '' for the directory itself"""
    if not target.startswith(SESSIONS_PREFIX):
        raise BadRequest('target must be %s<gridid>/<file>' % SESSIONS_PREFIX)
    gridid, _, name = target[len(SESSIONS_PREFIX):].partition('/')
    if not gridid:
        raise BadRequest('missing grid id in %s' % target)
    return gridid, name


def session_target(gridid, name=''):
    return '%s%s/%s' % (SESSIONS_PREFIX, gridid, name)


class ClusterService(Service):
    role = 'cluster'
    handlers = {
        'SUBMIT': 'handle_submit',
        'CANCEL': 'handle_cancel',
        'CLEAN': 'handle_clean',
        'PUT': 'handle_put',
        'GET': 'handle_get',
        'LIST': 'handle_list',
        'QUERY': 'handle_query',
    }

    def __init__(self, node):
        super().__init__(node.config.name, node.config.gridmap)
        self.node = node

    @property
    def gm(self):
        return self.node.gm

    # gatekeeper

    def handle_submit(self, request):
        self.check_authorized(request)
        job = self._job(request)
        if job.action != 'submit':
            return self._control(request, job.action)
        try:
            record = self.gm.submit(request.subject, job)
        except ValueError as e:
            raise BadRequest(str(e))
        return make_response(200, headers={'GridId': record.gridid})

    def handle_cancel(self, request):
        self.check_authorized(request)
        return self._control(request, 'cancel')

    def handle_clean(self, request):
        self.check_authorized(request)
        return self._control(request, 'clean')

    @staticmethod
    def _job(request):
        try:
            return parse_job(request.body)
        except XrslError as e:
            raise BadRequest(str(e))

    def _control(self, request, action):
        if request.body:
            requested = self._job(request).action
            if requested != action:
                raise BadRequest('action %s sent with verb %s' % (requested, request.verb))
        gridid = request.header('GridId')
        if not gridid:
            raise BadRequest('%s without GridId header' % action)
        try:
            if action == 'cancel':
                self.gm.request_cancel(gridid, request.subject)
            else:
                self.gm.request_clean(gridid, request.subject)
        except KeyError:
            raise NotFound('unknown job %s' % gridid)
        except PermissionError as e:
            raise Forbidden(str(e))
        return make_response(200, headers={'GridId': gridid})

    # session directories

    def _session(self, request):
        self.check_authorized(request)
        gridid, name = split_session_target(request.target)
        try:
            record = self.gm.record(gridid)
        except KeyError:
            raise NotFound('unknown job %s' % gridid)
        if record.owner != request.subject:
            raise Forbidden('%s is not the owner of %s' % (request.subject, gridid))
        if record.state == JobState.DELETED:
            raise NotFound('job %s has been deleted' % gridid)
        return record, FileStore(record.session_dir), name

    def handle_put(self, request):
        record, session, name = self._session(request)
        if record.is_terminal:
            raise Forbidden('job %s has ended' % record.gridid)
        if not name:
            raise BadRequest('PUT needs a file name')
        overwrite = request.header('Overwrite', '').lower() == 'true'
        session.put(name, request.body, overwrite=overwrite)
        return make_response(200)

    def handle_get(self, request):
        _, session, name = self._session(request)
        if not name:
            raise BadRequest('GET needs a file name')
        return make_response(200, body=session.get(name))

    def handle_list(self, request):
        record, session, name = self._session(request)
        listing = session.list(name or '/')
        if request.header('Select', '').lower() == 'outputs':
            job = record.job
            wanted = set(job.retained_outputs) | {n for n in (job.stdout, job.stderr) if n}
            listing = [(n, size) for n, size in listing if n in wanted]
        lines = ''.join('%s %d\n' % item for item in listing)
        return make_response(200, body=lines.encode('utf-8'))

    # GRIS

    def handle_query(self, request):
        return answer_query(request, self.node.snapshot())


class ClusterNode:
    """
    Wires the parts of one cluster together. `tick` drives the LRMS scheduler and
    the Grid Manager, `run` does so periodically for a daemon.
    """

    def __init__(self, config: ClusterConfig, transport, clock=None, lrms=None):
        self.config = config
        config.make_dirs()
        self.clock = clock or WallClock()
        self.transport = transport.for_role('cluster')
        self.lrms = lrms or PbsSimulator(config.queues, config.cpus, self.clock)
        self.subject = service_subject(config.name)
        self.gm = None
        self.restart_grid_manager()
        self.service = ClusterService(self)
        self.registration = (Registration(self.transport, config.parent_giis, config.contact, 'gris',
                                          self.subject, config.ttl, self.clock)
                             if config.parent_giis else None)

    def restart_grid_manager(self):
        """A fresh Grid Manager over the same status directory and LRMS."""
        listeners = self.gm.listeners if self.gm is not None else []
        self.gm = GridManager(self.config, self.lrms, self.transport, self.clock)
        self.gm.listeners.extend(listeners)
        self.gm.recover()
        return self.gm

    def tick(self, now=None):
        now = self.clock.now() if now is None else now
        self.lrms.scheduler_tick(now)
        self.gm.step_all(now)
        # jobs queued during this step start at once when slots are free
        if self.lrms.scheduler_tick(now):
            self.gm.step_all(now)
        self.maybe_attach(now)

    def maybe_attach(self, now=None):
        return self.registration is not None and self.registration.maybe_attach(now)

    def cluster_state(self):
        config = self.config
        queues = [QueueState(q.name, q.max_cputime, q.max_memory, q.max_disk, q.cpus,
                             running=len(self.lrms.running(q.name)),
                             queued=len(self.lrms.queued(q.name)))
                  for q in config.queues]
        usage = psutil.disk_usage(config.session_root)
        return ClusterState(
            name=config.name, country=config.country, aliases=list(config.aliases),
            total_cpus=config.cpus, free_cpus=max(0, self.lrms.free_cpus()),
            runtimeenvironments=frozenset(config.runtimeenvironments),
            local_se_paths=list(config.local_se_paths), queues=queues,
            authorized=list(config.gridmap), contact=config.contact,
            session_free_mb=usage.free // MB, session_total_mb=usage.total // MB)

    def snapshot(self):
        state = self.cluster_state()
        return gris_snapshot(state, self.gm.records(), state.authorized)

    def run(self, stop_event=None, period=None):
        stop_event = stop_event or threading.Event()
        period = LrmsDefaults.tick_seconds if period is None else period
        logger.info('cluster %s running, contact %s', self.config.name, self.config.contact)
        try:
            while not stop_event.wait(period):
                try:
                    self.tick()
                except Exception:
                    logger.exception('%s: tick failed', self.config.name)
        finally:
            self.lrms.shutdown()
