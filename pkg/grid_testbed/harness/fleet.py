"""
A whole testbed built from one FleetConfig: GIIS tree, replica catalog,
storage elements and clusters. In-process by default (deterministic, driven
by a logical clock), or served over TCP for the daemons.
"""
import logging
import os
import time

from grid_testbed.broker.joblist import JobList
from grid_testbed.broker.ui import UserInterface
from grid_testbed.grid_manager.cluster import ClusterNode
from grid_testbed.harness.ledger import TransferLedger
from grid_testbed.infomodel.giis import GiisService, Registration
from grid_testbed.replica_catalog.catalog import ReplicaCatalog, ReplicaCatalogService
from grid_testbed.storage.storage_element import StorageElementService
from grid_testbed.utils.clock import LogicalClock
from grid_testbed.wire.transport import (
    InProcessTransport, ServiceRegistry, ServiceServer, service_subject)

logger = logging.getLogger(__name__)

KINDS = ('giis', 'rc', 'se', 'cluster')

DEMO_SUBJECTS = (
    '/O=Grid/O=NorduGrid/OU=uio.no/CN=Jane Doe',
    '/O=Grid/O=NorduGrid/OU=nbi.dk/CN=John Smith',
    '/O=Grid/O=NorduGrid/OU=lu.se/CN=Anna Berg',
)


class Fleet:
    """
    :param kinds: service kinds to build (all by default), daemons build one kind
    :param names: restricts clusters / storage elements / giises to these names
    """

    def __init__(self, config, clock=None, transport=None, ledger=None, kinds=KINDS, names=None):
        self.config = config
        self.clock = clock or LogicalClock()
        self.ledger = ledger if ledger is not None else TransferLedger()
        self.transport = transport or InProcessTransport('harness', self.ledger,
                                                         registry=ServiceRegistry())
        self.services = {}
        self.giises = {}
        self.storage_elements = {}
        self.clusters = {}
        self.rc = None
        self.registrations = []
        self.servers = []

        def wanted(kind, name=None):
            return kind in kinds and (names is None or name is None or name in names)

        for name, cfg in config.giises.items():
            if wanted('giis', name):
                service = GiisService(name, self.transport, self.clock, cfg.allowlist, cfg.ttl,
                                      cfg.country)
                self._add(cfg.endpoint, service)
                self.giises[name] = service
                self._register(cfg.parent_giis, cfg.url, 'giis', 'giis', name, cfg.ttl)

        if config.rc is not None and wanted('rc'):
            cfg = config.rc
            os.makedirs(os.path.dirname(cfg.log_path), exist_ok=True)
            self.rc = ReplicaCatalogService(cfg.name, ReplicaCatalog(cfg.log_path), cfg.writers,
                                            cfg.url, cfg.country)
            self._add(cfg.endpoint, self.rc)
            self._register(cfg.parent_giis, cfg.url, 'gris', 'rc', cfg.name, cfg.ttl)

        for name, cfg in config.storage_elements.items():
            if wanted('se', name):
                service = StorageElementService(cfg)
                endpoint = '%s:%d' % (cfg.host, cfg.port)
                self._add(endpoint, service)
                self.storage_elements[name] = service
                self._register(cfg.parent_giis, 'ngp://' + endpoint, 'gris', 'se', name, cfg.ttl)

        for name, cfg in config.clusters.items():
            if wanted('cluster', name):
                node = ClusterNode(cfg, self.transport, self.clock)
                self._add(cfg.endpoint, node.service)
                self.clusters[name] = node

        if isinstance(self.transport, InProcessTransport):
            self.attach_all()

    def _add(self, endpoint, service):
        self.services[endpoint] = service
        if isinstance(self.transport, InProcessTransport):
            self.transport.registry.register(endpoint, service)

    def _register(self, parent_url, child_url, kind, role, name, ttl):
        if parent_url:
            transport = self.transport.for_role(role)
            self.registrations.append(Registration(transport, parent_url, child_url, kind,
                                                   service_subject(name), ttl, self.clock))

    # driving

    def attach_all(self, now=None):
        for registration in self.registrations:
            registration.maybe_attach(now)
        for node in self.clusters.values():
            node.maybe_attach(now)

    def tick(self, now=None):
        now = self.clock.now() if now is None else now
        self.attach_all(now)
        for node in self.clusters.values():
            node.tick(now)

    def advance(self, seconds, real_pause=0.0):
        """moves the logical clock on, lets job processes run, then ticks"""
        self.clock.advance(seconds)
        if real_pause:
            time.sleep(real_pause)
        self.tick()

    def run_until(self, predicate, max_steps=600, step=0.1, real_pause=0.01):
        """
        Ticks until predicate() holds.
        :return: True when it did, False when max_steps ran out
        """
        for _ in range(max_steps):
            if predicate():
                return True
            self.advance(step, real_pause)
        return predicate()

    # clients and faults

    def ui(self, subject=DEMO_SUBJECTS[0], joblist_path=None):
        top = self.config.top_giis
        return UserInterface(subject, self.transport,
                             giis_url=top.url if top else '',
                             rc_url=self.config.rc.url if self.config.rc else '',
                             joblist=JobList(joblist_path) if joblist_path else None)

    def endpoint(self, name):
        """endpoint of a named cluster, storage element, giis, or 'rc'"""
        config = self.config
        if name in config.clusters:
            return config.clusters[name].endpoint
        if name in config.storage_elements:
            cfg = config.storage_elements[name]
            return '%s:%d' % (cfg.host, cfg.port)
        if name in config.giises:
            return config.giises[name].endpoint
        if name == 'rc' and config.rc is not None:
            return config.rc.endpoint
        raise KeyError('no service named %s' % name)

    def take_down(self, name):
        logger.info('fault: %s down', name)
        self.transport.registry.take_down(self.endpoint(name))

    def bring_up(self, name):
        logger.info('fault: %s back up', name)
        self.transport.registry.bring_up(self.endpoint(name))

    def restart_grid_manager(self, cluster_name):
        logger.info('fault: restarting the grid manager of %s', cluster_name)
        return self.clusters[cluster_name].restart_grid_manager()

    # TCP serving

    def serve(self):
        for endpoint, service in self.services.items():
            host, port = endpoint.rsplit(':', 1)
            server = ServiceServer(service, host, int(port))
            server.start()
            self.servers.append(server)
        return self.servers

    def shutdown(self):
        for server in self.servers:
            server.shutdown()
            server.server_close()
        self.servers = []
        for node in self.clusters.values():
            node.lrms.shutdown()
