"""
Fleet configuration: one INI file describing every service of a testbed.

    [fleet]
    workdir = state            ; per-service directories go here
    host = localhost

    [giis "nordic"]
    port = 39300
    ttl = 30

    [giis "norway"]
    port = 39301
    country = NO
    parent_giis = nordic       ; a [giis] name, or the URL of an external GIIS

    [cluster "alpha"]
    port = 39000
    country = NO
    parent_giis = norway
    cpus = 4
    queues = short:600:512:1000:2, long:36000:2048:4000:2
    gridmap = gridmap.txt      ; relative paths are relative to this file
    runtimeenvironments = OS/LINUX-2.4, APPS/ECHO-1.0

    [se "store1"]
    port = 39100
    acl = acl.txt
    capacity_mb = 512

    [rc]
    port = 39200
    writers = /O=Grid/O=NorduGrid/*
"""
import configparser
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from grid_testbed.grid_manager.config import ClusterConfig, Defaults as GmDefaults, read_gridmap
from grid_testbed.lrms.pbs_simulator import QueueConfig
from grid_testbed.storage.storage_element import SCHEME as SE_SCHEME, SeConfig, parse_acl

_SECTION = re.compile(r'(cluster|se|giis)\s+"([^"]+)"\Z')


class FleetConfigError(ValueError):
    pass


@dataclass
class GiisConfig:
    name: str
    host: str = 'localhost'
    port: int = 0
    country: str = 'localhost'
    ttl: float = 30.0
    parent_giis: Optional[str] = None
    allowlist: List[str] = field(default_factory=lambda: ['*'])

    @property
    def endpoint(self):
        return '%s:%d' % (self.host, self.port)

    @property
    def url(self):
        return 'ngp://%s' % self.endpoint


@dataclass
class RcConfig:
    name: str = 'rc'
    host: str = 'localhost'
    port: int = 0
    country: str = 'localhost'
    log_path: str = ''
    writers: List[str] = field(default_factory=list)
    parent_giis: Optional[str] = None
    ttl: float = 30.0

    @property
    def endpoint(self):
        return '%s:%d' % (self.host, self.port)

    @property
    def url(self):
        return 'ngp://%s' % self.endpoint


@dataclass
class FleetConfig:
    workdir: str
    clusters: Dict[str, ClusterConfig] = field(default_factory=dict)
    storage_elements: Dict[str, SeConfig] = field(default_factory=dict)
    giises: Dict[str, GiisConfig] = field(default_factory=dict)
    rc: Optional[RcConfig] = None

    @property
    def top_giis(self):
        """the first GIIS without a parent, the default entry point of clients"""
        for giis in self.giises.values():
            if not giis.parent_giis:
                return giis
        return None

    def endpoints(self):
        """endpoint -> role of every configured service"""
        roles = {}
        for c in self.clusters.values():
            roles['%s:%d' % (c.host, c.port)] = 'cluster'
        for s in self.storage_elements.values():
            roles['%s:%d' % (s.host, s.port)] = 'se'
        for g in self.giises.values():
            roles[g.endpoint] = 'giis'
        if self.rc is not None:
            roles[self.rc.endpoint] = 'rc'
        return roles


def _list(value):
    return [item.strip() for item in value.split(',') if item.strip()]


def _port(section, name):
    try:
        port = section.getint('port')
    except ValueError:
        raise FleetConfigError('%s: port is not an integer' % name)
    if port is None or not 0 < port < 65536:
        raise FleetConfigError('%s: a port in 1..65535 is required' % name)
    return port


def _path(base_dir, value):
    return value if os.path.isabs(value) else os.path.join(base_dir, value)


def parse_fleet(text, base_dir='.'):
    """
    :raises FleetConfigError: unreadable sections, duplicate ports, unknown parents
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(';',), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise FleetConfigError(str(e))

    fleet_section = parser['fleet'] if parser.has_section('fleet') else {}
    workdir = _path(base_dir, fleet_section.get('workdir', 'state'))
    default_host = fleet_section.get('host', 'localhost')
    fleet = FleetConfig(workdir=workdir)
    parents = {}

    try:
        for title in parser.sections():
            section = parser[title]
            host = section.get('host', default_host)
            if title == 'fleet':
                continue
            if title == 'rc':
                port = _port(section, title)
                fleet.rc = RcConfig(
                    name=section.get('name', host), host=host, port=port,
                    country=section.get('country', 'localhost'),
                    log_path=_path(base_dir, section['log']) if 'log' in section
                    else os.path.join(workdir, 'rc', 'catalog.log'),
                    writers=_list(section.get('writers', '*')),
                    ttl=section.getfloat('ttl', 30.0))
                parents['rc'] = section.get('parent_giis')
                continue

            match = _SECTION.match(title)
            if not match:
                raise FleetConfigError('unknown section [%s]' % title)
            kind, name = match.groups()
            port = _port(section, title)
            country = section.get('country', 'localhost')
            ttl = section.getfloat('ttl', 30.0)

            if kind == 'giis':
                fleet.giises[name] = GiisConfig(name, host, port, country, ttl,
                                                allowlist=_list(section.get('allowlist', '*')))
            elif kind == 'se':
                se_dir = os.path.join(workdir, 'se', name)
                acl = []
                if 'acl' in section:
                    with open(_path(base_dir, section['acl']), encoding='utf-8') as f:
                        acl = parse_acl(f.read())
                endpoint = '%s:%d' % (host, port)
                fleet.storage_elements[name] = SeConfig(
                    root=_path(base_dir, section['root']) if 'root' in section else se_dir,
                    acl=acl, advertised_name=section.get('advertised_name', name),
                    capacity_mb=section.getint('capacity_mb', 1024), country=country,
                    url='%s://%s' % (SE_SCHEME, endpoint), host=host, port=port, ttl=ttl)
            else:
                cluster_dir = os.path.join(workdir, 'cluster', name)
                gridmap = []
                if 'gridmap' in section:
                    gridmap = read_gridmap(_path(base_dir, section['gridmap']))
                fleet.clusters[name] = ClusterConfig(
                    name=name, host=host, port=port, country=country,
                    cpus=section.getint('cpus', 1),
                    queues=[QueueConfig.parse(q) for q in _list(section.get('queues', ''))],
                    gridmap=gridmap,
                    runtimeenvironments=_list(section.get('runtimeenvironments', '')),
                    local_se_paths=[_path(base_dir, p) for p in _list(section.get('local_se', ''))],
                    session_root=os.path.join(cluster_dir, 'session'),
                    control_dir=os.path.join(cluster_dir, 'control'),
                    ttl=ttl,
                    lifetime=section.getint('lifetime', GmDefaults.lifetime),
                    upload_timeout=section.getfloat('upload_timeout', GmDefaults.upload_timeout),
                    retries=section.getint('retries', GmDefaults.retries),
                    backoff=section.getfloat('backoff', GmDefaults.backoff),
                    notify_log=os.path.join(cluster_dir, 'notifications.log'),
                    aliases=_list(section.get('aliases', '')))
            parents[title] = section.get('parent_giis')
    except (ValueError, OSError, KeyError) as e:
        if isinstance(e, FleetConfigError):
            raise
        raise FleetConfigError(str(e))

    _check_ports(fleet)
    _resolve_parents(fleet, parents)
    if fleet.rc is not None:
        for cluster in fleet.clusters.values():
            cluster.rc_url = fleet.rc.url
    return fleet


def _check_ports(fleet):
    seen = {}
    services = ([('cluster %s' % n, c.host, c.port) for n, c in fleet.clusters.items()]
                + [('se %s' % n, s.host, s.port) for n, s in fleet.storage_elements.items()]
                + [('giis %s' % n, g.host, g.port) for n, g in fleet.giises.items()]
                + ([('rc', fleet.rc.host, fleet.rc.port)] if fleet.rc else []))
    for name, host, port in services:
        if (host, port) in seen:
            raise FleetConfigError('port %d used by both %s and %s' % (port, seen[host, port], name))
        seen[host, port] = name


def _resolve_parents(fleet, parents):
    def resolve(title, value):
        if not value:
            return None
        if value in fleet.giises:
            return fleet.giises[value].url
        if '://' in value or re.match(r'[^:/]+:\d+\Z', value):
            return value if '://' in value else 'ngp://' + value
        raise FleetConfigError('[%s]: parent_giis %r is neither a defined giis nor a URL'
                               % (title, value))

    for title, value in parents.items():
        url = resolve(title, value)
        if title == 'rc':
            fleet.rc.parent_giis = url
            continue
        kind, name = _SECTION.match(title).groups()
        target = {'cluster': fleet.clusters, 'se': fleet.storage_elements,
                  'giis': fleet.giises}[kind][name]
        target.parent_giis = url
    _check_giis_cycles(fleet, parents)


def _check_giis_cycles(fleet, parents):
    for name in fleet.giises:
        seen = {name}
        current = parents.get('giis "%s"' % name)
        while current in fleet.giises:
            if current in seen:
                raise FleetConfigError('giis %s: parent_giis chain loops through %s' % (name, current))
            seen.add(current)
            current = parents.get('giis "%s"' % current)


def load_fleet(path):
    with open(path, encoding='utf-8') as f:
        return parse_fleet(f.read(), os.path.dirname(os.path.abspath(path)))
