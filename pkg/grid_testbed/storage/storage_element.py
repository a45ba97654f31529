"""
Storage element: a file service over a local directory, authorized per
certificate subject and path prefix, reachable as ngse://host:port/path.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional

from grid_testbed.infomodel.entries import Entry, se_dn
from grid_testbed.infomodel.giis import answer_query
from grid_testbed.storage.file_store import FileStore, normalize
from grid_testbed.wire.protocol import authorize, make_response
from grid_testbed.wire.transport import Service, Forbidden, Conflict, endpoint_of, path_of

logger = logging.getLogger(__name__)

SCHEME = 'ngse'
MB = 1024 * 1024
RIGHTS = ('read', 'write')


@dataclass(frozen=True)
class AclRule:
    pattern: str
    prefix: str
    rights: FrozenSet[str]

    def covers(self, path):
        prefix = '/' + normalize(self.prefix) if normalize(self.prefix) != '.' else '/'
        return prefix == '/' or path == prefix or path.startswith(prefix + '/')


@dataclass
class SeConfig:
    root: str
    acl: List[AclRule] = field(default_factory=list)
    advertised_name: str = 'localhost'
    capacity_mb: int = 1024
    country: str = 'localhost'
    url: str = ''
    host: str = 'localhost'
    port: int = 0
    parent_giis: Optional[str] = None
    ttl: Optional[float] = None


def parse_acl(text):
    """
    One rule per line: "<subject pattern> <path prefix> <rights>", rights a
    comma separated subset of read,write. Subject patterns may contain spaces.
    """
    rules = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        try:
            pattern, prefix, rights = line.rsplit(None, 2)
        except ValueError:
            raise ValueError('acl line %d: expected "<subject> <prefix> <rights>": %r' % (n, line))
        rights = frozenset(r.strip() for r in rights.split(','))
        if not rights <= set(RIGHTS):
            raise ValueError('acl line %d: unknown rights %s' % (n, sorted(rights - set(RIGHTS))))
        rules.append(AclRule(pattern, prefix, rights))
    return rules


def acl_allows(acl, subject, path, right):
    """granted by the union of every matching rule, so adding a rule never revokes access"""
    path = '/' + normalize(path) if normalize(path) != '.' else '/'
    return any(right in rule.rights and rule.covers(path) and authorize(subject, [rule.pattern])
               for rule in acl)


def used_mb(store):
    return int(math.ceil(store.used_bytes() / MB))


def se_entry(cfg: SeConfig, store=None):
    store = store or FileStore(cfg.root)
    return Entry.create(se_dn(cfg.advertised_name, cfg.country), 'nordugrid-se',
                        nordugrid_se_name=cfg.advertised_name,
                        nordugrid_se_url=cfg.url,
                        nordugrid_se_totalspace=cfg.capacity_mb,
                        nordugrid_se_freespace=max(0, cfg.capacity_mb - used_mb(store)))


class StorageElementService(Service):
    role = 'se'
    handlers = {
        'PUT': 'handle_put',
        'GET': 'handle_get',
        'LIST': 'handle_list',
        'DEL': 'handle_delete',
        'STAT': 'handle_stat',
        'QUERY': 'handle_query',
    }

    def __init__(self, cfg: SeConfig):
        super().__init__(cfg.advertised_name)
        self.cfg = cfg
        self.store = FileStore(cfg.root)

    def _require(self, request, right):
        if not acl_allows(self.cfg.acl, request.subject, request.target, right):
            raise Forbidden('%s has no %s right on %s' % (request.subject, right, request.target))

    def handle_put(self, request):
        self._require(request, 'write')
        current = self.store.stat(request.target) if self.store.exists(request.target) else 0
        growth = len(request.body) - current
        if growth > 0 and self.store.used_bytes() + growth > self.cfg.capacity_mb * MB:
            raise Conflict('storage element full')
        overwrite = request.header('Overwrite', '').lower() == 'true'
        self.store.put(request.target, request.body, overwrite=overwrite)
        logger.debug('%s: stored %s (%d bytes)', self.name, request.target, len(request.body))
        return make_response(200)

    def handle_get(self, request):
        self._require(request, 'read')
        return make_response(200, body=self.store.get(request.target))

    def handle_list(self, request):
        self._require(request, 'read')
        lines = ''.join('%s %d\n' % item for item in self.store.list(request.target))
        return make_response(200, body=lines.encode('utf-8'))

    def handle_delete(self, request):
        self._require(request, 'write')
        self.store.delete(request.target)
        return make_response(200)

    def handle_stat(self, request):
        self._require(request, 'read')
        return make_response(200, headers={'Size': str(self.store.stat(request.target))})

    def handle_query(self, request):
        return answer_query(request, [se_entry(self.cfg, self.store)])


def parse_listing(body):
    listing = []
    for line in body.decode('utf-8').splitlines():
        name, _, size = line.rpartition(' ')
        if name:
            listing.append((name, int(size)))
    return listing


def se_url(endpoint, path):
    return '%s://%s/%s' % (SCHEME, endpoint, normalize(path))


def put_file(transport, url, data, subject, overwrite=False):
    headers = {'Overwrite': 'true'} if overwrite else {}
    transport.call(endpoint_of(url), 'PUT', path_of(url), subject, headers=headers, body=data)


def get_file(transport, url, subject):
    return transport.call(endpoint_of(url), 'GET', path_of(url), subject).body


def list_files(transport, url, subject):
    return parse_listing(transport.call(endpoint_of(url), 'LIST', path_of(url), subject).body)
