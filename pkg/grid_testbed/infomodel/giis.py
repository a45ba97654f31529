"""
GIIS: an index over registered GRIS / GIIS children answering filtered
queries from per-child caches that are refreshed on demand once their ttl
has elapsed.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import List, Optional

from grid_testbed.infomodel.entries import Entry, serialize_entries, parse_entries
from grid_testbed.infomodel.filters import filter_parse, FilterParseError, MATCH_ALL
from grid_testbed.utils.clock import WallClock
from grid_testbed.utils.parallelism import map_threads
from grid_testbed.wire.protocol import make_response
from grid_testbed.wire.transport import (
    Service, BadRequest, RemoteError, service_subject)

logger = logging.getLogger(__name__)

KINDS = ('gris', 'giis')


class Defaults:
    ttl = 30.0
    # unrefreshed registrations older than prune_factor * ttl are dropped
    prune_factor = 3


@dataclass
class GiisChild:
    endpoint: str
    kind: str
    ttl: float
    registered_at: float
    last_fetch: Optional[float] = None
    cache: List[Entry] = field(default_factory=list)
    fetch_count: int = 0
    partial: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def fresh(self, now):
        return self.last_fetch is not None and now - self.last_fetch < self.ttl


def query_filter(request):
    """the Filter of a QUERY request, match-all when absent"""
    text = request.header('Filter')
    if not text:
        return MATCH_ALL
    try:
        return filter_parse(text)
    except FilterParseError as e:
        raise BadRequest(str(e))


def answer_query(request, entries, partial=False):
    f = query_filter(request)
    body = serialize_entries([e for e in entries if f.matches(e)]).encode('utf-8')
    headers = {'Partial': 'true'} if partial else {}
    return make_response(200, headers=headers, body=body)


class GiisService(Service):
    role = 'giis'
    handlers = {
        'QUERY': 'handle_query',
        'ATTACH': 'handle_attach',
        'CHILDREN': 'handle_children',
    }

    def __init__(self, name, transport, clock=None, allowlist=('*',), ttl=None, country='localhost'):
        super().__init__(name, allowlist)
        self.transport = transport.for_role(self.role)
        self.clock = clock or WallClock()
        self.ttl = Defaults.ttl if ttl is None else ttl
        self.country = country
        self.subject = service_subject(name)
        self._children = {}
        self._lock = threading.Lock()

    # registration

    def attach_child(self, endpoint, kind, ttl=None):
        if kind not in KINDS:
            raise BadRequest('unknown child kind %r' % kind)
        now = self.clock.now()
        with self._lock:
            child = self._children.get(endpoint)
            if child is None:
                child = GiisChild(endpoint, kind, self.ttl if ttl is None else ttl, now)
                self._children[endpoint] = child
                logger.info('%s: attached %s %s', self.name, kind, endpoint)
            else:
                child.registered_at = now
                child.kind = kind
                if ttl is not None:
                    child.ttl = ttl
        return child

    def prune(self):
        now = self.clock.now()
        with self._lock:
            expired = [ep for ep, child in self._children.items()
                       if now - child.registered_at >= Defaults.prune_factor * child.ttl]
            for endpoint in expired:
                logger.info('%s: pruning silent child %s', self.name, endpoint)
                del self._children[endpoint]

    def children(self):
        self.prune()
        with self._lock:
            return list(self._children.values())

    # queries

    def giis_query(self, f=MATCH_ALL, recurse=True):
        """
        :return: (matching entries, partial) where partial tells that a child was skipped
        """
        f = filter_parse(f)
        children = [c for c in self.children() if recurse or c.kind == 'gris']
        results = map_threads(self._refreshed_cache, children)

        partial = False
        seen = set()
        matched = []
        for cache in results:
            if cache is None:
                partial = True
                continue
            cached_entries, child_partial = cache
            partial = partial or child_partial
            for entry in cached_entries:
                if entry.dn not in seen and f.matches(entry):
                    seen.add(entry.dn)
                    matched.append(entry)
        return matched, partial

    def _refreshed_cache(self, child):
        with child.lock:
            now = self.clock.now()
            if child.fresh(now):
                return child.cache, child.partial
            headers = {'Filter': str(MATCH_ALL),
                       'Recurse': 'true' if child.kind == 'giis' else 'false'}
            child.fetch_count += 1
            try:
                response = self.transport.call(child.endpoint, 'QUERY', '/mds', self.subject,
                                               headers=headers)
                fetched = parse_entries(response.body.decode('utf-8'))
            except (RemoteError, ValueError) as e:
                logger.warning('%s: child %s skipped: %s', self.name, child.endpoint, e)
                child.last_fetch = None
                return None
            child.cache = fetched
            child.last_fetch = now
            child.partial = response.header('Partial', '').lower() == 'true'
            return child.cache, child.partial

    # wire handlers

    def handle_query(self, request):
        f = query_filter(request)
        recurse = request.header('Recurse', 'true').lower() != 'false'
        entries, partial = self.giis_query(f, recurse)
        return answer_query(request, entries, partial)

    def handle_attach(self, request):
        self.check_authorized(request)
        endpoint = request.header('Child')
        if not endpoint:
            raise BadRequest('ATTACH without Child header')
        ttl = request.header('Ttl')
        try:
            ttl = float(ttl) if ttl else None
        except ValueError:
            raise BadRequest('invalid Ttl %r' % ttl)
        self.attach_child(endpoint, request.header('Kind', 'gris'), ttl)
        return make_response(200)

    def handle_children(self, request):
        lines = ''.join('%s %s\n' % (c.kind, c.endpoint) for c in self.children())
        return make_response(200, body=lines.encode('utf-8'))


def attach(transport, giis_url, child_url, kind, subject, ttl=None):
    """Registers child_url with the GIIS at giis_url (used by every resource on boot)."""
    headers = {'Child': child_url, 'Kind': kind}
    if ttl is not None:
        headers['Ttl'] = '%g' % ttl
    return transport.call(giis_url, 'ATTACH', '/mds', subject, headers=headers)


class Registration:
    """
    Keeps a child registered with its parent GIIS: ATTACH on the first call,
    then again whenever ttl has elapsed since the last success.
    """

    def __init__(self, transport, parent_url, child_url, kind, subject, ttl=None, clock=None):
        self.transport = transport
        self.parent_url = parent_url
        self.child_url = child_url
        self.kind = kind
        self.subject = subject
        self.ttl = Defaults.ttl if ttl is None else ttl
        self.clock = clock or WallClock()
        self.last_attach = None

    def maybe_attach(self, now=None):
        now = self.clock.now() if now is None else now
        if self.last_attach is not None and now - self.last_attach < self.ttl:
            return False
        try:
            attach(self.transport, self.parent_url, self.child_url, self.kind, self.subject,
                   self.ttl)
        except RemoteError as e:
            logger.warning('attaching %s to %s failed: %s', self.child_url, self.parent_url, e)
            return False
        self.last_attach = now
        return True
