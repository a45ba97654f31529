"""
Replica catalog: logical file name -> ordered physical URLs, with an
append-only operation log ("REG <lfn> <pfn>" / "UNREG <lfn> <pfn>") replayed
at startup.
"""
import logging
import os
import threading
from collections import OrderedDict

from grid_testbed.infomodel.entries import Entry, rc_dn
from grid_testbed.infomodel.giis import answer_query
from grid_testbed.wire.protocol import make_response
from grid_testbed.wire.transport import Service, BadRequest, NotFound

logger = logging.getLogger(__name__)

RC_PREFIX = '/rc/'


def _check_name(value, what):
    if not value or any(c.isspace() for c in value):
        raise ValueError('%s must be a non-empty token without whitespace: %r' % (what, value))
    return value


class ReplicaCatalog:

    def __init__(self, log_path=None):
        self.log_path = log_path
        self._mappings = OrderedDict()
        self._lock = threading.RLock()
        if log_path and os.path.exists(log_path):
            self._replay()

    def _replay(self):
        with open(self.log_path, 'rb') as f:
            lines = f.read().split(b'\n')
        # a crash mid-append leaves a final line without its newline
        torn = lines.pop()
        for n, raw in enumerate(lines, 1):
            line = raw.decode('utf-8', errors='replace')
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ('REG', 'UNREG'):
                logger.warning('%s:%d: skipping malformed line %r', self.log_path, n, line)
                continue
            op, lfn, pfn = parts
            if op == 'REG':
                self._apply_register(lfn, pfn)
            else:
                self._apply_unregister(lfn, pfn)
        if torn:
            logger.warning('%s: dropping torn final line %r', self.log_path, torn)
            with open(self.log_path, 'r+b') as f:
                f.truncate(sum(len(raw) + 1 for raw in lines))
        logger.info('replica catalog replayed %d mappings from %s', len(self._mappings), self.log_path)

    def _log(self, op, lfn, pfn):
        if self.log_path:
            with open(self.log_path, 'a', encoding='utf-8') as f:
                f.write('%s %s %s\n' % (op, lfn, pfn))
                f.flush()
                os.fsync(f.fileno())

    def _apply_register(self, lfn, pfn):
        pfns = self._mappings.setdefault(lfn, [])
        if pfn in pfns:
            return False
        pfns.append(pfn)
        return True

    def _apply_unregister(self, lfn, pfn):
        pfns = self._mappings.get(lfn)
        if not pfns or pfn not in pfns:
            return False
        pfns.remove(pfn)
        if not pfns:
            del self._mappings[lfn]
        return True

    def register(self, lfn, pfn):
        _check_name(lfn, 'lfn')
        _check_name(pfn, 'pfn')
        with self._lock:
            if self._apply_register(lfn, pfn):
                self._log('REG', lfn, pfn)

    def unregister(self, lfn, pfn):
        _check_name(lfn, 'lfn')
        _check_name(pfn, 'pfn')
        with self._lock:
            if self._apply_unregister(lfn, pfn):
                self._log('UNREG', lfn, pfn)

    def lookup(self, lfn):
        """:raises KeyError: unknown lfn"""
        with self._lock:
            return list(self._mappings[lfn])

    def state(self):
        with self._lock:
            return {lfn: list(pfns) for lfn, pfns in self._mappings.items()}

    def __len__(self):
        return len(self._mappings)


def rc_entry(catalog, name, url, country='localhost'):
    return Entry.create(rc_dn(name, country), 'nordugrid-rc',
                        nordugrid_rc_name=name,
                        nordugrid_rc_url=url,
                        nordugrid_rc_lfncount=len(catalog))


class ReplicaCatalogService(Service):
    """REG / UNREG / LOOKUP on /rc/<lfn>, pfn in the "Pfn" header; QUERY /mds for its entry."""
    role = 'rc'
    handlers = {
        'REG': 'handle_register',
        'UNREG': 'handle_unregister',
        'LOOKUP': 'handle_lookup',
        'QUERY': 'handle_query',
    }

    def __init__(self, name, catalog, allowlist=(), url='', country='localhost'):
        super().__init__(name, allowlist)
        self.catalog = catalog
        self.url = url
        self.country = country

    @staticmethod
    def _lfn(request):
        if not request.target.startswith(RC_PREFIX) or len(request.target) == len(RC_PREFIX):
            raise BadRequest('target must be %s<lfn>' % RC_PREFIX)
        return request.target[len(RC_PREFIX):]

    @staticmethod
    def _pfn(request):
        pfn = request.header('Pfn')
        if not pfn:
            raise BadRequest('missing Pfn header')
        return pfn

    def handle_register(self, request):
        self.check_authorized(request)
        try:
            self.catalog.register(self._lfn(request), self._pfn(request))
        except ValueError as e:
            raise BadRequest(str(e))
        return make_response(200)

    def handle_unregister(self, request):
        self.check_authorized(request)
        try:
            self.catalog.unregister(self._lfn(request), self._pfn(request))
        except ValueError as e:
            raise BadRequest(str(e))
        return make_response(200)

    def handle_lookup(self, request):
        lfn = self._lfn(request)
        try:
            pfns = self.catalog.lookup(lfn)
        except KeyError:
            raise NotFound('unknown lfn %s' % lfn)
        return make_response(200, body=''.join(p + '\n' for p in pfns).encode('utf-8'))

    def handle_query(self, request):
        return answer_query(request, [rc_entry(self.catalog, self.name, self.url, self.country)])


def rc_target(lfn):
    return RC_PREFIX + lfn


def lookup(transport, rc_url, lfn, subject):
    """Client side LOOKUP, :raises RemoteError: 404 for unknown lfn"""
    response = transport.call(rc_url, 'LOOKUP', rc_target(lfn), subject)
    return [line for line in response.body.decode('utf-8').split('\n') if line]


def register(transport, rc_url, lfn, pfn, subject):
    transport.call(rc_url, 'REG', rc_target(lfn), subject, headers={'Pfn': pfn})


def unregister(transport, rc_url, lfn, pfn, subject):
    transport.call(rc_url, 'UNREG', rc_target(lfn), subject, headers={'Pfn': pfn})
