"""
Services, servers and client transports for NGP/1.

A Service maps request verbs to handler methods. It can be served over TCP
(ServiceServer) or registered with an InProcessTransport, which dispatches the
same encoded bytes by direct call for deterministic tests.
"""
import logging
import socket
import socketserver
import threading
from urllib.parse import urlsplit

from grid_testbed.wire.protocol import (
    ProtocolError, IncompleteMessage, EncodingError, Request, Response,
    make_request, make_response, encode, split_message, authorize)

logger = logging.getLogger(__name__)

MAX_HEAD_BYTES = 64 * 1024
RECV_BYTES = 64 * 1024

DEFAULT_PORTS = {
    'cluster': 39000,
    'se': 39100,
    'rc': 39200,
    'giis': 39300,
}


class ServiceError(Exception):
    code = 500

    def __init__(self, reason, headers=None):
        super().__init__(reason)
        self.reason = reason
        self.headers = headers or {}


class BadRequest(ServiceError):
    code = 400


class Forbidden(ServiceError):
    code = 403


class NotFound(ServiceError):
    code = 404


class Conflict(ServiceError):
    code = 409


class RemoteError(IOError):
    """A non-200 response (or no response at all, code None) seen by a client."""

    def __init__(self, code, reason, endpoint=None):
        where = ' from %s' % endpoint if endpoint else ''
        super().__init__('%s %s%s' % (code if code is not None else 'unreachable', reason, where))
        self.code = code
        self.reason = reason
        self.endpoint = endpoint


def endpoint_of(url):
    """'ngse://host:port/path', 'ngp://host:port' or 'host:port' -> 'host:port'"""
    if '://' not in url:
        url = 'ngp://' + url
    parts = urlsplit(url)
    if not parts.hostname or parts.port is None:
        raise ValueError('URL without host and port: %r' % url)
    return '%s:%d' % (parts.hostname, parts.port)


def path_of(url):
    return urlsplit(url).path or '/'


class Service:
    """
    Base of all NGP services. Subclasses set `role` and `handlers`
    (verb -> method name) and implement the handler methods, which take a
    Request and return a Response or raise ServiceError.
    """
    role = 'service'
    handlers = {}

    def __init__(self, name, allowlist=()):
        self.name = name
        self.allowlist = list(allowlist)

    def check_authorized(self, request, allowlist=None):
        allowlist = self.allowlist if allowlist is None else allowlist
        if not authorize(request.subject, allowlist):
            raise Forbidden('subject not authorized: %s' % request.subject)

    def handle(self, request):
        method = self.handlers.get(request.verb)
        if method is None:
            return make_response(400, reason='verb %s not served by %s' % (request.verb, self.role))
        try:
            return getattr(self, method)(request)
        except ServiceError as e:
            return make_response(e.code, headers=e.headers, reason=_one_line(e.reason))
        except Exception as e:
            logger.exception('%s %s failed on %s', request.verb, request.target, self.name)
            return make_response(500, reason=_one_line('%s: %s' % (type(e).__name__, e)))

    def handle_bytes(self, data):
        """
        One encoded request in, one encoded response out; malformed input gets a 400.
        :return: (response bytes, keep connection open)
        """
        try:
            request, _ = split_message(data)
            if not isinstance(request, Request):
                raise ProtocolError('expected a request', 0)
        except ProtocolError as e:
            return encode(make_response(400, reason=_one_line(str(e)))), False
        response = self.handle(request)
        try:
            payload = encode(response)
        except EncodingError as e:
            logger.error('unencodable response from %s: %s', self.name, e)
            payload = encode(make_response(500, reason='unencodable response'))
        keep_alive = (request.header('Connection', '').lower() == 'keep-alive')
        return payload, keep_alive


def _one_line(text):
    return ' '.join(str(text).split())


def read_message(sock, buffer=b''):
    """
    Reads one complete message from a socket.
    :return: (message bytes, leftover bytes), message bytes empty on clean EOF
    :raises ProtocolError: on malformed or truncated input
    """
    data = buffer
    while True:
        if data:
            try:
                _, consumed = split_message(data)
                return data[:consumed], data[consumed:]
            except IncompleteMessage:
                if data.find(b'\n\n') < 0 and len(data) > MAX_HEAD_BYTES:
                    raise ProtocolError('header section too large', len(data))
        chunk = sock.recv(RECV_BYTES)
        if not chunk:
            if data:
                raise ProtocolError('connection closed mid-message', len(data))
            return b'', b''
        data += chunk


class _ConnectionHandler(socketserver.BaseRequestHandler):

    def handle(self):
        service = self.server.service
        leftover = b''
        while True:
            try:
                data, leftover = read_message(self.request, leftover)
            except ProtocolError as e:
                payload = encode(make_response(400, reason=_one_line(str(e))))
                self.request.sendall(payload)
                return
            except OSError as e:
                logger.debug('connection error on %s: %s', service.name, e)
                return
            if not data:
                return
            payload, keep_alive = service.handle_bytes(data)
            self.request.sendall(payload)
            if not keep_alive:
                return


class ServiceServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server, each connection processed independently."""
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service, host='localhost', port=0):
        self.service = service
        super().__init__((host, port), _ConnectionHandler)

    @property
    def endpoint(self):
        host, port = self.server_address[:2]
        return '%s:%d' % (host, port)

    def start(self):
        thread = threading.Thread(target=self.serve_forever, name='ngp-' + self.service.name,
                                  daemon=True)
        thread.start()
        logger.info('%s %s listening on %s', self.service.role, self.service.name, self.endpoint)
        return thread


class Transport:
    """
    Client side: sends one request to an endpoint and returns the response.
    When a ledger is attached every exchange is accounted as transfer rows.
    """

    def __init__(self, role='ui', ledger=None, timeout=10.0):
        self.role = role
        self.ledger = ledger
        self.timeout = timeout

    def for_role(self, role):
        """A transport sharing this one's wiring, accounting as another role."""
        raise NotImplementedError

    def exchange(self, endpoint, request):
        raise NotImplementedError

    def role_of(self, endpoint):
        return 'unknown'

    def _account(self, endpoint, request, request_bytes, response, response_bytes):
        if self.ledger is None:
            return
        peer = self.role_of(endpoint)
        self.ledger.record(self.role, peer, request_bytes,
                           'payload' if request.verb == 'PUT' else 'control',
                           verb=request.verb, target=request.target)
        if response is not None:
            payload = request.verb == 'GET' and response.code == 200
            self.ledger.record(peer, self.role, response_bytes,
                               'payload' if payload else 'control',
                               verb=request.verb, target=request.target)

    def call(self, endpoint, verb, target, subject, headers=None, body=b'', expect_ok=True):
        """Builds, sends and (optionally) checks a request, RemoteError on non-200."""
        request = make_request(verb, target, subject, headers, body)
        response = self.exchange(endpoint_of(endpoint), request)
        if expect_ok and not response.ok:
            raise RemoteError(response.code, response.reason, endpoint)
        return response


class TcpTransport(Transport):

    def __init__(self, role='ui', ledger=None, timeout=10.0, roles=None):
        super().__init__(role, ledger, timeout)
        self.roles = roles if roles is not None else {}

    def for_role(self, role):
        return TcpTransport(role, self.ledger, self.timeout, self.roles)

    def role_of(self, endpoint):
        return self.roles.get(endpoint, 'unknown')

    def exchange(self, endpoint, request):
        host, port = endpoint.rsplit(':', 1)
        payload = encode(request)
        try:
            with socket.create_connection((host, int(port)), timeout=self.timeout) as sock:
                sock.sendall(payload)
                data, _ = read_message(sock)
        except (OSError, ProtocolError) as e:
            self._account(endpoint, request, len(payload), None, 0)
            raise RemoteError(None, str(e), endpoint)
        if not data:
            raise RemoteError(None, 'connection closed without a response', endpoint)
        response, _ = split_message(data)
        self._account(endpoint, request, len(payload), response, len(data))
        return response


class InProcessTransport(Transport):
    """
    Direct dispatch to registered services using the same encoded bytes as TCP.
    Services can be taken down to inject faults.
    """

    def __init__(self, role='ui', ledger=None, timeout=10.0, registry=None):
        super().__init__(role, ledger, timeout)
        self.registry = registry if registry is not None else ServiceRegistry()

    def for_role(self, role):
        return InProcessTransport(role, self.ledger, self.timeout, self.registry)

    def role_of(self, endpoint):
        service = self.registry.services.get(endpoint)
        return service.role if service is not None else 'unknown'

    def exchange(self, endpoint, request):
        payload = encode(request)
        service = self.registry.lookup(endpoint)
        if service is None:
            self._account(endpoint, request, len(payload), None, 0)
            raise RemoteError(None, 'no service reachable', endpoint)
        data, _ = service.handle_bytes(payload)
        response, _ = split_message(data)
        self._account(endpoint, request, len(payload), response, len(data))
        return response


class ServiceRegistry:
    """Endpoint -> service map shared by all in-process transports of one fleet."""

    def __init__(self):
        self.services = {}
        self.down = set()
        self._lock = threading.Lock()

    def register(self, endpoint, service):
        with self._lock:
            self.services[endpoint] = service

    def lookup(self, endpoint):
        with self._lock:
            if endpoint in self.down:
                return None
            return self.services.get(endpoint)

    def take_down(self, endpoint):
        with self._lock:
            self.down.add(endpoint)

    def bring_up(self, endpoint):
        with self._lock:
            self.down.discard(endpoint)


def service_subject(name):
    """The identity a service presents when it acts as a client (host credential)."""
    return '/O=Grid/O=NorduGrid/CN=host/%s' % name
