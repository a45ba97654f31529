import socket
import unittest

import numpy as np
import pytest

from grid_testbed.harness.ledger import TransferLedger
from grid_testbed.wire.protocol import (
    EncodingError, IncompleteMessage, ProtocolError, Response, VERBS, authorize, decode, encode,
    make_request, make_response, split_message)
from grid_testbed.wire.transport import (
    BadRequest, InProcessTransport, RemoteError, Service, ServiceRegistry, ServiceServer,
    TcpTransport, endpoint_of)

SUBJECT = '/O=Grid/CN=A'


class EchoService(Service):
    role = 'se'
    handlers = {'GET': 'handle_get', 'PUT': 'handle_put', 'DEL': 'handle_del'}

    def __init__(self):
        super().__init__('echo', ['/O=Grid/*'])
        self.stored = {}

    def handle_get(self, request):
        self.check_authorized(request)
        return make_response(200, body=self.stored.get(request.target, b''))

    def handle_put(self, request):
        self.check_authorized(request)
        self.stored[request.target] = request.body
        return make_response(200)

    def handle_del(self, request):
        if request.target == '/boom':
            raise RuntimeError('exploded')
        raise BadRequest('cannot delete %s' % request.target)


def random_message(rng):
    body = bytes(rng.randint(0, 256, size=rng.randint(0, 40)).astype(np.uint8))
    headers = {'X-%d' % i: 'v%d' % rng.randint(1000) for i in range(rng.randint(0, 3))}
    if rng.rand() < 0.5:
        return make_request(VERBS[rng.randint(len(VERBS))], '/t/%d' % rng.randint(100),
                            '/O=Grid/CN=user %d' % rng.randint(10), headers, body)
    return make_response([200, 400, 403, 404, 409, 500][rng.randint(6)], headers, body)


class TestEncoding(unittest.TestCase):

    def test_request_bytes(self):
        request = make_request('LOOKUP', '/rc/lfn1', SUBJECT)
        self.assertEqual(encode(request), b'NGP/1 LOOKUP /rc/lfn1\nSubject: /O=Grid/CN=A\n\n')

    def test_response_bytes(self):
        response = make_response(200, body=b'hi')
        self.assertEqual(encode(response), b'NGP/1 200 OK\nContent-Length: 2\n\nhi')

    def test_line_break_in_subject_rejected(self):
        with self.assertRaises(EncodingError):
            encode(make_request('LOOKUP', '/rc/x', '/O=Grid/CN=A\nEvil: yes'))

    def test_content_length_must_match(self):
        response = Response(200, 'OK', body=b'abc')
        with self.assertRaises(EncodingError):
            encode(response)

    def test_unknown_verb_rejected(self):
        with self.assertRaises(ProtocolError):
            decode(b'NGP/1 HELLO /x\n\n')

    def test_missing_subject_rejected(self):
        with self.assertRaises(ProtocolError):
            decode(b'NGP/1 GET /x\n\n')

    def test_headers_case_insensitive(self):
        request = decode(b'NGP/1 GET /x\nsubject: /O=Grid/CN=A\nOVERWRITE: true\n\n')
        self.assertEqual(request.subject, SUBJECT)
        self.assertEqual(request.header('Overwrite'), 'true')

    def test_trailing_bytes_left_unconsumed(self):
        first = encode(make_response(200, body=b'hi'))
        second = encode(make_request('GET', '/y', SUBJECT))
        message, consumed = split_message(first + second)
        self.assertEqual(message.body, b'hi')
        self.assertEqual(consumed, len(first))
        self.assertEqual(decode((first + second)[consumed:]).target, '/y')

    def test_round_trip_generated(self):
        rng = np.random.RandomState(42)
        for _ in range(300):
            message = random_message(rng)
            decoded = decode(encode(message))
            self.assertEqual(type(decoded), type(message))
            self.assertEqual(encode(decoded), encode(message))
            self.assertEqual(decoded.body, message.body)

    def test_every_truncation_errors(self):
        messages = [make_request('PUT', '/a/b', SUBJECT, {'Overwrite': 'true'}, b'payload\n\nmore'),
                    make_response(404, reason='no such file'),
                    make_response(200, body=b'x' * 10)]
        for message in messages:
            data = encode(message)
            for n in range(len(data)):
                with self.assertRaises(ProtocolError):
                    split_message(data[:n])

    def test_truncated_body_is_incomplete(self):
        data = encode(make_response(200, body=b'0123456789'))
        with self.assertRaises(IncompleteMessage):
            split_message(data[:-3])

    def test_decoder_fuzz(self):
        rng = np.random.RandomState(0)
        service = EchoService()
        seeds = [encode(random_message(rng)) for _ in range(50)]
        n_parsed = n_errors = 0
        for i in range(10000):
            data = bytearray(seeds[i % len(seeds)])
            for _ in range(rng.randint(1, 4)):
                op = rng.randint(3)
                pos = rng.randint(len(data) + 1)
                if op == 0 and pos < len(data):
                    data[pos] = rng.randint(256)
                elif op == 1:
                    data.insert(pos, rng.randint(256))
                elif pos < len(data):
                    del data[pos]
            try:
                split_message(bytes(data))
                n_parsed += 1
            except ProtocolError as e:
                self.assertGreaterEqual(e.pos, 0)
                n_errors += 1
                answer, _ = service.handle_bytes(bytes(data))
                self.assertEqual(decode(answer).code, 400)
        self.assertEqual(n_parsed + n_errors, 10000)
        self.assertGreater(n_errors, 0)


class TestAuthorize(unittest.TestCase):

    def test_patterns(self):
        self.assertTrue(authorize('/O=Grid/CN=A', ['/O=Grid/CN=A']))
        self.assertFalse(authorize('/O=Grid/CN=B', ['/O=Grid/CN=A']))
        self.assertTrue(authorize('/O=Grid/CN=Anna', ['/O=Grid/*']))
        self.assertFalse(authorize('/O=Other/CN=Anna', ['/O=Grid/*']))
        self.assertFalse(authorize('', ['*']))
        self.assertFalse(authorize('/O=Grid/CN=A', []))

    def test_endpoint_of(self):
        self.assertEqual(endpoint_of('ngse://se1:39100/data/x?lfn=y'), 'se1:39100')
        self.assertEqual(endpoint_of('ngp://localhost:39300'), 'localhost:39300')
        self.assertEqual(endpoint_of('localhost:39000'), 'localhost:39000')
        with self.assertRaises(ValueError):
            endpoint_of('ngse://nohost/path')


class TestInProcessTransport(unittest.TestCase):

    def setUp(self):
        self.ledger = TransferLedger()
        self.registry = ServiceRegistry()
        self.service = EchoService()
        self.registry.register('se1:39100', self.service)
        self.transport = InProcessTransport('ui', self.ledger, registry=self.registry)

    def test_call_and_accounting(self):
        self.transport.call('ngse://se1:39100/f', 'PUT', '/f', SUBJECT, body=b'12345')
        self.assertEqual(self.transport.call('se1:39100', 'GET', '/f', SUBJECT).body, b'12345')
        frame = self.ledger.frame()
        payload = frame[frame['purpose'] == 'payload']
        self.assertEqual(list(payload['verb']), ['PUT', 'GET'])
        self.assertEqual(list(payload['from_role']), ['ui', 'se'])
        self.assertEqual(self.ledger.violations(), [])

    def test_errors_become_remote_errors(self):
        with self.assertRaises(RemoteError) as cm:
            self.transport.call('se1:39100', 'GET', '/f', '/O=Other/CN=X')
        self.assertEqual(cm.exception.code, 403)
        with self.assertRaises(RemoteError) as cm:
            self.transport.call('se1:39100', 'DEL', '/f', SUBJECT)
        self.assertEqual(cm.exception.code, 400)
        with self.assertRaises(RemoteError) as cm:
            self.transport.call('se1:39100', 'DEL', '/boom', SUBJECT)
        self.assertEqual(cm.exception.code, 500)
        with self.assertRaises(RemoteError) as cm:
            self.transport.call('se1:39100', 'LOOKUP', '/f', SUBJECT)
        self.assertEqual(cm.exception.code, 400)

    def test_unchecked_call_returns_response(self):
        response = self.transport.call('se1:39100', 'GET', '/f', '/O=Other/CN=X', expect_ok=False)
        self.assertEqual(response.code, 403)

    def test_service_down(self):
        self.registry.take_down('se1:39100')
        with self.assertRaises(RemoteError) as cm:
            self.transport.call('se1:39100', 'GET', '/f', SUBJECT)
        self.assertIsNone(cm.exception.code)
        self.registry.bring_up('se1:39100')
        self.assertEqual(self.transport.call('se1:39100', 'GET', '/f', SUBJECT).code, 200)

    def test_roles(self):
        cluster = self.transport.for_role('cluster')
        cluster.call('se1:39100', 'PUT', '/g', SUBJECT, body=b'x')
        self.assertEqual(self.ledger.frame()['from_role'].iloc[0], 'cluster')
        self.assertEqual(cluster.role_of('nowhere:1'), 'unknown')


@pytest.mark.integration
class TestTcp(unittest.TestCase):

    def setUp(self):
        self.server = ServiceServer(EchoService(), 'localhost', 0)
        self.server.start()

    def tearDown(self):
        self.server.shutdown()
        self.server.server_close()

    def test_tcp_round_trip(self):
        endpoint = self.server.endpoint
        ledger = TransferLedger()
        transport = TcpTransport('ui', ledger, roles={endpoint: 'se'})
        transport.call(endpoint, 'PUT', '/f', SUBJECT, body=b'\x00\x01binary\n\n')
        self.assertEqual(transport.call(endpoint, 'GET', '/f', SUBJECT).body, b'\x00\x01binary\n\n')
        self.assertGreater(ledger.payload_bytes('se'), 0)

    def test_malformed_input_answered(self):
        host, port = self.server.endpoint.rsplit(':', 1)
        with socket.create_connection((host, int(port)), timeout=5) as sock:
            sock.sendall(b'NGP/1 HELLO /x\n\n')
            data = sock.recv(4096)
        self.assertEqual(decode(data).code, 400)

    def test_unreachable(self):
        transport = TcpTransport('ui', timeout=1)
        with self.assertRaises(RemoteError) as cm:
            transport.call('localhost:1', 'GET', '/f', SUBJECT)
        self.assertIsNone(cm.exception.code)
