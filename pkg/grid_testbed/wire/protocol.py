"""
NGP/1: the framed text request/response protocol spoken by every service.

    NGP/1 <VERB> <target>          (request)   |   NGP/1 <code> <reason>   (response)
    Name: Value                    (one line per header)
                                   (empty line)
    <raw body, Content-Length bytes>

Lines end with a single LF, text is UTF-8, bodies are binary safe.
"""
import re
from dataclasses import dataclass, field

from requests.structures import CaseInsensitiveDict

PROTOCOL = 'NGP/1'

VERBS = ('QUERY', 'SUBMIT', 'CANCEL', 'CLEAN', 'PUT', 'GET', 'LIST', 'DEL', 'STAT',
         'REG', 'UNREG', 'LOOKUP', 'CHILDREN', 'ATTACH')

REASONS = {
    200: 'OK',
    400: 'Bad Request',
    403: 'Forbidden',
    404: 'Not Found',
    409: 'Conflict',
    500: 'Internal Error',
}

_HEADER_NAME = re.compile(r'[A-Za-z0-9][A-Za-z0-9-]*\Z')
_LINE_BREAKS = ('\n', '\r')


class ProtocolError(ValueError):
    """Malformed NGP input, pos is the byte offset where decoding stopped."""

    def __init__(self, message, pos=0):
        super().__init__('%s (at byte %d)' % (message, pos))
        self.pos = pos


class IncompleteMessage(ProtocolError):
    """Input is a valid prefix of a message, more bytes are needed."""


class EncodingError(ValueError):
    pass


def _headers(headers=None):
    return CaseInsensitiveDict(headers or {})


@dataclass
class Request:
    verb: str
    target: str
    headers: CaseInsensitiveDict = field(default_factory=CaseInsensitiveDict)
    body: bytes = b''

    @property
    def subject(self):
        return self.headers.get('Subject')

    def header(self, name, default=None):
        return self.headers.get(name, default)


@dataclass
class Response:
    code: int
    reason: str
    headers: CaseInsensitiveDict = field(default_factory=CaseInsensitiveDict)
    body: bytes = b''

    @property
    def ok(self):
        return self.code == 200

    def header(self, name, default=None):
        return self.headers.get(name, default)


def make_request(verb, target, subject, headers=None, body=b''):
    """Builds a request satisfying the framing invariants (Subject first, Content-Length)."""
    all_headers = _headers({'Subject': subject})
    all_headers.update(headers or {})
    if body:
        all_headers['Content-Length'] = str(len(body))
    return Request(verb, target, all_headers, bytes(body))


def make_response(code=200, headers=None, body=b'', reason=None):
    all_headers = _headers(headers)
    if body:
        all_headers['Content-Length'] = str(len(body))
    return Response(code, reason or REASONS[code], all_headers, bytes(body))


def valid_subject(subject):
    return (isinstance(subject, str) and subject.startswith('/')
            and not any(c in subject for c in _LINE_BREAKS))


def _check_text(value, what):
    if not isinstance(value, str) or any(c in value for c in _LINE_BREAKS):
        raise EncodingError('%s contains a line break or is not text: %r' % (what, value))


def _check_body_headers(headers, body):
    length = headers.get('Content-Length')
    if body:
        if length != str(len(body)):
            raise EncodingError('Content-Length %r does not match body length %d'
                                % (length, len(body)))
    elif length is not None:
        raise EncodingError('Content-Length present on an empty body')


def encode(msg):
    """
    Exact NGP/1 bytes of a Request or Response.
    :raises EncodingError: when a framing invariant does not hold
    """
    if isinstance(msg, Request):
        if msg.verb not in VERBS:
            raise EncodingError('unknown verb %r' % msg.verb)
        _check_text(msg.target, 'target')
        if not msg.target or ' ' in msg.target:
            raise EncodingError('target must be a non-empty token: %r' % msg.target)
        if not valid_subject(msg.headers.get('Subject')):
            raise EncodingError('invalid or missing Subject: %r' % msg.headers.get('Subject'))
        first = '%s %s %s' % (PROTOCOL, msg.verb, msg.target)
    elif isinstance(msg, Response):
        if msg.code not in REASONS:
            raise EncodingError('unsupported code %r' % msg.code)
        _check_text(msg.reason, 'reason')
        first = '%s %d %s' % (PROTOCOL, msg.code, msg.reason)
    else:
        raise EncodingError('cannot encode %r' % type(msg))

    lines = [first]
    for name, value in msg.headers.items():
        if not _HEADER_NAME.match(name):
            raise EncodingError('invalid header name %r' % name)
        _check_text(value, 'header %s' % name)
        lines.append('%s: %s' % (name, value))
    _check_body_headers(msg.headers, msg.body)

    head = '\n'.join(lines) + '\n\n'
    return head.encode('utf-8') + bytes(msg.body)


def decode(data):
    """Decodes one message from the start of data, trailing bytes are ignored."""
    msg, _ = split_message(data)
    return msg


def split_message(data):
    """
    Decodes one message from the start of data.
    :return: (message, number of bytes consumed)
    :raises IncompleteMessage: data is a proper prefix of a message
    :raises ProtocolError: data can never become a valid message
    """
    data = bytes(data)
    end = data.find(b'\n\n')
    if end < 0:
        _check_partial_head(data)
        raise IncompleteMessage('missing blank line after headers', len(data))

    try:
        head = data[:end].decode('utf-8')
    except UnicodeDecodeError as e:
        raise ProtocolError('head is not valid UTF-8', e.start)

    lines = head.split('\n')
    msg = _decode_first_line(lines[0])
    pos = len(lines[0].encode('utf-8')) + 1
    for line in lines[1:]:
        name, sep, value = line.partition(': ')
        if not sep or not _HEADER_NAME.match(name) or '\r' in line:
            raise ProtocolError('malformed header line %r' % line, pos)
        if name in msg.headers:
            raise ProtocolError('duplicate header %r' % name, pos)
        msg.headers[name] = value
        pos += len(line.encode('utf-8')) + 1

    body_start = end + 2
    length = msg.headers.get('Content-Length')
    if length is None:
        body = b''
    else:
        if not length.isdigit() or not length.isascii() or int(length) == 0:
            raise ProtocolError('invalid Content-Length %r' % length, pos)
        n = int(length)
        if len(data) - body_start < n:
            raise IncompleteMessage('body shorter than Content-Length', len(data))
        body = data[body_start:body_start + n]
    msg.body = body

    if isinstance(msg, Request) and not valid_subject(msg.headers.get('Subject')):
        raise ProtocolError('request without a valid Subject header', end)

    return msg, body_start + len(body)


def _check_partial_head(data):
    # fail early on a first line that can never become valid
    line = data.split(b'\n', 1)[0]
    prefix = (PROTOCOL + ' ').encode()
    if not (line.startswith(prefix) or prefix.startswith(line)):
        raise ProtocolError('not an %s message' % PROTOCOL, 0)


def _decode_first_line(line):
    parts = line.split(' ', 2)
    if len(parts) != 3 or parts[0] != PROTOCOL:
        raise ProtocolError('malformed first line %r' % line, 0)
    _, word, rest = parts
    if word in VERBS:
        if not rest or ' ' in rest or '\r' in rest:
            raise ProtocolError('malformed target %r' % rest, len(PROTOCOL) + len(word) + 2)
        return Request(word, rest, CaseInsensitiveDict())
    if len(word) == 3 and word.isdigit() and int(word) in REASONS:
        if '\r' in rest:
            raise ProtocolError('malformed reason %r' % rest, len(PROTOCOL) + 5)
        return Response(int(word), rest, CaseInsensitiveDict())
    raise ProtocolError('unknown verb or code %r' % word, len(PROTOCOL) + 1)


def authorize(subject, allowlist):
    """
    True iff subject equals a literal pattern or starts with the prefix of a
    pattern ending in "*".
    """
    if not subject:
        return False
    for pattern in allowlist:
        if pattern.endswith('*'):
            if subject.startswith(pattern[:-1]):
                return True
        elif subject == pattern:
            return True
    return False
