"""
Parser for the extended Resource Specification Language (xRSL):

    document := "&" relation+
    relation := "(" name "=" values ")"
    values   := scalar | tuple+
    tuple    := "(" scalar+ ")"
    scalar   := bare-token | "quoted string" (escapes \\" and \\\\)

Whitespace between tokens is ignored and attribute names fold to lowercase.
"""
from dataclasses import dataclass, field
from typing import List, Tuple, Union

from parsimonious.exceptions import ParseError
from parsimonious.grammar import Grammar
from parsimonious.nodes import NodeVisitor

# punctuation gets named rules so that failures are reported at the farthest position
XRSL_GRAMMAR = Grammar(r'''
    document   = ws amp relation+ ws
    relation   = lparen ws name ws equals values rparen
    values     = tuples / scalar
    tuples     = tuple+
    tuple      = lparen scalar_seq rparen
    scalar_seq = (ws scalar)+
    scalar     = quoted / bare
    quoted     = ~r'"(?:[^"\\]|\\.)*"'s
    bare       = ~r'[^\s()"=&|\\]+'
    name       = ~r'[A-Za-z][A-Za-z0-9_-]*'
    amp        = "&"
    equals     = "=" ws
    lparen     = ws "("
    rparen     = ws ")"
    ws         = ~r'\s*'
''')


class XrslError(ValueError):
    pass


class XrslParseError(XrslError):
    """Syntax error, offset is the 1-based byte position of the offending byte."""

    def __init__(self, message, offset):
        super().__init__('%s at offset %d' % (message, offset))
        self.offset = offset


Scalar = str
Values = Union[Scalar, List[Tuple[Scalar, ...]]]


@dataclass
class Relation:
    attribute: str
    values: Values

    @property
    def is_scalar(self):
        return isinstance(self.values, str)


@dataclass
class XrslDocument:
    relations: List[Relation] = field(default_factory=list)

    def attributes(self):
        return [r.attribute for r in self.relations]


def unescape(text):
    out = []
    chars = iter(text)
    for c in chars:
        if c == '\\':
            out.append(next(chars, ''))
        else:
            out.append(c)
    return ''.join(out)


def quote(value):
    return '"' + value.replace('\\', '\\\\').replace('"', '\\"') + '"'


class _XrslVisitor(NodeVisitor):

    def visit_document(self, node, visited_children):
        _, _, relations, _ = visited_children
        return XrslDocument(list(relations))

    def visit_relation(self, node, visited_children):
        _, _, name, _, _, values, _ = visited_children
        return Relation(name, values)

    def visit_values(self, node, visited_children):
        return visited_children[0]

    def visit_tuples(self, node, visited_children):
        return list(visited_children)

    def visit_tuple(self, node, visited_children):
        _, scalars, _ = visited_children
        return tuple(scalars)

    def visit_scalar_seq(self, node, visited_children):
        return [scalar for _, scalar in visited_children]

    def visit_scalar(self, node, visited_children):
        return visited_children[0]

    def visit_quoted(self, node, visited_children):
        return unescape(node.text[1:-1])

    def visit_bare(self, node, visited_children):
        return node.text

    def visit_name(self, node, visited_children):
        return node.text.lower()

    def generic_visit(self, node, visited_children):
        return visited_children or node


def _byte_offset(text, pos):
    return len(text[:pos].encode('utf-8')) + 1


def parse(text):
    """
    Parses xRSL text (str or UTF-8 bytes) into an XrslDocument.
    :raises XrslParseError: with the offending byte offset
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode('utf-8')
        except UnicodeDecodeError as e:
            raise XrslParseError('invalid UTF-8', e.start + 1)
    if not text.strip():
        raise XrslParseError('empty document', len(text.encode('utf-8')) + 1)
    try:
        tree = XRSL_GRAMMAR.parse(text)
    except ParseError as e:
        if e.pos >= len(text):
            reason = 'unexpected end of document'
        elif text[e.pos] == '"':
            reason = 'unterminated string'
        else:
            reason = 'unexpected %r' % text[e.pos]
        raise XrslParseError(reason, _byte_offset(text, e.pos))
    return _XrslVisitor().visit(tree)
