"""
The query filter language, a subset of LDAP search filters:

    filter := "(" body ")"
    body   := "&" filter+ | "|" filter+ | "!" filter | attr "=" pattern

A pattern of a lone "*" tests presence, other "*" are wildcards.
Matching is case-insensitive.
"""
from dataclasses import dataclass
from typing import Tuple

from parsimonious.exceptions import ParseError
from parsimonious.grammar import Grammar
from parsimonious.nodes import NodeVisitor

FILTER_GRAMMAR = Grammar(r'''
    filter  = lparen body rparen
    body    = and / or / not / item
    and     = "&" filter+
    or      = "|" filter+
    not     = "!" filter
    item    = attr equals pattern
    attr    = ~r'[A-Za-z][A-Za-z0-9-]*'
    equals  = "="
    pattern = ~r'[^()]*'
    lparen  = "("
    rparen  = ")"
''')


class FilterParseError(ValueError):

    def __init__(self, message, offset):
        super().__init__('%s at offset %d' % (message, offset))
        self.offset = offset


class Filter:

    def matches(self, entry):
        raise NotImplementedError


@dataclass(frozen=True)
class And(Filter):
    children: Tuple[Filter, ...]

    def matches(self, entry):
        return all(child.matches(entry) for child in self.children)

    def __str__(self):
        return '(&%s)' % ''.join(str(c) for c in self.children)


@dataclass(frozen=True)
class Or(Filter):
    children: Tuple[Filter, ...]

    def matches(self, entry):
        return any(child.matches(entry) for child in self.children)

    def __str__(self):
        return '(|%s)' % ''.join(str(c) for c in self.children)


@dataclass(frozen=True)
class Not(Filter):
    child: Filter

    def matches(self, entry):
        return not self.child.matches(entry)

    def __str__(self):
        return '(!%s)' % self.child


@dataclass(frozen=True)
class Eq(Filter):
    attr: str
    pattern: str

    def matches(self, entry):
        return any(wildcard_match(self.pattern, value) for value in entry.get(self.attr))

    def __str__(self):
        return '(%s=%s)' % (self.attr, self.pattern)


@dataclass(frozen=True)
class Present(Filter):
    attr: str

    def matches(self, entry):
        return len(entry.get(self.attr)) > 0

    def __str__(self):
        return '(%s=*)' % self.attr


def wildcard_match(pattern, value):
    """LDAP substring matching: "*" matches any run of characters, case-insensitive."""
    pattern = pattern.casefold()
    value = value.casefold()
    if '*' not in pattern:
        return pattern == value
    pieces = pattern.split('*')
    initial, final, middle = pieces[0], pieces[-1], pieces[1:-1]
    if not value.startswith(initial):
        return False
    pos = len(initial)
    for piece in middle:
        found = value.find(piece, pos)
        if found < 0:
            return False
        pos = found + len(piece)
    return len(value) - pos >= len(final) and value.endswith(final)


class _FilterVisitor(NodeVisitor):
    unwrapped_exceptions = (RecursionError,)

    def visit_filter(self, node, visited_children):
        return visited_children[1]

    def visit_body(self, node, visited_children):
        return visited_children[0]

    def visit_and(self, node, visited_children):
        return And(tuple(visited_children[1]))

    def visit_or(self, node, visited_children):
        return Or(tuple(visited_children[1]))

    def visit_not(self, node, visited_children):
        return Not(visited_children[1])

    def visit_item(self, node, visited_children):
        attr, _, pattern = visited_children
        if pattern == '*':
            return Present(attr)
        return Eq(attr, pattern)

    def visit_attr(self, node, visited_children):
        return node.text.lower()

    def visit_pattern(self, node, visited_children):
        return node.text

    def generic_visit(self, node, visited_children):
        return visited_children or node


def filter_parse(text):
    """
    :raises FilterParseError: positioned (1-based byte offset) on malformed input
    """
    if isinstance(text, Filter):
        return text
    try:
        tree = FILTER_GRAMMAR.parse(text)
    except ParseError as e:
        raise FilterParseError('malformed filter', len(text[:e.pos].encode('utf-8')) + 1)
    except RecursionError:
        raise FilterParseError('filter nested too deeply', 1)
    try:
        return _FilterVisitor().visit(tree)
    except RecursionError:
        raise FilterParseError('filter nested too deeply', 1)


def filter_eval(f, entry):
    return f.matches(entry)


MATCH_ALL = Present('objectclass')
