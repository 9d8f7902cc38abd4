"""Query language: parsing, canonical rendering and trigram planning.

Grammar::

    query   := or_expr
    or_expr := and_expr ("or" and_expr)*
    and_expr:= unit+                      # implicit AND
    unit    := "(" query ")" | atom
    atom    := word | "quoted phrase" | /regex/
             | repo:VALUE | rev:VALUE | file:VALUE | sym:atom

Bare words match case-insensitively (ASCII folding), quoted phrases match
exactly. ``file:`` takes a regex in the supported dialect and is matched
against the repository-relative path; ``repo:`` and ``rev:`` match exactly.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from . import trigrams as tg
from .errors import ParseError
from .regex import RegexSyntaxError, compile_regex, regex_requirement

FILTER_PREFIXES = ("repo:", "rev:", "file:", "sym:")


class FilterKind(str, enum.Enum):
    REPO = "Repo"
    REVISION = "Revision"
    FILE = "File"
    SYMBOL = "Symbol"


_PREFIX_KIND = {
    "repo:": FilterKind.REPO,
    "rev:": FilterKind.REVISION,
    "file:": FilterKind.FILE,
    "sym:": FilterKind.SYMBOL,
}
_KIND_PREFIX = {v: k for k, v in _PREFIX_KIND.items()}


@dataclass(frozen=True)
class Term:
    text: str
    case_sensitive: bool = False


@dataclass(frozen=True)
class Regex:
    pattern: str


@dataclass(frozen=True)
class And:
    children: Tuple["QueryNode", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["QueryNode", ...]


@dataclass(frozen=True)
class Filter:
    kind: FilterKind
    argument: str
    child: Optional["QueryNode"] = None


QueryNode = Union[Term, Regex, And, Or, Filter]


# --------------------------------------------------------------------------
# parsing


class _Tok:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind, value, pos):
        self.kind = kind
        self.value = value
        self.pos = pos


class _Lexer:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def bpos(self, i=None) -> int:
        return len(self.s[: self.i if i is None else i].encode("utf-8"))

    def fail(self, message, i=None):
        raise ParseError(message, self.bpos(i))

    def tokens(self) -> List[_Tok]:
        out = []
        s = self.s
        while True:
            while self.i < len(s) and s[self.i].isspace():
                self.i += 1
            if self.i >= len(s):
                return out
            start = self.i
            c = s[self.i]
            if c in "()":
                self.i += 1
                out.append(_Tok(c, c, self.bpos(start)))
                continue
            atom = self.atom()
            if isinstance(atom, str):
                out.append(_Tok("or", atom, self.bpos(start)))
            else:
                out.append(_Tok("atom", atom, self.bpos(start)))

    def word(self) -> str:
        s = self.s
        start = self.i
        while self.i < len(s) and not s[self.i].isspace() and s[self.i] not in "()":
            self.i += 1
        return s[start : self.i]

    def quoted(self) -> str:
        s = self.s
        open_at = self.i
        self.i += 1
        buf = []
        while self.i < len(s):
            c = s[self.i]
            if c == "\\" and self.i + 1 < len(s) and s[self.i + 1] in '"\\':
                buf.append(s[self.i + 1])
                self.i += 2
                continue
            if c == '"':
                self.i += 1
                return "".join(buf)
            buf.append(c)
            self.i += 1
        self.fail("unbalanced quote", open_at)

    def regex(self) -> Regex:
        s = self.s
        open_at = self.i
        self.i += 1
        buf = []
        while self.i < len(s):
            c = s[self.i]
            if c == "\\" and self.i + 1 < len(s):
                if s[self.i + 1] == "/":
                    buf.append("/")
                else:
                    buf.append(s[self.i : self.i + 2])
                self.i += 2
                continue
            if c == "/":
                self.i += 1
                pattern = "".join(buf)
                if not pattern:
                    self.fail("empty regex", open_at)
                try:
                    compile_regex(pattern)
                except RegexSyntaxError as exc:
                    raise ParseError(
                        f"bad regex: {exc.message}", self.bpos(open_at) + 1 + exc.position
                    ) from exc
                return Regex(pattern)
            buf.append(c)
            self.i += 1
        self.fail("unterminated regex", open_at)

    def content_atom(self):
        c = self.s[self.i] if self.i < len(self.s) else ""
        start = self.i
        if c == '"':
            text = self.quoted()
            if not text:
                self.fail("empty phrase", start)
            return Term(text, True)
        if c == "/":
            return self.regex()
        if not c or c.isspace() or c in "()":
            self.fail("expected a search term", start)
        word = self.word()
        return Term(word, False)

    def atom(self):
        s = self.s
        start = self.i
        for prefix in FILTER_PREFIXES:
            if s.startswith(prefix, self.i):
                self.i += len(prefix)
                kind = _PREFIX_KIND[prefix]
                if kind is FilterKind.SYMBOL:
                    child = self.content_atom()
                    return Filter(kind, render_query(child, _in_symbol=True), child)
                value = self.filter_value(start)
                if kind is FilterKind.FILE:
                    try:
                        compile_regex(value)
                    except RegexSyntaxError as exc:
                        self.fail(f"bad file pattern: {exc.message}", start)
                return Filter(kind, value)
        if s[self.i] == '"' or s[self.i] == "/":
            return self.content_atom()
        word = self.word()
        if word == "or":
            return word
        return Term(word, False)

    def filter_value(self, start) -> str:
        if self.i < len(self.s) and self.s[self.i] == '"':
            value = self.quoted()
        else:
            value = self.word()
        if not value:
            self.fail("filter needs a value", start)
        return value


def _flatten(cls, children):
    out = []
    for c in children:
        if isinstance(c, cls):
            out.extend(c.children)
        else:
            out.append(c)
    return tuple(out)


class _Parser:
    def __init__(self, tokens: List[_Tok], end: int):
        self.toks = tokens
        self.k = 0
        self.end = end

    def peek(self):
        return self.toks[self.k] if self.k < len(self.toks) else None

    def parse(self) -> QueryNode:
        node = self.or_expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError("unbalanced ')'", tok.pos)
        return node

    def or_expr(self):
        branches = [self.and_expr()]
        while self.peek() is not None and self.peek().kind == "or":
            self.k += 1
            branches.append(self.and_expr())
        if len(branches) == 1:
            return branches[0]
        return Or(_flatten(Or, branches))

    def and_expr(self):
        units = []
        while True:
            tok = self.peek()
            if tok is None or tok.kind in (")", "or"):
                break
            units.append(self.unit())
        if not units:
            tok = self.peek()
            raise ParseError("expected a search term", tok.pos if tok else self.end)
        if len(units) == 1:
            return units[0]
        return And(_flatten(And, units))

    def unit(self):
        tok = self.toks[self.k]
        if tok.kind == "(":
            self.k += 1
            node = self.or_expr()
            close = self.peek()
            if close is None or close.kind != ")":
                raise ParseError("unbalanced '('", tok.pos)
            self.k += 1
            return node
        self.k += 1
        return tok.value


def _normalize(node: QueryNode) -> QueryNode:
    if isinstance(node, And):
        return And(_flatten(And, [_normalize(c) for c in node.children]))
    if isinstance(node, Or):
        return Or(_flatten(Or, [_normalize(c) for c in node.children]))
    return node


def parse_query(text: str) -> QueryNode:
    """Parse query text into a tree; raises :class:`ParseError` with a byte position."""
    lexer = _Lexer(text)
    tokens = lexer.tokens()
    if not tokens:
        raise ParseError("empty query", 0)
    node = _normalize(_Parser(tokens, len(text.encode("utf-8"))).parse())
    revs = [f for f in iter_nodes(node) if isinstance(f, Filter) and f.kind is FilterKind.REVISION]
    if len(revs) > 1:
        second = text.find("rev:", text.find("rev:") + 1)
        raise ParseError("at most one rev: filter is allowed", len(text[:second].encode("utf-8")))
    return node


def iter_nodes(node: QueryNode):
    yield node
    if isinstance(node, (And, Or)):
        for c in node.children:
            yield from iter_nodes(c)
    elif isinstance(node, Filter) and node.child is not None:
        yield from iter_nodes(node.child)


# --------------------------------------------------------------------------
# rendering


def _bare_ok(text: str, allow_prefix: bool = False) -> bool:
    return (
        bool(text)
        and text != "or"
        and not any(ch.isspace() or ch in "()" for ch in text)
        and text[0] not in '"/'
        and (allow_prefix or not text.startswith(FILTER_PREFIXES))
    )


def quote_term(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_query(node: QueryNode, _in_symbol: bool = False) -> str:
    """Canonical text that parses back to a structurally identical tree."""
    if isinstance(node, Term):
        if node.case_sensitive:
            return quote_term(node.text)
        if not _bare_ok(node.text, allow_prefix=_in_symbol):
            raise ValueError(f"case-insensitive term {node.text!r} has no bare-word spelling")
        return node.text
    if isinstance(node, Regex):
        return "/" + node.pattern.replace("/", "\\/") + "/"
    if isinstance(node, Filter):
        prefix = _KIND_PREFIX[node.kind]
        if node.kind is FilterKind.SYMBOL:
            return prefix + render_query(node.child, _in_symbol=True)
        value = node.argument if _bare_ok(node.argument) else quote_term(node.argument)
        return prefix + value
    if isinstance(node, And):
        return " ".join(
            "(" + render_query(c) + ")" if isinstance(c, Or) else render_query(c)
            for c in node.children
        )
    if isinstance(node, Or):
        return " or ".join(render_query(c) for c in node.children)
    raise TypeError(f"not a query node: {node!r}")


# --------------------------------------------------------------------------
# planning


@dataclass
class CompiledQuery:
    tree: QueryNode
    required: tg.Requirement
    scan_fallback: bool
    atoms: Tuple[QueryNode, ...] = field(default=())


def is_content_atom(node: QueryNode) -> bool:
    return isinstance(node, (Term, Regex)) or (
        isinstance(node, Filter) and node.kind is FilterKind.SYMBOL
    )


def content_atoms(node: QueryNode) -> Tuple[QueryNode, ...]:
    """Term, Regex and sym: atoms of the tree, first occurrence order, deduplicated."""
    seen: Dict[QueryNode, None] = {}
    stack = [node]
    order = []
    while stack:
        n = stack.pop()
        if is_content_atom(n):
            if n not in seen:
                seen[n] = None
                order.append(n)
        elif isinstance(n, (And, Or)):
            stack.extend(reversed(n.children))
    return tuple(order)


def _requirement(node: QueryNode) -> tg.Requirement:
    if isinstance(node, Term):
        return tg.literal_requirement(node.text.encode("utf-8"), node.case_sensitive)
    if isinstance(node, Regex):
        return regex_requirement(node.pattern)
    if isinstance(node, Filter):
        if node.kind is FilterKind.SYMBOL:
            return _requirement(node.child)
        return tg.TRUE
    if isinstance(node, And):
        return tg.req_and(_requirement(c) for c in node.children)
    if isinstance(node, Or):
        return tg.req_or(_requirement(c) for c in node.children)
    raise TypeError(f"not a query node: {node!r}")


def plan_trigrams(node: QueryNode) -> CompiledQuery:
    """Compile a tree into a trigram pre-filter plus the tree used for verification."""
    required = _requirement(node)
    return CompiledQuery(
        tree=node,
        required=required,
        scan_fallback=tg.is_true(required),
        atoms=content_atoms(node),
    )


def compile_query(text: str) -> CompiledQuery:
    return plan_trigrams(parse_query(text))


@functools.lru_cache(maxsize=4096)
def cached_regex(pattern: str):
    return compile_regex(pattern)


@functools.lru_cache(maxsize=4096)
def cached_multiline_regex(pattern: str):
    """The same pattern with ``^``/``$`` matching at every line break, for whole-file scans."""
    return re.compile(cached_regex(pattern).pattern, re.MULTILINE)


def scope_filters(node: QueryNode) -> Dict[FilterKind, str]:
    """repo:/rev: filters that constrain the whole query (top-level conjuncts only)."""
    parts = node.children if isinstance(node, And) else (node,)
    scope = {}
    for p in parts:
        if isinstance(p, Filter) and p.kind in (FilterKind.REPO, FilterKind.REVISION):
            scope.setdefault(p.kind, p.argument)
    return scope
