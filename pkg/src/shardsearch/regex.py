"""The restricted regex dialect accepted in queries.

Supported: literals, escaped metacharacters, character classes, ``.``,
``*``/``+``/``?``, alternation, grouping, ``^``/``$`` and the escapes
``\\b \\B \\d \\D \\w \\W \\s \\S \\n \\t``. No backreferences, counted
repetition, lookaround or inline flags. Patterns are parsed as bytes so the
literal analysis agrees byte-for-byte with Python's ``re`` on bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from .trigrams import TRUE, AllOf, Requirement, extract_trigrams, is_true, req_and, req_or

METACHARS = b".*+?()[]{}|^$\\/"
_CLASS_ESCAPES = frozenset(b"dDwWsS")
_ANCHOR_ESCAPES = frozenset(b"bB")
_CTRL_ESCAPES = {ord("n"): 10, ord("t"): 9}


class RegexSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at byte {position}")
        self.message = message
        self.position = position


@dataclass
class Lit:
    byte: int


@dataclass
class Single:
    """Any single-byte matcher that is not a fixed literal (``.``, classes, ``\\d``)."""


@dataclass
class Anchor:
    pass


@dataclass
class Group:
    inner: "Node"


@dataclass
class Alt:
    branches: List["Node"]


@dataclass
class Concat:
    items: List["Node"]


@dataclass
class Repeat:
    inner: "Node"
    op: str


Node = object


class _Parser:
    def __init__(self, pattern: bytes):
        self.p = pattern
        self.i = 0

    def peek(self):
        return self.p[self.i] if self.i < len(self.p) else None

    def error(self, message, pos=None):
        raise RegexSyntaxError(message, self.i if pos is None else pos)

    def parse(self):
        node = self.alt()
        if self.i != len(self.p):
            self.error("unbalanced ')'")
        return node

    def alt(self):
        branches = [self.concat()]
        while self.peek() == ord("|"):
            self.i += 1
            branches.append(self.concat())
        return branches[0] if len(branches) == 1 else Alt(branches)

    def concat(self):
        items = []
        while True:
            c = self.peek()
            if c is None or c in b"|)":
                break
            items.append(self.repeat())
        return Concat(items)

    def repeat(self):
        atom = self.atom()
        c = self.peek()
        if c is not None and c in b"*+?":
            if isinstance(atom, Anchor):
                self.error("nothing to repeat")
            self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt in b"*+?{":
                self.error("multiple repeat")
            return Repeat(atom, chr(c))
        return atom

    def atom(self):
        c = self.peek()
        if c in b"*+?":
            self.error("nothing to repeat")
        if c in b"{}":
            self.error("braces must be escaped")
        if c == ord("("):
            open_pos = self.i
            self.i += 1
            if self.peek() == ord("?"):
                self.error("group extensions are not supported")
            inner = self.alt()
            if self.peek() != ord(")"):
                self.error("missing ')'", open_pos)
            self.i += 1
            return Group(inner)
        if c == ord("["):
            return self.char_class()
        if c == ord("."):
            self.i += 1
            return Single()
        if c in b"^$":
            self.i += 1
            return Anchor()
        if c == ord("\\"):
            return self.escape()
        self.i += 1
        return Lit(c)

    def escape(self):
        pos = self.i
        self.i += 1
        c = self.peek()
        if c is None:
            self.error("trailing backslash", pos)
        self.i += 1
        if c in METACHARS:
            return Lit(c)
        if c in _CLASS_ESCAPES:
            return Single()
        if c in _ANCHOR_ESCAPES:
            return Anchor()
        if c in _CTRL_ESCAPES:
            return Lit(_CTRL_ESCAPES[c])
        self.error(f"unsupported escape '\\{chr(c)}'", pos)

    def char_class(self):
        open_pos = self.i
        self.i += 1
        if self.peek() == ord("^"):
            self.i += 1
        first = True
        while True:
            c = self.peek()
            if c is None:
                self.error("unterminated character class", open_pos)
            if c == ord("]") and not first:
                self.i += 1
                return Single()
            if c == ord("["):
                self.error("nested '[' must be escaped")
            if c in b"-&~|" and self.i + 1 < len(self.p) and self.p[self.i + 1] == c:
                self.error("ambiguous set operation")
            item_pos = self.i
            lo = self.class_atom()
            first = False
            if (
                self.peek() == ord("-")
                and self.i + 1 < len(self.p)
                and self.p[self.i + 1] != ord("]")
            ):
                self.i += 1
                hi = self.class_atom()
                if lo is None or hi is None:
                    self.error("bad character range", item_pos)
                if lo > hi:
                    self.error("reversed character range", item_pos)

    def class_atom(self):
        """Consume one class member; return its byte value, or None for ``\\d``-style sets."""
        c = self.peek()
        if c == ord("\\"):
            pos = self.i
            self.i += 1
            e = self.peek()
            if e is None:
                self.error("trailing backslash", pos)
            self.i += 1
            if e in METACHARS or e == ord("-"):
                return e
            if e in _CLASS_ESCAPES:
                return None
            if e in _CTRL_ESCAPES:
                return _CTRL_ESCAPES[e]
            self.error(f"unsupported escape '\\{chr(e)}'", pos)
        self.i += 1
        return c


def parse_regex(pattern: bytes):
    if isinstance(pattern, str):
        pattern = pattern.encode("utf-8")
    return _Parser(pattern).parse()


def compile_regex(pattern: str) -> "re.Pattern[bytes]":
    """Validate ``pattern`` against the dialect and compile it for byte matching."""
    raw = pattern.encode("utf-8")
    parse_regex(raw)
    try:
        return re.compile(raw)
    except re.error as exc:  # dialect and re disagree; surface as a syntax error
        raise RegexSyntaxError(str(exc), exc.pos or 0) from exc


def _requirement(node) -> Requirement:
    if isinstance(node, Concat):
        parts = []
        run = bytearray()

        def flush():
            if len(run) >= 3:
                parts.append(AllOf(frozenset(extract_trigrams(bytes(run)))))
            run.clear()

        for item in node.items:
            if isinstance(item, Lit):
                run.append(item.byte)
            elif isinstance(item, Anchor):
                continue
            elif isinstance(item, Repeat) and item.op == "+" and isinstance(item.inner, Lit):
                run.append(item.inner.byte)
                flush()
            else:
                flush()
                if isinstance(item, Repeat):
                    if item.op == "+":
                        parts.append(_requirement(item.inner))
                elif isinstance(item, (Group, Alt, Concat)):
                    parts.append(_requirement(item))
        flush()
        return req_and(parts)
    if isinstance(node, Group):
        return _requirement(node.inner)
    if isinstance(node, Alt):
        branches = [_requirement(b) for b in node.branches]
        if any(is_true(b) for b in branches):
            return TRUE
        return req_or(branches)
    if isinstance(node, Repeat):
        return _requirement(node.inner) if node.op == "+" else TRUE
    return TRUE


def regex_requirement(pattern: str) -> Requirement:
    """Trigrams every matching line must contain: all mandatory literal runs of three or more bytes."""
    return _requirement(parse_regex(pattern.encode("utf-8")))


def mandatory_literals(pattern: str) -> List[bytes]:
    """Mandatory literal runs (length >= 3) at the top level of ``pattern``, longest first."""
    node = parse_regex(pattern.encode("utf-8"))
    if not isinstance(node, Concat):
        node = Concat([node])
    runs: List[bytes] = []
    run = bytearray()
    for item in node.items:
        if isinstance(item, Lit):
            run.append(item.byte)
            continue
        if isinstance(item, Anchor):
            continue
        if isinstance(item, Repeat) and item.op == "+" and isinstance(item.inner, Lit):
            run.append(item.inner.byte)
        if len(run) >= 3:
            runs.append(bytes(run))
        run.clear()
    if len(run) >= 3:
        runs.append(bytes(run))
    return sorted(runs, key=lambda r: (-len(r), r))


def escape_literal(text: str) -> str:
    """Escape ``text`` so it matches literally under the dialect."""
    meta = METACHARS.decode("ascii")
    return "".join("\\" + ch if ch in meta else ch for ch in text)
