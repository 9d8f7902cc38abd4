"""Mine ranked query terms from the diff around a completion point."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import UnsupportedLanguage
from .symbols import IDENT, Language, declarations_in_line, keywords_for

CONTEXT_LINES = 3
WINDOW_RADIUS = 3

_IDENT_RE = re.compile(rf"(?<![A-Za-z0-9_]){IDENT}")
_CALL_RE = re.compile(rf"(?<![A-Za-z0-9_])({IDENT})\(")
_CHAIN_RE = re.compile(rf"(?<![A-Za-z0-9_.]){IDENT}(?:\.{IDENT})+(?![A-Za-z0-9_])")


@dataclass(frozen=True)
class CompletionPoint:
    id: str
    repo_id: str
    revision_id: str
    path: str
    prefix: str
    suffix: str


class Origin(str, enum.Enum):
    ADDED = "Added"
    REMOVED = "Removed"
    CONTEXT = "ContextWindow"


@dataclass(frozen=True)
class DiffLine:
    text: str
    origin: Origin
    modified_line_no: Optional[int]
    # line in modified-file coordinates used for proximity; Removed lines
    # take the position of the next kept line
    anchor: int


@dataclass
class DiffContext:
    diff_lines: List[DiffLine]
    completion_line: int

    @property
    def text(self) -> str:
        return "\n".join(d.text for d in self.diff_lines)


class IdentifierKind(str, enum.Enum):
    FUNCTION_OR_CLASS = "FunctionOrClass"
    NAVIGATION = "Navigation"
    IDENTIFIER = "Identifier"


@dataclass(frozen=True)
class RankedIdentifier:
    name: str
    kind: IdentifierKind
    frequency: int
    proximity: int


def split_lines(text: str) -> List[str]:
    if not text:
        return []
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    return lines


def reconstruct_modified(cp: CompletionPoint) -> Tuple[str, int]:
    """The modified file (prefix + suffix) and the 1-based line of the completion point."""
    return cp.prefix + cp.suffix, 1 + cp.prefix.count("\n")


# --------------------------------------------------------------------------
# diff


def myers_script(a: Sequence, b: Sequence) -> List[Tuple[str, int, int]]:
    """Shortest edit script between two sequences (Myers' greedy O(ND) algorithm).

    Returns ops ``("=", i, j)``, ``("-", i, j)`` and ``("+", i, j)`` where
    ``i``/``j`` are the positions in ``a``/``b`` before the op is applied.
    Deletions are emitted before insertions within a change.
    """
    n, m = len(a), len(b)
    lo = 0
    while lo < n and lo < m and a[lo] == b[lo]:
        lo += 1
    hi_a, hi_b = n, m
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    core = _myers_core(a[lo:hi_a], b[lo:hi_b])
    ops = [("=", i, i) for i in range(lo)]
    ops.extend((op, i + lo, j + lo) for op, i, j in core)
    ops.extend(("=", hi_a + k, hi_b + k) for k in range(n - hi_a))
    return ops


def _myers_core(a: Sequence, b: Sequence) -> List[Tuple[str, int, int]]:
    n, m = len(a), len(b)
    if n == 0:
        return [("+", 0, j) for j in range(m)]
    if m == 0:
        return [("-", i, 0) for i in range(n)]
    offset = n + m
    v = [0] * (2 * offset + 2)
    trace = []
    for d in range(n + m + 1):
        trace.append(v[:])
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v[offset + k - 1] < v[offset + k + 1]):
                x = v[offset + k + 1]
            else:
                x = v[offset + k - 1] + 1
            y = x - k
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            v[offset + k] = x
            if x >= n and y >= m:
                return _backtrack(trace, a, b, offset, d)
    raise AssertionError("unreachable: edit distance is bounded by n + m")


def _backtrack(trace, a, b, offset, d_final) -> List[Tuple[str, int, int]]:
    x, y = len(a), len(b)
    ops: List[Tuple[str, int, int]] = []
    for d in range(d_final, -1, -1):
        v = trace[d]
        k = x - y
        if d == 0:
            prev_k = 0
            prev_x = prev_y = 0
        else:
            if k == -d or (k != d and v[offset + k - 1] < v[offset + k + 1]):
                prev_k = k + 1
            else:
                prev_k = k - 1
            prev_x = v[offset + prev_k]
            prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            x -= 1
            y -= 1
            ops.append(("=", x, y))
        if d > 0:
            if x == prev_x:
                ops.append(("+", prev_x, prev_y))
            else:
                ops.append(("-", prev_x, prev_y))
        x, y = prev_x, prev_y
    ops.reverse()
    return _deletions_first(ops)


def _deletions_first(ops):
    out = []
    i = 0
    while i < len(ops):
        if ops[i][0] == "=":
            out.append(ops[i])
            i += 1
            continue
        j = i
        while j < len(ops) and ops[j][0] != "=":
            j += 1
        block = ops[i:j]
        out.extend(o for o in block if o[0] == "-")
        out.extend(o for o in block if o[0] == "+")
        i = j
    return out


def compute_diff(original: str, modified: str, completion_line: int) -> DiffContext:
    """Changed lines plus three lines of context around every hunk.

    When nothing changed, the seven-line window centred on the completion
    line stands in for the diff.
    """
    a = split_lines(original)
    b = split_lines(modified)
    ops = myers_script(a, b)
    changed = [op[0] != "=" for op in ops]
    if not any(changed):
        lo = max(1, completion_line - WINDOW_RADIUS)
        hi = min(len(b), completion_line + WINDOW_RADIUS)
        lines = [DiffLine(b[n - 1], Origin.CONTEXT, n, n) for n in range(lo, hi + 1)]
        return DiffContext(lines, completion_line)

    # distance, counted in unchanged lines, to the nearest change on either side
    big = len(ops) + 1
    before = [big] * len(ops)
    after = [big] * len(ops)
    dist = big
    for idx, is_change in enumerate(changed):
        dist = 0 if is_change else dist + 1
        before[idx] = dist
    dist = big
    for idx in range(len(ops) - 1, -1, -1):
        dist = 0 if changed[idx] else dist + 1
        after[idx] = dist

    last = max(1, len(b))
    lines = []
    for idx, (op, i, j) in enumerate(ops):
        if op == "=":
            if min(before[idx], after[idx]) <= CONTEXT_LINES:
                lines.append(DiffLine(b[j], Origin.CONTEXT, j + 1, j + 1))
        elif op == "+":
            lines.append(DiffLine(b[j], Origin.ADDED, j + 1, j + 1))
        else:
            lines.append(DiffLine(a[i], Origin.REMOVED, None, min(j + 1, last)))
    return DiffContext(lines, completion_line)


# --------------------------------------------------------------------------
# gathering


def _dedup(names: Iterable[str]) -> List[str]:
    return list(dict.fromkeys(names))


def gather_functions_classes(diff: DiffContext, language: Language) -> List[str]:
    """Declared names (per the declaration grammar) and names in call position."""
    language = Language(language)
    if language is Language.OTHER:
        raise UnsupportedLanguage("function/class gathering needs Kotlin or Python")
    kw = keywords_for(language)
    found = []
    for dl in diff.diff_lines:
        hits = [(m.start(1), m.group(1)) for m in _CALL_RE.finditer(dl.text)]
        for name, _kind in declarations_in_line(dl.text, language):
            hits.append((dl.text.find(name), name))
        found.extend(name for _pos, name in sorted(hits) if name not in kw)
    return _dedup(found)


def gather_navigation(diff: DiffContext, unpack: bool, language: Optional[Language] = None) -> List[str]:
    """Maximal dotted chains, or their component identifiers when ``unpack`` is set.

    With a ``language``, unpacked components that are keywords of that
    language (Kotlin ``this``, ``super``) are dropped.
    """
    chains = _dedup(m.group(0) for dl in diff.diff_lines for m in _CHAIN_RE.finditer(dl.text))
    if not unpack:
        return chains
    kw = keywords_for(language) if language is not None else frozenset()
    return _dedup(part for chain in chains for part in chain.split(".") if part not in kw)


def gather_identifiers(diff: DiffContext, language: Language) -> List[str]:
    kw = keywords_for(language)
    return _dedup(
        m.group(0)
        for dl in diff.diff_lines
        for m in _IDENT_RE.finditer(dl.text)
        if m.group(0) not in kw
    )


def _occurrence_re(name: str) -> "re.Pattern[str]":
    if "." in name:
        return re.compile(rf"(?<![A-Za-z0-9_.]){re.escape(name)}(?![A-Za-z0-9_])(?!\.[A-Za-z_])")
    return re.compile(rf"(?<![A-Za-z0-9_]){re.escape(name)}(?![A-Za-z0-9_])")


def rank_identifiers(
    names: Iterable[str], diff: DiffContext, kind: IdentifierKind = IdentifierKind.IDENTIFIER
) -> List[RankedIdentifier]:
    """Order names by frequency in the diff (descending), then proximity, then name."""
    ranked = []
    for name in _dedup(names):
        rx = _occurrence_re(name)
        freq = 0
        prox = None
        for dl in diff.diff_lines:
            c = len(rx.findall(dl.text))
            if c:
                freq += c
                d = abs(dl.anchor - diff.completion_line)
                prox = d if prox is None else min(prox, d)
        if freq == 0:
            raise ValueError(f"{name!r} does not occur in the diff")
        ranked.append(RankedIdentifier(name, kind, freq, prox))
    ranked.sort(key=lambda r: (-r.frequency, r.proximity, r.name))
    return ranked


@dataclass
class MinedTerms:
    functions_classes: List[RankedIdentifier] = field(default_factory=list)
    navigation: List[RankedIdentifier] = field(default_factory=list)
    navigation_unpacked: List[RankedIdentifier] = field(default_factory=list)
    identifiers: List[RankedIdentifier] = field(default_factory=list)


def mine(diff: DiffContext, language: Language) -> MinedTerms:
    """Run all three gathering families over a diff and rank each."""
    language = Language(language)
    if language is Language.OTHER:
        fc: List[str] = []
    else:
        fc = gather_functions_classes(diff, language)
    nav_lang = None if language is Language.OTHER else language
    return MinedTerms(
        functions_classes=rank_identifiers(fc, diff, IdentifierKind.FUNCTION_OR_CLASS),
        navigation=rank_identifiers(gather_navigation(diff, False), diff, IdentifierKind.NAVIGATION),
        navigation_unpacked=rank_identifiers(
            gather_navigation(diff, True, nav_lang), diff, IdentifierKind.NAVIGATION
        ),
        identifiers=rank_identifiers(gather_identifiers(diff, language), diff, IdentifierKind.IDENTIFIER),
    )


def mine_completion_point(cp: CompletionPoint, original: str, language: Language) -> Tuple[DiffContext, MinedTerms]:
    modified, line = reconstruct_modified(cp)
    diff = compute_diff(original, modified, line)
    return diff, mine(diff, language)


__all__ = [
    "CompletionPoint",
    "DiffContext",
    "DiffLine",
    "IdentifierKind",
    "MinedTerms",
    "Origin",
    "RankedIdentifier",
    "compute_diff",
    "gather_functions_classes",
    "gather_identifiers",
    "gather_navigation",
    "mine",
    "mine_completion_point",
    "myers_script",
    "rank_identifiers",
    "reconstruct_modified",
]
