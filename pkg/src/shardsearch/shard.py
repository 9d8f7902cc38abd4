"""Immutable per-revision shards: content store, trigram postings, symbols, search."""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import trigrams as tg
from .errors import DuplicatePath, EmptyIdentity
from .query import (
    And,
    CompiledQuery,
    Filter,
    FilterKind,
    Or,
    QueryNode,
    Regex,
    Term,
    cached_multiline_regex,
    cached_regex,
)
from .regex import regex_requirement
from .symbols import Language, SymbolEntry, extract_symbols

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

_EMPTY_LINES = np.zeros(0, dtype=np.int64)
_FILES_CACHE_SIZE = 1 << 16


@dataclass(frozen=True)
class ShardMeta:
    repo_id: str
    revision_id: str
    file_count: int
    built_at: datetime
    format_version: int = FORMAT_VERSION


def _distinct_sorted(values: np.ndarray) -> np.ndarray:
    if len(values) < 2:
        return values
    return values[np.concatenate(([True], values[1:] != values[:-1]))]


def compute_line_offsets(content: bytes) -> Tuple[int, ...]:
    """Byte offsets of line starts. A trailing newline does not open a new line."""
    if not content:
        return (0,)
    nl = np.flatnonzero(np.frombuffer(content, dtype=np.uint8) == 10) + 1
    nl = nl[nl < len(content)]
    return (0,) + tuple(int(x) for x in nl)


@dataclass
class FileRecord:
    path: str
    content: bytes
    line_offsets: Tuple[int, ...]
    language: Language

    @property
    def line_count(self) -> int:
        return len(self.line_offsets) if self.content else 0

    def line_bytes(self, line: int) -> bytes:
        """Text of 1-based ``line`` without its newline."""
        start = self.line_offsets[line - 1]
        end = self.line_offsets[line] if line < len(self.line_offsets) else len(self.content)
        text = self.content[start:end]
        return text[:-1] if text.endswith(b"\n") else text

    def line_of(self, offset: int) -> int:
        return bisect.bisect_right(self.line_offsets, offset)

    @cached_property
    def folded(self) -> bytes:
        return self.content.lower()

    @cached_property
    def content_array(self) -> np.ndarray:
        return np.frombuffer(self.content, dtype=np.uint8)

    @cached_property
    def folded_array(self) -> np.ndarray:
        return np.frombuffer(self.folded, dtype=np.uint8)

    @cached_property
    def offsets_array(self) -> np.ndarray:
        return np.asarray(self.line_offsets, dtype=np.int64)

    @cached_property
    def line_ends(self) -> np.ndarray:
        """Offset just past the last byte of each line, newline excluded."""
        ends = np.empty(len(self.line_offsets), dtype=np.int64)
        ends[:-1] = self.offsets_array[1:] - 1
        ends[-1] = len(self.content) - (1 if self.content.endswith(b"\n") else 0)
        return ends

    @property
    def last_match_start(self) -> int:
        """Largest offset at which a match can still belong to a line."""
        return len(self.content) - 1 if self.content.endswith(b"\n") else len(self.content)


@dataclass
class Postings:
    """Trigram postings in compressed-row form.

    ``keys`` holds the sorted 24-bit trigram codes, ``starts`` the row
    boundaries into ``positions`` and ``positions`` the blob offsets (sorted
    within a row). ``file_starts`` maps blob offsets back to files.
    """

    keys: np.ndarray
    starts: np.ndarray
    positions: np.ndarray
    file_starts: np.ndarray
    _files_cache: Dict[bytes, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def row(self, trigram: bytes) -> np.ndarray:
        key = tg.trigram_key(trigram)
        i = int(np.searchsorted(self.keys, key))
        if i >= len(self.keys) or int(self.keys[i]) != key:
            return self.positions[:0]
        return self.positions[self.starts[i] : self.starts[i + 1]]

    def files_with(self, trigram: bytes) -> np.ndarray:
        got = self._files_cache.get(trigram)
        if got is None:
            # rows are sorted, so their file indices are too
            got = _distinct_sorted(np.searchsorted(self.file_starts, self.row(trigram), side="right") - 1)
            if len(self._files_cache) >= _FILES_CACHE_SIZE:
                self._files_cache.clear()
            self._files_cache[trigram] = got
        return got

    def lookup(self, trigram: bytes) -> List[Tuple[int, int]]:
        pos = self.row(trigram)
        fidx = np.searchsorted(self.file_starts, pos, side="right") - 1
        return [(int(f), int(p - self.file_starts[f])) for f, p in zip(fidx, pos)]

    def as_dict(self) -> Dict[bytes, List[Tuple[int, int]]]:
        out = {}
        for key in self.keys:
            k = int(key)
            tri = bytes([(k >> 16) & 255, (k >> 8) & 255, k & 255])
            out[tri] = self.lookup(tri)
        return out


@dataclass
class Shard:
    meta: ShardMeta
    files: List[FileRecord]
    postings: Postings
    symbols: List[SymbolEntry]

    @property
    def trigram_postings(self) -> Dict[bytes, List[Tuple[int, int]]]:
        """The postings as a plain mapping; materialised on demand, intended for small shards."""
        return self.postings.as_dict()

    @cached_property
    def file_index(self) -> Dict[str, int]:
        return {f.path: i for i, f in enumerate(self.files)}

    @cached_property
    def symbols_by_path(self) -> Dict[str, List[SymbolEntry]]:
        out: Dict[str, List[SymbolEntry]] = {}
        for s in self.symbols:
            out.setdefault(s.path, []).append(s)
        return out

    @cached_property
    def line_table(self) -> "LineTable":
        return LineTable(self)

    def get_file(self, path: str) -> Optional[FileRecord]:
        i = self.file_index.get(path)
        return None if i is None else self.files[i]


@dataclass(frozen=True)
class SearchResult:
    repo_id: str
    revision_id: str
    path: str
    line_start: int
    line_end: int
    score: float
    fragment: str

    def sort_key(self):
        return (-self.score, self.path, self.line_start, self.repo_id, self.revision_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(
            repo_id=d["repo_id"],
            revision_id=d["revision_id"],
            path=d["path"],
            line_start=int(d["line_start"]),
            line_end=int(d["line_end"]),
            score=float(d["score"]),
            fragment=d["fragment"],
        )


# --------------------------------------------------------------------------
# building


def build_postings(contents: Sequence[bytes]) -> Postings:
    file_starts = np.zeros(len(contents) + 1, dtype=np.int64)
    if contents:
        file_starts[1:] = np.cumsum([len(c) for c in contents])
    blob = b"".join(contents)
    if len(blob) < 3:
        empty = np.zeros(0, dtype=np.uint32)
        return Postings(empty, np.zeros(1, dtype=np.int64), empty, file_starts)
    arr = np.frombuffer(blob, dtype=np.uint8).astype(np.uint32)
    codes = (arr[:-2] << 16) | (arr[1:-1] << 8) | arr[2:]
    pos = np.arange(len(codes), dtype=np.int64)
    owner = np.searchsorted(file_starts, pos, side="right") - 1
    valid = pos + 3 <= file_starts[owner + 1]
    codes = codes[valid]
    pos = pos[valid]
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    positions = pos[order].astype(np.uint32)
    if len(codes):
        boundary = np.flatnonzero(np.diff(codes)) + 1
        row_starts = np.concatenate(([0], boundary))
        keys = codes[row_starts]
        starts = np.concatenate((row_starts, [len(codes)])).astype(np.int64)
    else:
        keys = np.zeros(0, dtype=np.uint32)
        starts = np.zeros(1, dtype=np.int64)
    return Postings(keys.astype(np.uint32), starts, positions, file_starts)


def _as_bytes(content) -> bytes:
    return content.encode("utf-8") if isinstance(content, str) else bytes(content)


def build_shard(
    repo_id: str,
    revision_id: str,
    files: Iterable[Tuple[str, bytes, Language]],
    built_at: Optional[datetime] = None,
) -> Shard:
    """Index one (repository, revision) snapshot.

    Files are stored in path order. Binary files (containing a NUL byte) are
    skipped with a warning. ``built_at`` defaults to the current UTC time; pass
    it explicitly when byte-identical rebuilds matter.
    """
    if not repo_id or not repo_id.strip() or not revision_id or not revision_id.strip():
        raise EmptyIdentity("repo_id and revision_id must be non-empty")
    seen = set()
    records: List[FileRecord] = []
    for path, content, language in files:
        if path in seen:
            raise DuplicatePath(path)
        seen.add(path)
        data = _as_bytes(content)
        if b"\x00" in data:
            log.warning("skipping binary file %s in %s@%s", path, repo_id, revision_id)
            continue
        records.append(FileRecord(path, data, compute_line_offsets(data), Language(language)))
    records.sort(key=lambda r: r.path)

    symbols: List[SymbolEntry] = []
    for rec in records:
        if rec.language is not Language.OTHER:
            text = rec.content.decode("utf-8", errors="replace")
            symbols.extend(extract_symbols(rec.path, text, rec.language))

    meta = ShardMeta(
        repo_id=repo_id,
        revision_id=revision_id,
        file_count=len(records),
        built_at=built_at or datetime.now(timezone.utc),
    )
    return Shard(meta, records, build_postings([r.content for r in records]), symbols)


# --------------------------------------------------------------------------
# scoring and search


def score_match(distinct_terms: int, symbol_hit: bool, line_length: int) -> float:
    """Relevance of one matching line: multi-term and symbol-definition lines rank first."""
    return 2.0 * distinct_terms + (3.0 if symbol_hit else 0.0) + 1.0 / (1.0 + line_length / 100.0)


def candidate_mask(shard: Shard, required: tg.Requirement) -> np.ndarray:
    n = len(shard.files)
    cache: Dict[bytes, np.ndarray] = {}

    def mask_for(tri: bytes) -> np.ndarray:
        m = cache.get(tri)
        if m is None:
            m = np.zeros(n, dtype=bool)
            m[shard.postings.files_with(tri)] = True
            cache[tri] = m
        return m

    def ev(req) -> np.ndarray:
        if isinstance(req, tg.AllOf):
            out = np.ones(n, dtype=bool)
            for t in sorted(req.trigrams):
                out &= mask_for(t)
                if not out.any():
                    break
            return out
        if isinstance(req, tg.And):
            out = np.ones(n, dtype=bool)
            for c in req.children:
                out &= ev(c)
            return out
        out = np.zeros(n, dtype=bool)
        for c in req.children:
            out |= ev(c)
        return out

    return ev(required)


class LineTable:
    """Every line of a shard numbered globally, in file order then line order."""

    def __init__(self, shard: Shard):
        self.file_starts = shard.postings.file_starts.astype(np.int64)
        self.blob = np.frombuffer(b"".join(f.content for f in shard.files), dtype=np.uint8)
        starts, ends, owner, numbers = [], [], [], []
        self.base = np.zeros(len(shard.files) + 1, dtype=np.int64)
        for i, rec in enumerate(shard.files):
            count = rec.line_count
            self.base[i + 1] = self.base[i] + count
            if count:
                starts.append(rec.offsets_array + self.file_starts[i])
                ends.append(rec.line_ends + self.file_starts[i])
                owner.append(np.full(count, i, dtype=np.int64))
                numbers.append(np.arange(1, count + 1, dtype=np.int64))
        join = lambda parts: np.concatenate(parts) if parts else _EMPTY_LINES  # noqa: E731
        self.starts, self.ends, self.owner, self.numbers = join(starts), join(ends), join(owner), join(numbers)
        # position of each file in path order, for the final tie-break
        self.path_rank = np.argsort(np.argsort(np.array([f.path for f in shard.files], dtype=object), kind="stable"))
        sym_lines = [self.base[shard.file_index[sy.path]] + sy.line - 1 for sy in shard.symbols]
        self.symbol_lines = np.array(sym_lines, dtype=np.int64)
        self.symbol_owner = self.owner[self.symbol_lines] if len(sym_lines) else _EMPTY_LINES
        self.has_symbol = np.zeros(len(self.starts), dtype=bool)
        self.has_symbol[self.symbol_lines] = True
        ids: Dict[str, int] = {}
        self.symbol_name = np.array([ids.setdefault(sy.name, len(ids)) for sy in shard.symbols], dtype=np.int64)
        self.names = list(ids)

    @cached_property
    def folded(self) -> np.ndarray:
        return np.frombuffer(self.blob.tobytes().lower(), dtype=np.uint8)

    @cached_property
    def line_of_byte(self) -> np.ndarray:
        """Global line index of every blob byte (a newline belongs to the line it ends)."""
        if not len(self.starts):
            return np.zeros(0, dtype=np.int32)
        sizes = np.diff(np.append(self.starts, len(self.blob)))
        return np.repeat(np.arange(len(self.starts), dtype=np.int32), sizes)

    def lines_at(self, positions: np.ndarray) -> np.ndarray:
        """Global line index of each blob offset."""
        return self.line_of_byte[positions]



def _find_all(arr: np.ndarray, needle: bytes, starts: Optional[np.ndarray] = None, checked: int = 0) -> np.ndarray:
    """Offsets where ``needle`` occurs in ``arr``; ``starts`` may pre-seed candidates whose first ``checked`` bytes match."""
    if not needle:
        return _EMPTY_LINES
    span = len(arr) - len(needle) + 1
    if span <= 0:
        return _EMPTY_LINES
    if starts is None:
        starts = np.flatnonzero(arr[:span] == needle[0])
        checked = 1
    else:
        starts = starts[starts < span]
    for j in range(checked, len(needle)):
        if not len(starts):
            break
        starts = starts[arr[starts + j] == needle[j]]
    return starts


_WORD = np.zeros(256, dtype=bool)
_WORD[[ord(c) for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_"]] = True
_REGEX_META = set(".^$*+?{}[]\\|()")


def boundary_literal(pattern: str) -> Optional[Tuple[bytes, bool, bool]]:
    """``(literal, left, right)`` when ``pattern`` is a plain literal with optional ``\\b`` ends."""
    tokens: List[object] = []
    i = 0
    while i < len(pattern):
        c = pattern[i]
        if c == "\\":
            if i + 1 >= len(pattern):
                return None
            nxt = pattern[i + 1]
            if nxt == "b":
                tokens.append(None)
            elif nxt.isascii() and not nxt.isalnum() and nxt not in "\n\t":
                tokens.append(nxt)
            else:
                return None
            i += 2
            continue
        if c in _REGEX_META or c == "\n":
            return None
        tokens.append(c)
        i += 1
    left = bool(tokens) and tokens[0] is None
    right = len(tokens) > int(left) and tokens[-1] is None
    body = tokens[int(left) : len(tokens) - int(right)]
    if not body or any(t is None for t in body):
        return None
    return "".join(body).encode("utf-8"), left, right


class _Finder:
    """Literal search over the whole shard blob, restricted to a set of files."""

    def __init__(self, shard: Shard, table: LineTable):
        self.shard = shard
        self.table = table

    def _owner(self, pos: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.table.file_starts, pos, side="right") - 1

    def seed_cost(self, needle: bytes) -> int:
        """Postings entries scanned to find ``needle`` case-sensitively (blob size without an index)."""
        if len(needle) < 3:
            return len(self.table.blob)
        return min(len(self.shard.postings.row(needle[k : k + 3])) for k in range(len(needle) - 2))

    def occurrences(self, needle: bytes, case_sensitive: bool, scope: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted blob offsets of ``needle`` inside files selected by ``scope``, with their global lines."""
        table = self.table
        if case_sensitive and len(needle) >= 3:
            rows = [self.shard.postings.row(needle[k : k + 3]) for k in range(len(needle) - 2)]
            k = min(range(len(rows)), key=lambda j: len(rows[j]))
            pos = rows[k].astype(np.int64) - k
            pos = pos[pos >= 0]
            arr = table.blob
        else:
            arr = table.blob if case_sensitive else table.folded
            if not case_sensitive:
                needle = needle.lower()
            span = len(arr) - len(needle) + 1
            pos = np.flatnonzero(arr[: max(span, 0)] == needle[0])
        if not scope.all():
            pos = pos[scope[table.owner[table.lines_at(pos)]]]
        pos = _find_all(arr, needle, pos, 0)
        lines = table.lines_at(pos)
        # drop occurrences running from one file into the next
        keep = pos + len(needle) <= table.file_starts[table.owner[lines] + 1]
        return pos[keep], lines[keep]

    def term_lines(self, term: Term, scope: np.ndarray) -> np.ndarray:
        """Sorted global indices of the lines containing ``term``."""
        needle = term.text.encode("utf-8")
        table = self.table
        if not needle:
            # an empty term occurs on every line
            return np.flatnonzero(scope[table.owner])
        if b"\n" in needle or not len(table.blob):
            return _EMPTY_LINES
        return _distinct_sorted(self.occurrences(needle, term.case_sensitive, scope)[1])

    def bounded_lines(self, literal: bytes, left: bool, right: bool, scope: np.ndarray) -> np.ndarray:
        """Lines matching ``\\b?literal\\b?``; line and file edges count as non-word neighbours."""
        table = self.table
        if not len(table.blob):
            return _EMPTY_LINES
        pos, lines = self.occurrences(literal, True, scope)
        blob = table.blob
        owner = table.owner[lines]
        keep = np.ones(len(pos), dtype=bool)
        if left:
            at_edge = pos == table.file_starts[owner]
            before = np.where(at_edge, False, _WORD[blob[np.maximum(pos - 1, 0)]])
            keep &= _WORD[blob[pos]] != before
        if right:
            end = pos + len(literal)
            at_edge = end >= table.file_starts[owner + 1]
            after = np.where(at_edge, False, _WORD[blob[np.minimum(end, len(blob) - 1)]])
            keep &= _WORD[blob[end - 1]] != after
        return _distinct_sorted(lines[keep])


def _regex_lines(rec: FileRecord, pattern: str) -> np.ndarray:
    return _scan_lines(rec, cached_regex(pattern), cached_multiline_regex(pattern))


def _scan_lines(rec: FileRecord, rx: "re.Pattern[bytes]", mrx: "re.Pattern[bytes]") -> np.ndarray:
    """Sorted 1-based numbers of the lines of one file on which ``pattern`` matches.

    The whole file is scanned in multiline mode. ``^``, ``$``, ``\\b`` and
    ``\\B`` see the same neighbourhood at a line break as at the ends of a
    lone line, so a match that stays inside one line is a match of that line.
    A match that runs across a line break is re-checked against its first line
    alone and the scan restarts at the following line, so no line is skipped.
    """
    content = rec.content
    if not content:
        return _EMPTY_LINES
    n = len(rec.line_offsets)
    last = rec.last_match_start
    found = []
    pos = 0
    while pos <= len(content):
        spans = np.fromiter(
            (x for m in mrx.finditer(content, pos) for x in m.span()), dtype=np.int64
        ).reshape(-1, 2)
        spans = spans[spans[:, 0] <= last]
        lines = np.searchsorted(rec.offsets_array, spans[:, 0], side="right")
        crossing = np.flatnonzero(spans[:, 1] > rec.line_ends[lines - 1])
        if not len(crossing):
            found.append(lines)
            break
        i = int(crossing[0])
        found.append(lines[:i])
        line = int(lines[i])
        if rx.search(rec.line_bytes(line)):
            found.append(np.array([line], dtype=np.int64))
        if line >= n:
            break
        pos = rec.line_offsets[line]
    return np.unique(np.concatenate(found)) if found else _EMPTY_LINES


def atom_matches_name(atom: QueryNode, name: str) -> bool:
    """Whether a Term or Regex atom matches a symbol name."""
    data = name.encode("utf-8")
    if isinstance(atom, Term):
        needle = atom.text.encode("utf-8")
        if atom.case_sensitive:
            return needle in data
        return needle.lower() in data.lower()
    if isinstance(atom, Regex):
        return cached_regex(atom.pattern).search(data) is not None
    return False


def _name_matcher(atoms: Sequence[QueryNode]) -> Callable[[str], bool]:
    """A predicate equivalent to ``any(atom_matches_name(a, name) for a in atoms)``.

    The atoms are folded into at most two alternations (one matched against
    the name, one against its lower-cased form), since an alternation finds
    a match exactly when one of its branches does.
    """
    exact: List[bytes] = []
    folded: List[bytes] = []
    for atom in atoms:
        if isinstance(atom, Term) and atom.case_sensitive:
            exact.append(re.escape(atom.text.encode("utf-8")))
        elif isinstance(atom, Term):
            folded.append(re.escape(atom.text.encode("utf-8").lower()))
        elif isinstance(atom, Regex):
            exact.append(b"(?:" + cached_regex(atom.pattern).pattern + b")")
    try:
        rx_exact = re.compile(b"|".join(exact)) if exact else None
        rx_folded = re.compile(b"|".join(folded)) if folded else None
    except (re.error, OverflowError, RecursionError):
        return lambda name: any(atom_matches_name(a, name) for a in atoms)

    def match(name: str) -> bool:
        data = name.encode("utf-8")
        if rx_exact is not None and rx_exact.search(data):
            return True
        return rx_folded is not None and rx_folded.search(data.lower()) is not None

    return match


def _symbol_hits(table: LineTable, shard: Shard, lines: np.ndarray, atoms: Sequence[QueryNode]) -> np.ndarray:
    """Whether each of the sorted global ``lines`` declares a symbol whose name an atom matches."""
    on_lines = np.flatnonzero(np.isin(table.symbol_lines, lines))
    matches = _name_matcher(atoms)
    verdict: Dict[int, bool] = {}
    hit_lines = []
    for k in on_lines:
        name_id = int(table.symbol_name[k])
        ok = verdict.get(name_id)
        if ok is None:
            ok = verdict[name_id] = matches(table.names[name_id])
        if ok:
            hit_lines.append(table.symbol_lines[k])
    return np.isin(lines, np.array(hit_lines, dtype=np.int64))


class _ShardEval:
    """Evaluates a query over a whole shard at once.

    Atom results are sorted arrays of global line indices, computed only for
    the files in a scope mask; tree nodes evaluate to one boolean per file.
    """

    def __init__(self, shard: Shard, candidates: np.ndarray):
        self.shard = shard
        self.table = shard.line_table
        self.finder = _Finder(shard, self.table)
        self.candidates = candidates
        self.n = len(shard.files)
        self.memo: Dict[QueryNode, Tuple[np.ndarray, np.ndarray]] = {}

    def lines(self, atom: QueryNode, scope: np.ndarray) -> np.ndarray:
        scope = scope & self.candidates
        cached = self.memo.get(atom)
        if cached is not None:
            covered, got = cached
            if not (scope & ~covered).any():
                return got[scope[self.table.owner[got]]]
        got = self._compute(atom, scope)
        self.memo[atom] = (scope, got)
        return got

    def _compute(self, atom: QueryNode, scope: np.ndarray) -> np.ndarray:
        table = self.table
        if isinstance(atom, Term):
            return self.finder.term_lines(atom, scope)
        if isinstance(atom, Regex):
            bounded = boundary_literal(atom.pattern)
            if bounded is not None:
                return self.finder.bounded_lines(*bounded, scope)
            scope = scope & candidate_mask(self.shard, regex_requirement(atom.pattern))
            parts = [
                table.base[fi] + _regex_lines(self.shard.files[fi], atom.pattern) - 1
                for fi in np.flatnonzero(scope)
            ]
            return np.concatenate(parts) if parts else _EMPTY_LINES
        keep = np.flatnonzero(scope[table.symbol_owner]) if len(table.symbol_owner) else _EMPTY_LINES
        symbols = self.shard.symbols
        hits = [k for k in keep if atom_matches_name(atom.child, symbols[k].name)]
        return np.unique(table.symbol_lines[np.array(hits, dtype=np.int64)])

    def _cost(self, node: QueryNode) -> float:
        if isinstance(node, Filter) and node.kind is not FilterKind.SYMBOL:
            return -1.0
        if isinstance(node, Term) and node.case_sensitive:
            return float(self.finder.seed_cost(node.text.encode("utf-8")))
        if isinstance(node, Regex):
            bounded = boundary_literal(node.pattern)
            if bounded is not None:
                return float(self.finder.seed_cost(bounded[0]))
        return float(len(self.table.blob)) + (1.0 if isinstance(node, (And, Or)) else 0.0)

    def truth(self, node: QueryNode, scope: np.ndarray) -> np.ndarray:
        """Which files of ``scope`` satisfy ``node``."""
        if isinstance(node, And):
            out = scope.copy()
            # cheapest children first: later ones only look at surviving files
            for c in sorted(node.children, key=self._cost):
                if not out.any():
                    break
                out &= self.truth(c, out)
            return out
        if isinstance(node, Or):
            out = np.zeros(self.n, dtype=bool)
            for c in node.children:
                rest = scope & ~out
                if not rest.any():
                    break
                out |= self.truth(c, rest)
            return out
        if isinstance(node, Filter):
            if node.kind is FilterKind.REPO:
                return scope & (self.shard.meta.repo_id == node.argument)
            if node.kind is FilterKind.REVISION:
                return scope & (self.shard.meta.revision_id == node.argument)
            if node.kind is FilterKind.FILE:
                rx = cached_regex(node.argument)
                paths = np.array([rx.search(f.path.encode("utf-8")) is not None for f in self.shard.files], dtype=bool)
                return scope & paths
        lines = self.lines(node, scope)
        return np.bincount(self.table.owner[lines], minlength=self.n) > 0


def _name_atoms(atoms: Sequence[QueryNode]) -> List[QueryNode]:
    out = []
    for a in atoms:
        out.append(a.child if isinstance(a, Filter) else a)
    return out


def search_shard_stats(
    shard: Shard, query: CompiledQuery, limit: Optional[int] = None
) -> Tuple[List[SearchResult], int, int]:
    """Like :func:`search_shard` but also returns (files considered, files matched)."""
    if not shard.files:
        return [], 0, 0
    mask = candidate_mask(shard, query.required)
    considered = int(mask.sum())
    if not considered or not query.atoms:
        return [], considered, 0
    ev = _ShardEval(shard, mask)
    table = ev.table
    live = ev.truth(query.tree, mask)
    if not live.any():
        return [], considered, 0
    hits = [ev.lines(atom, live) for atom in query.atoms]
    counts = np.bincount(np.concatenate(hits), minlength=len(table.starts))
    lines = np.flatnonzero(counts)
    if not len(lines):
        return [], considered, 0
    distinct = counts[lines]
    owner = table.owner[lines]
    matched = len(_distinct_sorted(owner))

    length = table.ends[lines] - table.starts[lines]
    # same operation order as score_match, so the floats are identical
    base = 2.0 * distinct + 1.0 / (1.0 + length / 100.0)
    # a symbol hit adds 3; only lines that could then reach the top need checking
    unsure = table.has_symbol[lines]
    if limit is not None and limit < len(lines):
        floor = np.partition(base, len(base) - limit)[len(base) - limit]
        unsure &= base + 3.0 >= floor
    symbol_hit = np.zeros(len(lines), dtype=bool)
    if unsure.any():
        symbol_hit[unsure] = _symbol_hits(table, shard, lines[unsure], _name_atoms(query.atoms))
    score = 2.0 * distinct + np.where(symbol_hit, 3.0, 0.0) + 1.0 / (1.0 + length / 100.0)
    chosen = np.arange(len(lines))
    if limit is not None and limit < len(lines):
        # everything scoring at least the limit-th best, ties included
        cutoff = np.partition(score, len(score) - limit)[len(score) - limit]
        chosen = np.flatnonzero(score >= cutoff)
    order = chosen[np.lexsort((table.numbers[lines[chosen]], table.path_rank[owner[chosen]], -score[chosen]))]
    if limit is not None:
        order = order[:limit]
    results = []
    for i in order:
        rec = shard.files[int(owner[i])]
        line = int(table.numbers[lines[i]])
        results.append(
            SearchResult(
                repo_id=shard.meta.repo_id,
                revision_id=shard.meta.revision_id,
                path=rec.path,
                line_start=line,
                line_end=line,
                score=float(score[i]),
                fragment=rec.line_bytes(line).decode("utf-8", errors="replace"),
            )
        )
    return results, considered, matched


def search_shard(shard: Shard, query: CompiledQuery, limit: Optional[int] = None) -> List[SearchResult]:
    """All matching lines (at most ``limit``), best score first.

    Files are pre-filtered by the query's trigram requirement and then
    verified exactly, so the output equals a full scan.
    """
    return search_shard_stats(shard, query, limit)[0]
