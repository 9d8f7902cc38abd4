"""Pack search hits into a token-budgeted context bundle."""

from __future__ import annotations

import logging
import math
import re
import subprocess
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from .errors import AdapterFailure, MissingFile
from .miner import split_lines
from .shard import SearchResult, Shard
from .symbols import Language, language_for_path

log = logging.getLogger(__name__)

DEFAULT_MODEL_MAX = 8192
DEFAULT_BUFFER = 256
DEFAULT_TOP_K = 5
DEFAULT_CONTEXT_LINES = 3

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]+")


class Tokenizer(Protocol):
    def count(self, text: str) -> int:
        ...


class DefaultTokenizer:
    """Identifier runs are one token; other non-space runs cost one token per two bytes."""

    def count(self, text: str) -> int:
        total = 0
        for m in _TOKEN_RE.finditer(text):
            run = m.group(0)
            c = run[0]
            if c.isascii() and (c.isalnum() or c == "_"):
                total += 1
            else:
                total += math.ceil(len(run.encode("utf-8")) / 2)
        return total


class CallableTokenizer:
    """Wrap any ``str -> int`` function, e.g. a subword tokenizer's ``len(encode(text))``."""

    def __init__(self, fn: Callable[[str], int]):
        self.fn = fn

    def count(self, text: str) -> int:
        try:
            return int(self.fn(text))
        except Exception as exc:
            raise AdapterFailure(str(exc)) from exc


class CommandTokenizer:
    """Run an external command with the text on stdin; it must print a token count."""

    def __init__(self, argv: Sequence[str], timeout: float = 10.0):
        self.argv = list(argv)
        self.timeout = timeout

    def count(self, text: str) -> int:
        try:
            proc = subprocess.run(
                self.argv,
                input=text.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
                check=True,
            )
            return int(proc.stdout.decode().strip())
        except (OSError, subprocess.SubprocessError, ValueError) as exc:
            raise AdapterFailure(f"token counter {self.argv[0]!r} failed: {exc}") from exc


DEFAULT_TOKENIZER = DefaultTokenizer()


def count_tokens(text: str, tokenizer: Optional[Tokenizer] = None) -> int:
    if not text:
        return 0
    if tokenizer is None or isinstance(tokenizer, DefaultTokenizer):
        return DEFAULT_TOKENIZER.count(text)
    try:
        n = tokenizer.count(text)
        if n < 0:
            raise AdapterFailure(f"negative token count {n}")
        return n
    except AdapterFailure as exc:
        log.warning("%s; falling back to the default token counter", exc)
        return DEFAULT_TOKENIZER.count(text)


@dataclass(frozen=True)
class TokenBudget:
    model_max: int
    reserved_buffer: int
    prefix_suffix_tokens: int
    total_constraint: int
    per_file_budget: int
    top_k_files: int


def compute_budget(
    model_max: int = DEFAULT_MODEL_MAX,
    reserved_buffer: int = DEFAULT_BUFFER,
    prefix: str = "",
    suffix: str = "",
    tokenizer: Optional[Tokenizer] = None,
    per_file_budget: Optional[int] = None,
    top_k: int = DEFAULT_TOP_K,
) -> TokenBudget:
    """Context room T = M - tokens(prefix) - tokens(suffix) - B.

    Without an explicit ``per_file_budget`` R is half of T (at least 1); an
    explicit R is capped at T whenever T is positive.
    """
    if model_max <= 0:
        raise ValueError("model_max must be positive")
    if reserved_buffer < 0:
        raise ValueError("reserved_buffer must be non-negative")
    if top_k < 1:
        raise ValueError("top_k must be positive")
    used = count_tokens(prefix, tokenizer) + count_tokens(suffix, tokenizer)
    total = model_max - used - reserved_buffer
    if per_file_budget is None:
        r = max(1, total // 2)
    else:
        if per_file_budget < 1:
            raise ValueError("per_file_budget must be positive")
        r = min(per_file_budget, total) if total > 0 else per_file_budget
    return TokenBudget(model_max, reserved_buffer, used, total, r, top_k)


@dataclass(frozen=True)
class Snippet:
    path: str
    repo_id: str
    revision_id: str
    line_start: int
    line_end: int
    text: str
    score: float
    token_count: int

    def sort_key(self):
        return (-self.score, self.path, self.line_start, self.repo_id, self.revision_id)


@dataclass
class ContextBundle:
    cp_id: str
    snippets: List[Snippet] = field(default_factory=list)
    total_tokens: int = 0
    rendered: str = ""


class ContentSource(Protocol):
    def get_file(self, repo_id: str, revision_id: str, path: str) -> Optional[str]:
        ...


class ShardContentSource:
    def __init__(self, shards: Iterable[Shard]):
        self._shards: Dict[Tuple[str, str], Shard] = {
            (s.meta.repo_id, s.meta.revision_id): s for s in shards
        }

    def get_file(self, repo_id: str, revision_id: str, path: str) -> Optional[str]:
        shard = self._shards.get((repo_id, revision_id))
        if shard is None:
            return None
        rec = shard.get_file(path)
        return None if rec is None else rec.content.decode("utf-8", errors="replace")


def merge_overlaps(snippets: Sequence[Snippet], tokenizer: Optional[Tokenizer] = None) -> List[Snippet]:
    """Union snippets of one file whose line ranges overlap or touch (gap <= 1)."""
    if not snippets:
        return []
    first = snippets[0]
    for s in snippets:
        if (s.path, s.repo_id, s.revision_id) != (first.path, first.repo_id, first.revision_id):
            raise ValueError("merge_overlaps expects snippets of a single file and revision")
    ordered = sorted(snippets, key=lambda s: (s.line_start, s.line_end, -s.score))
    groups: List[List[Snippet]] = [[ordered[0]]]
    end = ordered[0].line_end
    for s in ordered[1:]:
        if s.line_start <= end + 1:
            groups[-1].append(s)
            end = max(end, s.line_end)
        else:
            groups.append([s])
            end = s.line_end
    out = []
    for g in groups:
        if len(g) == 1:
            out.append(g[0])
            continue
        lines: Dict[int, str] = {}
        for s in g:
            for offset, text in enumerate(s.text.split("\n")):
                lines.setdefault(s.line_start + offset, text)
        lo = min(s.line_start for s in g)
        hi = max(s.line_end for s in g)
        text = "\n".join(lines.get(n, "") for n in range(lo, hi + 1))
        out.append(
            Snippet(
                first.path,
                first.repo_id,
                first.revision_id,
                lo,
                hi,
                text,
                max(s.score for s in g),
                count_tokens(text, tokenizer),
            )
        )
    return out


def truncate_to_budget(snippet: Snippet, budget: int, tokenizer: Optional[Tokenizer] = None) -> Optional[Snippet]:
    """Drop trailing whole lines until the snippet fits; None if even one line does not."""
    if snippet.token_count <= budget:
        return snippet
    lines = snippet.text.split("\n")
    # largest line count that fits; the chosen prefix is re-counted, so an
    # adapter that is not monotone can shorten the cut but never overflow it
    lo, hi = 0, len(lines) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if count_tokens("\n".join(lines[:mid]), tokenizer) <= budget:
            lo = mid
        else:
            hi = mid - 1
    if lo == 0:
        return None
    text = "\n".join(lines[:lo])
    n = count_tokens(text, tokenizer)
    if n > budget:
        return None
    return replace(snippet, line_end=snippet.line_start + lo - 1, text=text, token_count=n)


_COMMENT = {Language.KOTLIN: "//", Language.PYTHON: "#"}


def snippet_header(snippet: Snippet, language: Optional[Language] = None) -> str:
    lang = Language(language) if language is not None else Language.OTHER
    if lang is Language.OTHER:
        lang = language_for_path(snippet.path)
    comment = _COMMENT.get(lang, "#")
    return f"{comment} {snippet.path}:{snippet.line_start}-{snippet.line_end}@{snippet.revision_id}"


def _candidates(
    results: Sequence[SearchResult],
    source: ContentSource,
    budget: TokenBudget,
    tokenizer: Optional[Tokenizer],
    context_lines: int,
) -> List[Snippet]:
    groups: Dict[Tuple[str, str, str], List[SearchResult]] = {}
    for r in results:
        groups.setdefault((r.repo_id, r.revision_id, r.path), []).append(r)
    out: List[Snippet] = []
    for (repo, rev, path), hits in groups.items():
        content = source.get_file(repo, rev, path)
        if content is None:
            raise MissingFile(f"{path} is not in {repo}@{rev}")
        lines = split_lines(content)
        n = max(1, len(lines))
        whole = "\n".join(lines)
        whole_tokens = count_tokens(whole, tokenizer)
        best = max(h.score for h in hits)
        if whole_tokens <= budget.per_file_budget:
            out.append(Snippet(path, repo, rev, 1, n, whole, best, whole_tokens))
            continue
        pieces = []
        for h in hits:
            lo = max(1, h.line_start - context_lines)
            hi = min(n, h.line_end + context_lines)
            text = "\n".join(lines[lo - 1 : hi])
            pieces.append(Snippet(path, repo, rev, lo, hi, text, h.score, count_tokens(text, tokenizer)))
        for merged in merge_overlaps(pieces, tokenizer):
            cut = truncate_to_budget(merged, budget.per_file_budget, tokenizer)
            if cut is not None:
                out.append(cut)
    out.sort(key=Snippet.sort_key)
    return out


def assemble(
    results: Sequence[SearchResult],
    source: ContentSource,
    budget: TokenBudget,
    tokenizer: Optional[Tokenizer] = None,
    cp_id: str = "",
    language: Optional[Language] = None,
    context_lines: int = DEFAULT_CONTEXT_LINES,
) -> ContextBundle:
    """Greedy top-k packing under the per-file budget R and the total constraint T.

    A file that fits in R is taken whole; otherwise its hits (widened by
    ``context_lines``) are merged and truncated to R. Candidates are admitted
    in score order until the next one would overflow T or k is reached. The
    header line of each block is charged against T as well.
    """
    bundle = ContextBundle(cp_id)
    if budget.total_constraint <= 0 or not results:
        return bundle
    blocks = []
    for cand in _candidates(results, source, budget, tokenizer, context_lines):
        if len(bundle.snippets) >= budget.top_k_files:
            break
        header = snippet_header(cand, language)
        cost = count_tokens(header, tokenizer) + cand.token_count
        if bundle.total_tokens + cost > budget.total_constraint:
            break
        bundle.snippets.append(cand)
        bundle.total_tokens += cost
        blocks.append(header + "\n" + cand.text)
    bundle.rendered = "\n".join(blocks)
    return bundle
