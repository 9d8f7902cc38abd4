"""The 19-step query ladder: variant generation, scoping and execution."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from .errors import ClientUnreachable, Overloaded, RequestTimeout
from .miner import CompletionPoint, MinedTerms, RankedIdentifier
from .query import quote_term
from .regex import escape_literal
from .shard import SearchResult

log = logging.getLogger(__name__)

# Table II rows, in the order they are listed there.
VARIANT_NAMES = (
    "functions_classes_naive",
    "functions_classes_or",
    "functions_classes_top5",
    "functions_classes_top4",
    "functions_classes_top3",
    "functions_classes_regex",
    "navigation_naive",
    "navigation_unpacked",
    "navigation_unpacked_or",
    "navigation_unpacked_top5",
    "navigation_unpacked_top4",
    "navigation_unpacked_top3",
    "navigation_regex",
    "identifiers_naive",
    "identifiers_or",
    "identifiers_top5",
    "identifiers_top4",
    "identifiers_top3",
    "identifiers_regex",
)

# Execution order: most specific first, broadest (OR over all identifiers) last.
LADDER_ORDER = (
    "functions_classes_naive",
    "functions_classes_top5",
    "functions_classes_top4",
    "functions_classes_top3",
    "functions_classes_regex",
    "functions_classes_or",
    "navigation_naive",
    "navigation_unpacked",
    "navigation_unpacked_top5",
    "navigation_unpacked_top4",
    "navigation_unpacked_top3",
    "navigation_regex",
    "navigation_unpacked_or",
    "identifiers_naive",
    "identifiers_top5",
    "identifiers_top4",
    "identifiers_top3",
    "identifiers_regex",
    "identifiers_or",
)

# name -> (source list on MinedTerms, construction, k)
_RECIPES: Dict[str, Tuple[str, str, int]] = {
    "functions_classes_naive": ("functions_classes", "and", 0),
    "functions_classes_or": ("functions_classes", "or", 0),
    "functions_classes_top5": ("functions_classes", "top", 5),
    "functions_classes_top4": ("functions_classes", "top", 4),
    "functions_classes_top3": ("functions_classes", "top", 3),
    "functions_classes_regex": ("functions_classes", "regex", 0),
    "navigation_naive": ("navigation", "and", 0),
    "navigation_unpacked": ("navigation_unpacked", "and", 0),
    "navigation_unpacked_or": ("navigation_unpacked", "or", 0),
    "navigation_unpacked_top5": ("navigation_unpacked", "top", 5),
    "navigation_unpacked_top4": ("navigation_unpacked", "top", 4),
    "navigation_unpacked_top3": ("navigation_unpacked", "top", 3),
    "navigation_regex": ("navigation", "regex", 0),
    "identifiers_naive": ("identifiers", "and", 0),
    "identifiers_or": ("identifiers", "or", 0),
    "identifiers_top5": ("identifiers", "top", 5),
    "identifiers_top4": ("identifiers", "top", 4),
    "identifiers_top3": ("identifiers", "top", 3),
    "identifiers_regex": ("identifiers", "regex", 0),
}


class Mode(str, enum.Enum):
    SINGLE = "SingleShard"
    CROSS = "CrossShard"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        t = text.lower()
        if t in ("single", "singleshard", "single-shard"):
            return cls.SINGLE
        if t in ("cross", "crossshard", "cross-shard"):
            return cls.CROSS
        raise ValueError(f"unknown mode {text!r}")


@dataclass(frozen=True)
class QueryVariant:
    name: str
    query_text: Optional[str]
    term_count: int
    terms: Tuple[str, ...] = ()
    construction: str = "and"


@dataclass
class Attempt:
    variant: str
    result_count: int
    duration: float
    retries: int
    error: Optional[str] = None


@dataclass
class LadderOutcome:
    cp_id: str
    mode: Mode
    winning_variant: Optional[str]
    attempts: List[Attempt]
    hit: bool
    results: List[SearchResult] = field(default_factory=list)


@dataclass
class LadderConfig:
    timeout_per_request: float = 0.2
    max_retries: int = 3
    retry_backoff: Tuple[float, ...] = (0.05, 0.1, 0.2)
    max_results_per_query: int = 50
    order: Tuple[str, ...] = LADDER_ORDER

    def __post_init__(self):
        if self.timeout_per_request <= 0:
            raise ValueError("timeout_per_request must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.max_results_per_query < 1:
            raise ValueError("max_results_per_query must be positive")
        if sorted(self.order) != sorted(VARIANT_NAMES):
            raise ValueError("order must be a permutation of the 19 variant names")

    def backoff(self, attempt: int) -> float:
        if not self.retry_backoff:
            return 0.0
        return self.retry_backoff[min(attempt, len(self.retry_backoff) - 1)]


class SearchClient(Protocol):
    def search(self, query: str, max_results: int, timeout: float) -> List[SearchResult]:
        ...


def _render(construction: str, terms: Sequence[str]) -> str:
    if construction == "or":
        return " or ".join(quote_term(t) for t in terms)
    if construction == "regex":
        return " or ".join("/\\b" + escape_literal(t) + "\\b/" for t in terms)
    return " ".join(quote_term(t) for t in terms)


def generate_variants(
    cp: Optional[CompletionPoint], mined: MinedTerms, order: Sequence[str] = LADDER_ORDER
) -> List[QueryVariant]:
    """All 19 variants in ladder order; empty ones carry ``term_count == 0``.

    ``cp`` is accepted for symmetry with :func:`attach_scope`; the variants
    themselves depend only on the mined terms.

    A top-K variant is blanked when its family has fewer than K terms and an
    earlier AND-style variant already used exactly the same term set.
    """
    seen_and = set()
    out = []
    for name in order:
        source, construction, k = _RECIPES[name]
        ranked: List[RankedIdentifier] = getattr(mined, source)
        names = [r.name for r in ranked]
        if construction == "top":
            terms = names[:k]
            if len(names) < k and frozenset(terms) in seen_and:
                terms = []
            form = "and"
        else:
            terms = names
            form = construction
        if not terms:
            out.append(QueryVariant(name, None, 0, (), form))
            continue
        if form == "and":
            seen_and.add(frozenset(terms))
        out.append(QueryVariant(name, _render(form, terms), len(terms), tuple(terms), form))
    return out


def attach_scope(variant: QueryVariant, cp: CompletionPoint, mode: Mode) -> str:
    """Prefix the repository (and, in single-shard mode, revision) filter."""
    if variant.term_count <= 0 or variant.query_text is None:
        raise ValueError(f"variant {variant.name} has no terms and is never sent")
    body = variant.query_text
    if variant.construction in ("or", "regex") and variant.term_count > 1:
        body = f"({body})"
    scope = f"repo:{_scope_value(cp.repo_id)}"
    if Mode(mode) is Mode.SINGLE:
        scope += f" rev:{_scope_value(cp.revision_id)}"
    return f"{scope} {body}"


def _scope_value(value: str) -> str:
    if not value or any(c.isspace() or c in '()"' for c in value) or value == "or":
        return quote_term(value)
    return value


def execute_ladder(
    client: SearchClient,
    variants: Sequence[QueryVariant],
    config: LadderConfig,
    cp: CompletionPoint,
    mode: Mode = Mode.SINGLE,
    result_filter: Optional[Callable[[List[SearchResult]], List[SearchResult]]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> LadderOutcome:
    """Send variants in order until one returns results.

    Overload and timeout responses are retried up to ``config.max_retries``
    times; a variant that exhausts its retries counts as empty and the ladder
    moves on. If every variant that was sent failed only because the service
    was unreachable, :class:`ClientUnreachable` is raised.
    """
    mode = Mode(mode)
    attempts: List[Attempt] = []
    reached = False
    for variant in variants:
        if variant.term_count == 0:
            continue
        query = attach_scope(variant, cp, mode)
        retries = 0
        error = None
        started = time.perf_counter()
        while True:
            try:
                results = client.search(query, config.max_results_per_query, config.timeout_per_request)
                reached = True
                error = None
                break
            except (Overloaded, RequestTimeout) as exc:
                reached = True
                error = type(exc).__name__
            except ClientUnreachable as exc:
                error = f"unreachable: {exc}"
            if retries >= config.max_retries:
                results = []
                break
            sleep(config.backoff(retries))
            retries += 1
        if result_filter is not None and results:
            results = result_filter(results)
        attempts.append(
            Attempt(variant.name, len(results), time.perf_counter() - started, retries, error)
        )
        if results:
            return LadderOutcome(cp.id, mode, variant.name, attempts, True, list(results))
    if attempts and not reached:
        raise ClientUnreachable(f"search service unreachable for every variant of {cp.id}")
    return LadderOutcome(cp.id, mode, None, attempts, False, [])
