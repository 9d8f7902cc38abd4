"""Trigram extraction and the boolean requirement expressions used for candidate filtering."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterable, Set, Tuple, Union


def extract_trigrams(text: bytes) -> Set[bytes]:
    """Every 3-byte window of ``text``; empty when shorter than three bytes."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return {text[i : i + 3] for i in range(len(text) - 2)}


def trigram_key(tri: bytes) -> int:
    return (tri[0] << 16) | (tri[1] << 8) | tri[2]


def case_variants(tri: bytes) -> FrozenSet[bytes]:
    """All ASCII case spellings of a trigram (at most eight)."""
    options = []
    for b in tri:
        c = bytes([b])
        options.append({c.lower(), c.upper()})
    return frozenset(b"".join(p) for p in itertools.product(*options))


@dataclass(frozen=True)
class AllOf:
    """Conjunction of trigram presences. An empty set is the constant *true*."""

    trigrams: FrozenSet[bytes] = frozenset()

    def is_true(self) -> bool:
        return not self.trigrams


@dataclass(frozen=True)
class And:
    children: Tuple["Requirement", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["Requirement", ...]


Requirement = Union[AllOf, And, Or]

TRUE = AllOf()


def is_true(req: Requirement) -> bool:
    return isinstance(req, AllOf) and req.is_true()


def req_and(children: Iterable[Requirement]) -> Requirement:
    trigrams: Set[bytes] = set()
    rest = []
    for child in children:
        if isinstance(child, AllOf):
            trigrams |= child.trigrams
        elif isinstance(child, And):
            for sub in child.children:
                if isinstance(sub, AllOf):
                    trigrams |= sub.trigrams
                else:
                    rest.append(sub)
        else:
            rest.append(child)
    if not rest:
        return AllOf(frozenset(trigrams))
    if trigrams:
        rest.insert(0, AllOf(frozenset(trigrams)))
    if len(rest) == 1:
        return rest[0]
    return And(tuple(rest))


def req_or(children: Iterable[Requirement]) -> Requirement:
    flat = []
    for child in children:
        if is_true(child):
            return TRUE
        if isinstance(child, Or):
            flat.extend(child.children)
        else:
            flat.append(child)
    if not flat:
        # an empty disjunction only arises from an empty query; stay permissive
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def literal_requirement(literal: bytes, case_sensitive: bool = True) -> Requirement:
    """Requirement implied by ``literal`` occurring somewhere in a file."""
    grams = extract_trigrams(literal)
    if case_sensitive:
        return AllOf(frozenset(grams))
    lowered = {g.lower() for g in grams}
    parts = []
    for g in sorted(lowered):
        variants = case_variants(g)
        if len(variants) == 1:
            parts.append(AllOf(variants))
        else:
            parts.append(Or(tuple(AllOf(frozenset([v])) for v in sorted(variants))))
    return req_and(parts)


def evaluate(req: Requirement, has: Callable[[bytes], bool]) -> bool:
    """Evaluate a requirement given a trigram membership predicate."""
    if isinstance(req, AllOf):
        return all(has(t) for t in req.trigrams)
    if isinstance(req, And):
        return all(evaluate(c, has) for c in req.children)
    return any(evaluate(c, has) for c in req.children)


def trigrams_of(req: Requirement) -> Set[bytes]:
    if isinstance(req, AllOf):
        return set(req.trigrams)
    out: Set[bytes] = set()
    for c in req.children:
        out |= trigrams_of(c)
    return out
