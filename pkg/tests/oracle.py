"""Random corpora, random queries and a brute-force evaluator used as the search oracle.

The evaluator deliberately shares nothing with the indexed search path: it
splits each file into lines itself, matches terms with ``in`` and regexes with
``re`` on the raw pattern, and never looks at trigrams.
"""

from __future__ import annotations

import random
import re
from typing import Dict, List, Set, Tuple

from shardsearch import Language, extract_symbols
from shardsearch.query import And, Filter, FilterKind, Or, Regex, Term, render_query

WORDS = [
    "parseConfig", "loadYaml", "session", "commit", "handler", "value", "items",
    "Foo", "foo", "FOO", "bar", "Bar", "baz", "qux", "alpha", "beta", "gamma",
    "user_id", "index", "shard", "token", "count", "result", "node", "path",
    "data", "cache", "x", "y", "ab", "abc", "abab",
]
PUNCT = [" ", " ", " ", ".", "(", ")", ":", "=", ", ", "+", "[", "]", "\t", "#", '"']


def random_line(rng: random.Random) -> str:
    kind = rng.random()
    indent = " " * rng.choice([0, 0, 2, 4, 8])
    if kind < 0.12:
        return f"{indent}def {rng.choice(WORDS)}({rng.choice(WORDS)}):"
    if kind < 0.2:
        return f"{indent}class {rng.choice(WORDS).capitalize()}:"
    if kind < 0.25:
        return f"{indent}fun {rng.choice(WORDS)}(a: Int) = a"
    if kind < 0.3:
        return ""
    parts = [indent]
    for _ in range(rng.randint(1, 8)):
        parts.append(rng.choice(WORDS))
        parts.append(rng.choice(PUNCT))
    return "".join(parts).rstrip("\\")


def random_corpus(rng: random.Random, max_files: int = 50, max_lines: int = 200) -> List[Tuple[str, bytes, Language]]:
    files = []
    n = rng.randint(0, max_files)
    for i in range(n):
        ext, lang = rng.choice([(".py", Language.PYTHON), (".kt", Language.KOTLIN), (".txt", Language.OTHER)])
        lines = [random_line(rng) for _ in range(rng.randint(0, max_lines))]
        text = "\n".join(lines)
        if lines and rng.random() < 0.7:
            text += "\n"
        files.append((f"dir{i % 4}/f{i}{ext}", text.encode("utf-8"), lang))
    return files


# -- queries ---------------------------------------------------------------

_REGEX_TEMPLATES = [
    lambda r, w: w,
    lambda r, w: w[:2] + "." + w[3:] if len(w) > 3 else w + ".",
    lambda r, w: "\\b" + w + "\\b",
    lambda r, w: "^\\s*def " + w,
    lambda r, w: w + "\\(",
    lambda r, w: "(" + w + "|" + r.choice(WORDS) + ")",
    lambda r, w: w + "[a-z]*",
    lambda r, w: "[A-Z]" + w[1:] if len(w) > 1 else w,
    lambda r, w: w + "+",
    lambda r, w: "a+",
    lambda r, w: w + "$",
    lambda r, w: "\\w+_\\w+",
    lambda r, w: w + "\\.\\w+",
    lambda r, w: "x?y",
    lambda r, w: "^\\s*$",
    lambda r, w: "y*",
]


def random_atom(rng: random.Random):
    roll = rng.random()
    word = rng.choice(WORDS)
    if roll < 0.45:
        return Term(word, case_sensitive=rng.random() < 0.4)
    if roll < 0.55:
        phrase = word + rng.choice([" ", "(", ".", " = "]) + rng.choice(WORDS)
        return Term(phrase, case_sensitive=True)
    if roll < 0.85:
        return Regex(rng.choice(_REGEX_TEMPLATES)(rng, word))
    inner = Term(word, case_sensitive=rng.random() < 0.3) if rng.random() < 0.7 else Regex("^" + word[:2])
    return Filter(FilterKind.SYMBOL, "", inner)


def random_tree(rng: random.Random, depth: int = 0):
    if depth >= 2 or rng.random() < 0.4:
        return random_atom(rng)
    n = rng.randint(2, 3)
    children = [random_tree(rng, depth + 1) for _ in range(n)]
    if rng.random() < 0.15:
        children.append(Filter(FilterKind.FILE, rng.choice(["\\.py$", "dir1", "f1", "\\.kt$"])))
    return (And if rng.random() < 0.5 else Or)(tuple(children))


def random_query(rng: random.Random) -> str:
    return render_query(random_tree(rng))


# -- brute-force evaluation ---------------------------------------------------


def file_lines(content: bytes) -> List[bytes]:
    if not content:
        return []
    lines = content.split(b"\n")
    if content.endswith(b"\n"):
        lines.pop()
    return lines


def _name_match(atom, name: str) -> bool:
    if isinstance(atom, Term):
        if atom.case_sensitive:
            return atom.text in name
        return atom.text.lower() in name.lower()
    return re.search(atom.pattern.encode(), name.encode()) is not None


def _atom_lines(atom, lines: List[bytes], symbols) -> Set[int]:
    out = set()
    if isinstance(atom, Term):
        needle = atom.text.encode()
        for n, line in enumerate(lines, start=1):
            hay = line if atom.case_sensitive else line.lower()
            if (needle if atom.case_sensitive else needle.lower()) in hay:
                out.add(n)
    elif isinstance(atom, Regex):
        rx = re.compile(atom.pattern.encode())
        for n, line in enumerate(lines, start=1):
            if rx.search(line):
                out.add(n)
    else:
        for s in symbols:
            if _name_match(atom.child, s.name):
                out.add(s.line)
    return out


def naive_search(repo: str, rev: str, files, tree) -> Set[Tuple[str, int]]:
    """Full scan: a file matches when the tree is true over its atoms; report all atom lines."""
    hits = set()
    for path, content, lang in files:
        if b"\0" in content:
            continue
        lines = file_lines(content)
        symbols = []
        if lang is not Language.OTHER:
            symbols = extract_symbols(path, content.decode("utf-8", "replace"), lang)
        cache: Dict[int, Set[int]] = {}

        def atom(node):
            key = id(node)
            if key not in cache:
                cache[key] = _atom_lines(node, lines, symbols)
            return cache[key]

        def truth(node) -> bool:
            if isinstance(node, And):
                return all(truth(c) for c in node.children)
            if isinstance(node, Or):
                return any(truth(c) for c in node.children)
            if isinstance(node, Filter) and node.kind is FilterKind.REPO:
                return node.argument == repo
            if isinstance(node, Filter) and node.kind is FilterKind.REVISION:
                return node.argument == rev
            if isinstance(node, Filter) and node.kind is FilterKind.FILE:
                return re.search(node.argument.encode(), path.encode()) is not None
            return bool(atom(node))

        if not truth(tree):
            continue
        stack = [tree]
        matched: Set[int] = set()
        while stack:
            node = stack.pop()
            if isinstance(node, (And, Or)):
                stack.extend(node.children)
            elif isinstance(node, (Term, Regex)) or (isinstance(node, Filter) and node.kind is FilterKind.SYMBOL):
                matched |= atom(node)
        hits.update((path, n) for n in matched)
    return hits


def naive_ranked(repo: str, rev: str, files, tree, limit=None) -> List[Tuple[str, int, float]]:
    """The full scan again, scored line by line with ``score_match`` and ordered like the engine."""
    from shardsearch import score_match
    from shardsearch.query import content_atoms

    atoms = content_atoms(tree)
    names = [a.child if isinstance(a, Filter) else a for a in atoms]
    hits = naive_search(repo, rev, files, tree)
    by_path = {path: (content, lang) for path, content, lang in files}
    ranked = []
    for path, n in hits:
        content, lang = by_path[path]
        lines = file_lines(content)
        symbols = []
        if lang is not Language.OTHER:
            symbols = extract_symbols(path, content.decode("utf-8", "replace"), lang)
        distinct = sum(1 for a in atoms if n in _atom_lines(a, lines, symbols))
        symbol_hit = any(s.line == n and _name_match(a, s.name) for s in symbols for a in names)
        ranked.append((path, n, score_match(distinct, symbol_hit, len(lines[n - 1]))))
    ranked.sort(key=lambda r: (-r[2], r[0], r[1]))
    return ranked if limit is None else ranked[:limit]
