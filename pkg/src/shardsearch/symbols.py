"""Lexical declaration grammar and keyword tables for Kotlin and Python."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import List

from .errors import UnsupportedLanguage


class Language(str, enum.Enum):
    KOTLIN = "Kotlin"
    PYTHON = "Python"
    OTHER = "Other"


class SymbolKind(str, enum.Enum):
    FUNCTION = "Function"
    CLASS = "Class"
    OTHER = "Other"


@dataclass(frozen=True, order=True)
class SymbolEntry:
    name: str
    kind: SymbolKind
    path: str
    line: int


_EXTENSIONS = {
    ".py": Language.PYTHON,
    ".pyi": Language.PYTHON,
    ".kt": Language.KOTLIN,
    ".kts": Language.KOTLIN,
}


def language_for_path(path: str) -> Language:
    dot = path.rfind(".")
    if dot < 0:
        return Language.OTHER
    return _EXTENSIONS.get(path[dot:].lower(), Language.OTHER)


# Fixed tables; deliberately not taken from the running interpreter so that
# mining results do not drift between Python versions.
PYTHON_KEYWORDS = frozenset(
    """
    False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield
    """.split()
)

KOTLIN_KEYWORDS = frozenset(
    """
    as break class continue do else false for fun if in interface is null
    object package return super this throw true try typealias typeof val var
    when while import private public protected internal override abstract
    open suspend inline companion lateinit sealed const vararg operator infix
    tailrec external crossinline noinline reified
    """.split()
)

_KEYWORDS = {
    Language.PYTHON: PYTHON_KEYWORDS,
    Language.KOTLIN: KOTLIN_KEYWORDS,
    Language.OTHER: frozenset(),
}


def keywords_for(language: Language) -> frozenset:
    return _KEYWORDS[Language(language)]


IDENT = r"[A-Za-z_][A-Za-z0-9_]*"

_PY_FUNCTION = re.compile(rf"^[ \t]*(?:async[ \t]+)?def[ \t]+({IDENT})")
_PY_CLASS = re.compile(rf"^[ \t]*class[ \t]+({IDENT})")

_KT_MODIFIERS = r"(?:(?:@[A-Za-z_][\w.]*(?:\([^)]*\))?|[a-z]+)[ \t]+)*"
_KT_FUNCTION = re.compile(
    rf"^[ \t]*{_KT_MODIFIERS}fun[ \t]+(?:<[^>]*>[ \t]*)?(?:{IDENT}(?:<[^>]*>)?\??\.)*({IDENT})"
)
_KT_CLASS = re.compile(rf"^[ \t]*{_KT_MODIFIERS}(?:class|interface|object)[ \t]+({IDENT})")

_GRAMMAR = {
    Language.PYTHON: ((_PY_FUNCTION, SymbolKind.FUNCTION), (_PY_CLASS, SymbolKind.CLASS)),
    Language.KOTLIN: ((_KT_FUNCTION, SymbolKind.FUNCTION), (_KT_CLASS, SymbolKind.CLASS)),
}


def declarations_in_line(line: str, language: Language):
    """Yield ``(name, kind)`` for every declaration the grammar finds on one line."""
    rules = _GRAMMAR.get(Language(language))
    if rules is None:
        raise UnsupportedLanguage(f"no declaration grammar for {language}")
    keywords = _KEYWORDS[Language(language)]
    for pattern, kind in rules:
        m = pattern.match(line)
        if m and m.group(1) not in keywords:
            yield m.group(1), kind


def extract_symbols(path: str, content: str, language: Language) -> List[SymbolEntry]:
    """Return function and class declarations of one file, ordered by (line, name)."""
    language = Language(language)
    if language not in _GRAMMAR:
        raise UnsupportedLanguage(f"symbol extraction is not supported for {language.value}")
    entries = []
    for lineno, line in enumerate(content.split("\n"), start=1):
        for name, kind in declarations_in_line(line, language):
            entries.append(SymbolEntry(name, kind, path, lineno))
    entries.sort(key=lambda e: (e.line, e.name, e.kind.value))
    return entries
