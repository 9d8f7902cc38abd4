import pytest

from shardsearch import Language, SymbolEntry, SymbolKind, UnsupportedLanguage, extract_symbols
from shardsearch.symbols import keywords_for, language_for_path


def test_python_class_and_method():
    got = extract_symbols("a.py", "class A:\n  def m(self): ...\n", Language.PYTHON)
    assert got == [
        SymbolEntry("A", SymbolKind.CLASS, "a.py", 1),
        SymbolEntry("m", SymbolKind.FUNCTION, "a.py", 2),
    ]


def test_kotlin_expression_function():
    assert extract_symbols("p.kt", "fun plus(a: Int) = a", Language.KOTLIN) == [
        SymbolEntry("plus", SymbolKind.FUNCTION, "p.kt", 1)
    ]


def test_empty_file():
    assert extract_symbols("e.py", "", Language.PYTHON) == []


def test_other_language_rejected():
    with pytest.raises(UnsupportedLanguage):
        extract_symbols("x.txt", "def f(): pass", Language.OTHER)


@pytest.mark.parametrize(
    "line,name,kind",
    [
        ("    async def fetch(url):", "fetch", SymbolKind.FUNCTION),
        ("class Config(Base):", "Config", SymbolKind.CLASS),
    ],
)
def test_python_declarations(line, name, kind):
    (entry,) = extract_symbols("m.py", line, Language.PYTHON)
    assert (entry.name, entry.kind) == (name, kind)


@pytest.mark.parametrize(
    "line,name,kind",
    [
        ("private suspend fun load(): Unit {", "load", SymbolKind.FUNCTION),
        ("fun <T> List<T>.second(): T = this[1]", "second", SymbolKind.FUNCTION),
        ("data class Point(val x: Int)", "Point", SymbolKind.CLASS),
        ("sealed interface Shape", "Shape", SymbolKind.CLASS),
        ("object Registry {", "Registry", SymbolKind.CLASS),
        ("companion object {", None, None),
    ],
)
def test_kotlin_declarations(line, name, kind):
    got = extract_symbols("m.kt", line, Language.KOTLIN)
    if name is None:
        assert got == []
    else:
        assert [(e.name, e.kind) for e in got] == [(name, kind)]


def test_order_is_line_then_name():
    src = "def b(): pass\ndef a(): pass\n"
    names = [e.name for e in extract_symbols("o.py", src, Language.PYTHON)]
    assert names == ["b", "a"]


def test_language_detection():
    assert language_for_path("src/x.py") is Language.PYTHON
    assert language_for_path("Main.kt") is Language.KOTLIN
    assert language_for_path("README.md") is Language.OTHER


def test_keyword_tables():
    assert "def" in keywords_for(Language.PYTHON)
    assert "val" in keywords_for(Language.KOTLIN)
    assert keywords_for(Language.OTHER) == frozenset()
