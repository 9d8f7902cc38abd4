import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from shardsearch import Language, MissingFile, SearchResult, build_shard
from shardsearch.miner import split_lines
from shardsearch.assembler import (
    CallableTokenizer,
    CommandTokenizer,
    DefaultTokenizer,
    ShardContentSource,
    Snippet,
    assemble,
    compute_budget,
    count_tokens,
    merge_overlaps,
    snippet_header,
    truncate_to_budget,
)


class DictSource:
    def __init__(self, files):
        self.files = files

    def get_file(self, repo, rev, path):
        return self.files.get(path)


def _snip(lo, hi, score=1.0, path="f.py"):
    text = "\n".join(f"l{n}" for n in range(lo, hi + 1))
    return Snippet(path, "r", "v", lo, hi, text, score, count_tokens(text))


def _res(path, line, score=1.0, rev="v"):
    return SearchResult("r", rev, path, line, line, score, "")


# -- token counting ---------------------------------------------------------------


@pytest.mark.parametrize("text,n", [("", 0), ("foo bar", 2), ("a+=1", 3), ("x  \n\t y", 2), ("->>", 2), ("é", 1)])
def test_default_counter(text, n):
    assert count_tokens(text) == n


def test_callable_adapter():
    assert count_tokens("a b c", CallableTokenizer(lambda t: len(t))) == 5


def test_failing_adapter_falls_back(caplog):
    def broken(text):
        raise RuntimeError("no vocab")

    assert count_tokens("foo bar", CallableTokenizer(broken)) == 2
    assert "falling back" in caplog.text


def test_command_adapter():
    tok = CommandTokenizer(["python3", "-c", "import sys; print(len(sys.stdin.read().split()))"])
    assert count_tokens("one two three", tok) == 3
    assert count_tokens("a b", CommandTokenizer(["/nonexistent/counter"])) == 2


# -- budget -------------------------------------------------------------------------


class Fixed:
    def __init__(self, n):
        self.n = n

    def count(self, text):
        return self.n


def test_budget_arithmetic():
    b = compute_budget(8192, 256, "p", "s", Fixed(1000))
    assert b.total_constraint == 5936
    assert b.per_file_budget == 2968


def test_budget_boundaries():
    assert compute_budget(1000, 0, "p", "s", Fixed(500)).total_constraint == 0
    assert compute_budget(100, 50, "p", "s", Fixed(40)).total_constraint == -30


def test_explicit_r_is_capped_at_t():
    assert compute_budget(100, 0, per_file_budget=500).per_file_budget == 100
    assert compute_budget(100, 0, per_file_budget=30).per_file_budget == 30


def test_budget_validation():
    with pytest.raises(ValueError):
        compute_budget(0, 0)
    with pytest.raises(ValueError):
        compute_budget(10, -1)


# -- merging ---------------------------------------------------------------------------


def test_overlapping_ranges_merge():
    (m,) = merge_overlaps([_snip(10, 20, 1.0), _snip(15, 30, 2.0)])
    assert (m.line_start, m.line_end, m.score) == (10, 30, 2.0)
    assert m.text == "\n".join(f"l{n}" for n in range(10, 31))


def test_adjacent_ranges_merge():
    (m,) = merge_overlaps([_snip(1, 5), _snip(6, 9)])
    assert (m.line_start, m.line_end) == (1, 9)


def test_gap_of_two_stays_apart():
    out = merge_overlaps([_snip(7, 9), _snip(1, 5)])
    assert [(s.line_start, s.line_end) for s in out] == [(1, 5), (7, 9)]


def test_single_snippet_unchanged():
    s = _snip(3, 4)
    assert merge_overlaps([s]) == [s]


def test_merge_needs_one_file():
    with pytest.raises(ValueError):
        merge_overlaps([_snip(1, 2, path="a"), _snip(1, 2, path="b")])


_ranges = st.lists(st.tuples(st.integers(1, 60), st.integers(0, 10), st.floats(0, 10)), max_size=12)


@settings(max_examples=300)
@given(_ranges, st.randoms())
def test_merge_properties(ranges, rnd):
    snippets = [_snip(lo, lo + span, score) for lo, span, score in ranges]
    once = merge_overlaps(snippets)
    assert merge_overlaps(once) == once
    shuffled = list(snippets)
    rnd.shuffle(shuffled)
    assert merge_overlaps(shuffled) == once
    for a, b in zip(once, once[1:]):
        assert b.line_start > a.line_end + 1
    covered = {n for s in snippets for n in range(s.line_start, s.line_end + 1)}
    assert covered == {n for s in once for n in range(s.line_start, s.line_end + 1)}


def test_truncation_drops_trailing_lines():
    s = _snip(1, 10)
    cut = truncate_to_budget(s, 4)
    assert (cut.line_start, cut.line_end) == (1, 4)
    assert cut.text == "l1\nl2\nl3\nl4"
    assert truncate_to_budget(s, 0) is None


# -- assembly ----------------------------------------------------------------------------


def test_small_file_is_taken_whole():
    text = "\n".join(f"value_{i} = {i}" for i in range(16))  # 48 tokens
    src = DictSource({"a.py": text})
    budget = compute_budget(8192, 256, per_file_budget=2000)
    bundle = assemble([_res("a.py", 3)], src, budget, language=Language.PYTHON)
    (only,) = bundle.snippets
    assert (only.line_start, only.line_end) == (1, 16)
    assert bundle.rendered == "# a.py:1-16@v\n" + text
    assert bundle.total_tokens <= budget.total_constraint


def test_no_room_gives_empty_bundle():
    budget = compute_budget(1000, 0, "p", "s", Fixed(500))
    bundle = assemble([_res("a.py", 1)], DictSource({"a.py": "x"}), budget)
    assert bundle.snippets == [] and bundle.rendered == "" and bundle.total_tokens == 0


def test_greedy_admission_stops_at_the_budget():
    # three candidates of 900 tokens (header included) each under T = 2000
    class Tok:
        def count(self, text):
            return 3 if text.startswith("#") else 897

    files = {f"f{i}.py": f"body{i}" for i in range(3)}
    budget = compute_budget(2000, 0, tokenizer=Tok(), per_file_budget=1000, top_k=5)
    results = [_res(p, 1, score=3 - i) for i, p in enumerate(files)]
    bundle = assemble(results, DictSource(files), budget, Tok())
    assert [s.path for s in bundle.snippets] == ["f0.py", "f1.py"]
    assert bundle.total_tokens == 1800


def test_top_k_limits_count():
    files = {f"f{i}.py": "x" for i in range(8)}
    budget = compute_budget(8192, 0, top_k=3)
    bundle = assemble([_res(p, 1) for p in files], DictSource(files), budget)
    assert len(bundle.snippets) == 3


def test_large_file_is_cut_around_hits():
    lines = [f"line_{i} = word{i} + other{i}" for i in range(1, 201)]
    src = DictSource({"big.py": "\n".join(lines)})
    budget = compute_budget(8192, 0, per_file_budget=60)
    bundle = assemble([_res("big.py", 50, 5.0), _res("big.py", 52, 4.0), _res("big.py", 150, 1.0)], src, budget)
    spans = [(s.line_start, s.line_end) for s in bundle.snippets]
    assert spans[0][0] == 47 and spans[0][1] <= 55
    assert all(s.token_count <= 60 for s in bundle.snippets)
    assert any(lo <= 150 <= hi for lo, hi in spans)


def test_missing_file():
    with pytest.raises(MissingFile):
        assemble([_res("gone.py", 1)], DictSource({}), compute_budget(100, 0))


def test_header_comment_token():
    s = _snip(1, 2, path="x.kt")
    assert snippet_header(s) == "// x.kt:1-2@v"
    assert snippet_header(s, Language.PYTHON) == "# x.kt:1-2@v"
    assert snippet_header(_snip(1, 2, path="notes.md")) == "# notes.md:1-2@v"


def test_shard_content_source():
    shard = build_shard("r", "v", [("a.py", b"x = 1\n", Language.PYTHON)])
    src = ShardContentSource([shard])
    assert src.get_file("r", "v", "a.py") == "x = 1\n"
    assert src.get_file("r", "w", "a.py") is None
    assert src.get_file("r", "v", "b.py") is None


def _random_case(rng):
    files = {}
    for i in range(rng.randint(0, 6)):
        n = rng.randint(0, 120)
        files[f"d/f{i}.py"] = "\n".join(
            " ".join(rng.choice(["foo", "bar(", "x", "+=", "1", "'s'", "é"]) for _ in range(rng.randint(0, 9)))
            for _ in range(n)
        )
    results = []
    for path, text in files.items():
        lines = max(1, text.count("\n") + 1)
        for _ in range(rng.randint(1, 4)):
            results.append(_res(path, rng.randint(1, lines), rng.choice([0.5, 1.0, 2.0, 7.5])))
    results.sort(key=SearchResult.sort_key)
    prefix = " ".join("tok" for _ in range(rng.randint(0, 400)))
    suffix = "+" * rng.randint(0, 300)
    m = rng.randint(1, 3000)
    b = rng.randint(0, 500)
    r = rng.choice([None, rng.randint(1, 800)])
    k = rng.randint(1, 6)
    return files, results, compute_budget(m, b, prefix, suffix, per_file_budget=r, top_k=k)


def _check(bundle, budget):
    assert bundle.total_tokens <= max(budget.total_constraint, 0)
    assert all(s.token_count <= budget.per_file_budget for s in bundle.snippets)
    assert len(bundle.snippets) <= budget.top_k_files
    assert bundle.total_tokens >= sum(s.token_count for s in bundle.snippets)


def test_budget_safety_fuzz():
    rng = random.Random(99)
    for _ in range(500):
        files, results, budget = _random_case(rng)
        _check(assemble(results, DictSource(files), budget), budget)


def test_monotone_in_total_budget():
    rng = random.Random(5)
    for _ in range(150):
        files, results, budget = _random_case(rng)
        src = DictSource(files)
        small = assemble(results, src, budget)
        bigger = replace(budget, total_constraint=budget.total_constraint + rng.randint(1, 2000))
        large = assemble(results, src, bigger)
        kept = [(s.path, s.line_start, s.line_end) for s in large.snippets]
        for s in small.snippets:
            assert (s.path, s.line_start, s.line_end) in kept


def test_whole_file_preference():
    rng = random.Random(8)
    for _ in range(150):
        files, results, budget = _random_case(rng)
        bundle = assemble(results, DictSource(files), budget)
        for s in bundle.snippets:
            whole = files[s.path]
            if count_tokens(whole) <= budget.per_file_budget:
                assert s.line_start == 1 and s.text == "\n".join(split_lines(whole))
