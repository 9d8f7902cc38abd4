"""Batch indexing, retrieval and hit-rate runs over a benchmark dataset."""

from __future__ import annotations

import json
import logging
import os
import time
from collections import Counter, OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .assembler import (
    DEFAULT_BUFFER,
    DEFAULT_CONTEXT_LINES,
    DEFAULT_MODEL_MAX,
    DEFAULT_TOP_K,
    ContentSource,
    Tokenizer,
    assemble,
    compute_budget,
)
from .dataset import DatasetRecord
from .errors import ClientUnreachable, ShardSearchError
from .ladder import LadderConfig, LadderOutcome, Mode, execute_ladder, generate_variants
from .miner import mine_completion_point
from .shard import SearchResult, build_shard
from .storage import shard_filename, write_shard
from .symbols import language_for_path

log = logging.getLogger(__name__)

SKIP_DIRS = {".git", ".hg", ".svn", "__pycache__", ".idea", "node_modules"}


# --------------------------------------------------------------------------
# indexing


def read_tree(root: Path) -> List[Tuple[str, bytes, object]]:
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        for name in sorted(filenames):
            full = Path(dirpath) / name
            if not full.is_file():
                continue
            rel = full.relative_to(root).as_posix()
            files.append((rel, full.read_bytes(), language_for_path(rel)))
    return files


@dataclass
class IndexSummary:
    written: List[Path] = field(default_factory=list)
    skipped: List[Tuple[str, str]] = field(default_factory=list)
    revisions_per_repo: Dict[str, int] = field(default_factory=dict)
    seconds: float = 0.0

    def table(self) -> str:
        rows = sorted(self.revisions_per_repo.items())
        width = max([len("repository")] + [len(r) for r, _ in rows])
        lines = [f"{'repository'.ljust(width)}  revisions"]
        lines += [f"{repo.ljust(width)}  {n:>9}" for repo, n in rows]
        total = sum(self.revisions_per_repo.values())
        lines.append(f"{total} revisions over {len(rows)} repositories; {len(self.skipped)} skipped")
        return "\n".join(lines)


def index_dataset(
    records: Iterable[DatasetRecord],
    repos_dir,
    out_dir,
    built_at: Optional[datetime] = None,
) -> IndexSummary:
    """Write one shard per distinct (repo, revision) found under ``repos_dir/<repo>/<revision>/``."""
    started = time.perf_counter()
    repos_dir, out_dir = Path(repos_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    built_at = built_at or datetime.now(timezone.utc)
    summary = IndexSummary()
    pairs = list(OrderedDict.fromkeys((r.repo, r.revision) for r in records))
    for repo, rev in pairs:
        root = repos_dir / repo / rev
        if not root.is_dir():
            log.warning("missing revision directory %s; skipping", root)
            summary.skipped.append((repo, rev))
            continue
        shard = build_shard(repo, rev, read_tree(root), built_at=built_at)
        target = out_dir / shard_filename(repo, rev)
        write_shard(shard, target)
        summary.written.append(target)
        summary.revisions_per_repo[repo] = summary.revisions_per_repo.get(repo, 0) + 1
    summary.seconds = time.perf_counter() - started
    return summary


# --------------------------------------------------------------------------
# retrieval


class CachingContentSource:
    """Memoise file fetches; the shard set is immutable while a run is in progress."""

    def __init__(self, inner: ContentSource, max_entries: int = 2048):
        self.inner = inner
        self.max_entries = max_entries
        self._cache: "OrderedDict[Tuple[str, str, str], Optional[str]]" = OrderedDict()

    def get_file(self, repo_id: str, revision_id: str, path: str) -> Optional[str]:
        key = (repo_id, revision_id, path)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        value = self.inner.get_file(repo_id, revision_id, path)
        self._cache[key] = value
        if len(self._cache) > self.max_entries:
            self._cache.popitem(last=False)
        return value


@dataclass
class RetrievalSettings:
    mode: Mode = Mode.CROSS
    ladder: LadderConfig = field(default_factory=LadderConfig)
    model_max: int = DEFAULT_MODEL_MAX
    reserved_buffer: int = DEFAULT_BUFFER
    per_file_budget: Optional[int] = None
    top_k: int = DEFAULT_TOP_K
    context_lines: int = DEFAULT_CONTEXT_LINES
    tokenizer: Optional[Tokenizer] = None
    # repo -> revisions oldest first; when set, cross-shard hits from later
    # revisions than the completion point's own are discarded
    revision_order: Optional[Dict[str, List[str]]] = None


def revision_guard(order: Dict[str, List[str]], repo: str, revision: str) -> Callable[[List[SearchResult]], List[SearchResult]]:
    revs = order.get(repo, [])
    if revision in revs:
        allowed = set(revs[: revs.index(revision) + 1])
    else:
        allowed = {revision}
    return lambda results: [r for r in results if r.revision_id in allowed]


def run_ladder(record: DatasetRecord, client, source: ContentSource, settings: RetrievalSettings, mode: Optional[Mode] = None) -> LadderOutcome:
    cp = record.completion_point()
    mode = settings.mode if mode is None else mode
    original = source.get_file(record.repo, record.revision, record.path) or ""
    _diff, mined = mine_completion_point(cp, original, language_for_path(record.path))
    variants = generate_variants(cp, mined, settings.ladder.order)
    guard = None
    if settings.revision_order is not None and mode is Mode.CROSS:
        guard = revision_guard(settings.revision_order, record.repo, record.revision)
    return execute_ladder(client, variants, settings.ladder, cp, mode, result_filter=guard)


def retrieve_point(record: DatasetRecord, client, source: ContentSource, settings: RetrievalSettings) -> dict:
    """One output line: ``{id, hit, winning_variant, context, total_tokens}``."""
    outcome = run_ladder(record, client, source, settings)
    line = {
        "id": record.id,
        "hit": outcome.hit,
        "winning_variant": outcome.winning_variant,
        "context": "",
        "total_tokens": 0,
    }
    if outcome.hit:
        budget = compute_budget(
            settings.model_max,
            settings.reserved_buffer,
            record.prefix,
            record.suffix,
            settings.tokenizer,
            settings.per_file_budget,
            settings.top_k,
        )
        bundle = assemble(
            outcome.results,
            source,
            budget,
            settings.tokenizer,
            record.id,
            language_for_path(record.path),
            settings.context_lines,
        )
        line["context"] = bundle.rendered
        line["total_tokens"] = bundle.total_tokens
    return line


def _safe_retrieve(record, client, source, settings) -> dict:
    try:
        return retrieve_point(record, client, source, settings)
    except ClientUnreachable:
        raise
    except ShardSearchError as exc:
        log.error("%s: %s", record.id, exc)
        return {
            "id": record.id,
            "hit": False,
            "winning_variant": None,
            "context": "",
            "total_tokens": 0,
            "error": f"{type(exc).__name__}: {exc}",
        }


def checkpoint_path(out_path) -> Path:
    p = Path(out_path)
    return p.with_name(p.name + ".checkpoint")


def _completed_ids(out_path: Path) -> List[str]:
    if not out_path.exists():
        return []
    ids = []
    with out_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.endswith("\n"):
                ids.append(json.loads(line)["id"])
    return ids


def run_retrieve(
    records: Sequence[DatasetRecord],
    client,
    source: ContentSource,
    out_path,
    settings: RetrievalSettings,
    parallel: int = 4,
) -> Tuple[int, int]:
    """Write one JSON line per record, in input order; resumes from an existing output file.

    Returns ``(records written now, records with errors)``. Raises
    :class:`ClientUnreachable` after flushing everything completed so far.
    """
    out_path = Path(out_path)
    ckpt = checkpoint_path(out_path)
    done = _completed_ids(out_path)
    if done:
        expected = [r.id for r in records[: len(done)]]
        if done != expected:
            raise ShardSearchError(f"{out_path} does not match the dataset prefix; refusing to resume")
        # drop a torn final line, if any
        with out_path.open("rb+") as fh:
            data = fh.read()
            if data and not data.endswith(b"\n"):
                fh.truncate(data.rfind(b"\n") + 1)
    elif out_path.exists():
        out_path.write_text("")
    todo = list(records[len(done):])
    written = errors = 0
    with out_path.open("a", encoding="utf-8") as fh, ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
        futures = [pool.submit(_safe_retrieve, r, client, source, settings) for r in todo]
        try:
            for rec, fut in zip(todo, futures):
                line = fut.result()
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")
                fh.flush()
                written += 1
                errors += "error" in line
                ckpt.write_text(json.dumps({"last_id": rec.id, "completed": len(done) + written}))
        except ClientUnreachable:
            for f in futures:
                f.cancel()
            raise
    return written, errors


# --------------------------------------------------------------------------
# hit rate


@dataclass
class HitRateReport:
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    wins: Dict[str, Dict[str, int]] = field(default_factory=dict)
    wall_time: Dict[str, float] = field(default_factory=dict)
    timings: List[dict] = field(default_factory=list)
    dataset_size: int = 0

    @property
    def cross_ge_single(self) -> bool:
        single = self.counts.get(Mode.SINGLE.value, {}).get("hit", 0)
        cross = self.counts.get(Mode.CROSS.value, {}).get("hit", 0)
        return cross >= single

    def to_dict(self) -> dict:
        return {
            "dataset_size": self.dataset_size,
            "counts": self.counts,
            "wins": self.wins,
            "wall_time": self.wall_time,
            "cross_ge_single": self.cross_ge_single,
            "timings": self.timings,
        }

    def render(self) -> str:
        modes = [Mode.SINGLE.value, Mode.CROSS.value]
        head = f"{'':<6}{'Single-shard':>14}{'Cross-shard':>14}"
        rows = [head]
        for key in ("hit", "miss"):
            label = key.capitalize()
            rows.append(f"{label:<6}" + "".join(f"{self.counts.get(m, {}).get(key, 0):>14}" for m in modes))
        rows.append("")
        rows.append("winning variant histogram")
        names = sorted({n for m in modes for n in self.wins.get(m, {})})
        for n in names:
            rows.append(f"  {n:<28}" + "".join(f"{self.wins.get(m, {}).get(n, 0):>8}" for m in modes))
        rows.append("")
        for m in modes:
            rows.append(f"{m} wall time: {self.wall_time.get(m, 0.0):.2f}s")
        rows.append(f"cross hits >= single hits: {'yes' if self.cross_ge_single else 'NO'}")
        return "\n".join(rows)


def run_hitrate(
    records: Sequence[DatasetRecord],
    client,
    source: ContentSource,
    settings: RetrievalSettings,
    parallel: int = 4,
) -> HitRateReport:
    report = HitRateReport(dataset_size=len(records))
    for mode in (Mode.SINGLE, Mode.CROSS):
        started = time.perf_counter()

        def one(rec, mode=mode):
            t0 = time.perf_counter()
            outcome = run_ladder(rec, client, source, settings, mode)
            return rec, outcome, time.perf_counter() - t0

        with ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
            outcomes = list(pool.map(one, records))
        wins: Counter = Counter()
        hits = 0
        for rec, outcome, seconds in outcomes:
            hits += outcome.hit
            if outcome.winning_variant:
                wins[outcome.winning_variant] += 1
            report.timings.append(
                {
                    "id": rec.id,
                    "mode": mode.value,
                    "hit": outcome.hit,
                    "winning_variant": outcome.winning_variant,
                    "seconds": seconds,
                }
            )
        report.counts[mode.value] = {"hit": hits, "miss": len(records) - hits}
        report.wins[mode.value] = dict(sorted(wins.items()))
        report.wall_time[mode.value] = time.perf_counter() - started
    if not report.cross_ge_single:
        log.warning("cross-shard hits fell below single-shard hits")
    return report
