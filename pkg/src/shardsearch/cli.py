"""Command-line entry point: ``shardsearch index|serve|retrieve|hitrate``."""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .assembler import DEFAULT_BUFFER, DEFAULT_CONTEXT_LINES, DEFAULT_MODEL_MAX, DEFAULT_TOP_K, CommandTokenizer
from .client import HttpSearchClient
from .dataset import DatasetError, load_dataset, parse_field_map
from .errors import ClientUnreachable, ShardSearchError
from .harness import CachingContentSource, RetrievalSettings, index_dataset, run_hitrate, run_retrieve
from .ladder import LadderConfig, Mode
from .service import make_server
from .storage import load_shard_dir

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_UNREACHABLE = 2

log = logging.getLogger("shardsearch")


def _add_dataset(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, type=Path, help="JSONL file of completion points")
    p.add_argument(
        "--field-map",
        default=None,
        help="rename dataset fields, e.g. 'id=datapoint_id,repo=repo_name'",
    )


def _add_retrieval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", required=True, help="base URL of a running search service")
    p.add_argument("--parallel", type=int, default=4, help="completion points in flight (default 4)")
    p.add_argument("--timeout", type=float, default=0.2, help="per-request timeout in seconds")
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--max-results", type=int, default=50)
    p.add_argument(
        "--revision-order",
        type=Path,
        default=None,
        help="JSON file {repo: [revision, ...]} listing revisions oldest first",
    )
    p.add_argument(
        "--max-revision-order",
        action="store_true",
        help="with --revision-order, drop cross-shard hits from revisions later than the point's own",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shardsearch", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build one shard per (repo, revision) in the dataset")
    _add_dataset(p)
    p.add_argument("--repos", required=True, type=Path, help="directory laid out as <repo>/<revision>/")
    p.add_argument("--out", required=True, type=Path, help="shard output directory")

    p = sub.add_parser("serve", help="serve a shard directory over HTTP")
    p.add_argument("--shards", required=True, type=Path)
    p.add_argument("--port", type=int, default=6070)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-concurrency", type=int, default=None, help="defaults to $SCS_MAX_CONCURRENCY or 2x CPUs")

    p = sub.add_parser("retrieve", help="run the query ladder and assemble context for every point")
    _add_dataset(p)
    _add_retrieval(p)
    p.add_argument("--mode", type=Mode.parse, default=Mode.CROSS, help="SingleShard or CrossShard")
    p.add_argument("--out", required=True, type=Path, help="output JSONL; resumed if it already exists")
    p.add_argument("--model-max", type=int, default=DEFAULT_MODEL_MAX, help="M, model context size")
    p.add_argument("--buffer", type=int, default=DEFAULT_BUFFER, help="B, tokens reserved for generation")
    p.add_argument("--per-file-budget", type=int, default=None, help="R; defaults to half of T")
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K, help="k, maximum snippets per bundle")
    p.add_argument("--context-lines", type=int, default=DEFAULT_CONTEXT_LINES)
    p.add_argument(
        "--token-command",
        default=None,
        help="external token counter: reads text on stdin, prints an integer",
    )

    p = sub.add_parser("hitrate", help="compare single- and cross-shard hit rates")
    _add_dataset(p)
    _add_retrieval(p)
    p.add_argument("--report", type=Path, default=None, help="also write the report as JSON")
    return parser


def _settings(args, mode: Mode = Mode.CROSS) -> RetrievalSettings:
    ladder = LadderConfig(
        timeout_per_request=args.timeout, max_retries=args.max_retries, max_results_per_query=args.max_results
    )
    order = None
    if args.max_revision_order:
        if args.revision_order is None:
            raise DatasetError("--max-revision-order needs --revision-order")
        order = json.loads(args.revision_order.read_text(encoding="utf-8"))
    settings = RetrievalSettings(mode=mode, ladder=ladder, revision_order=order)
    if getattr(args, "model_max", None) is not None:
        settings.model_max = args.model_max
        settings.reserved_buffer = args.buffer
        settings.per_file_budget = args.per_file_budget
        settings.top_k = args.top_k
        settings.context_lines = args.context_lines
        if args.token_command:
            settings.tokenizer = CommandTokenizer(shlex.split(args.token_command))
    return settings


def cmd_index(args) -> int:
    records = load_dataset(args.dataset, parse_field_map(args.field_map))
    summary = index_dataset(records, args.repos, args.out)
    print(summary.table())
    print(f"wrote {len(summary.written)} shards to {args.out} in {summary.seconds:.2f}s")
    return EXIT_PARTIAL if summary.skipped else EXIT_OK


def cmd_serve(args) -> int:
    shards = load_shard_dir(args.shards)
    try:
        server = make_server(shards, args.host, args.port, args.max_concurrency)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"serving {len(shards)} shards on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _client(args) -> HttpSearchClient:
    client = HttpSearchClient(args.server)
    client.health()  # fail fast with ClientUnreachable
    return client


def cmd_retrieve(args) -> int:
    records = load_dataset(args.dataset, parse_field_map(args.field_map))
    client = _client(args)
    source = CachingContentSource(client)
    written, errors = run_retrieve(records, client, source, args.out, _settings(args, args.mode), args.parallel)
    print(f"wrote {written} records to {args.out} ({errors} with errors)")
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_hitrate(args) -> int:
    records = load_dataset(args.dataset, parse_field_map(args.field_map))
    client = _client(args)
    source = CachingContentSource(client)
    report = run_hitrate(records, client, source, _settings(args), args.parallel)
    print(report.render())
    if args.report is not None:
        args.report.write_text(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.cross_ge_single else EXIT_PARTIAL


COMMANDS = {"index": cmd_index, "serve": cmd_serve, "retrieve": cmd_retrieve, "hitrate": cmd_hitrate}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors as 2, which is reserved for an unreachable server
        return EXIT_PARTIAL if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ClientUnreachable as exc:
        print(f"error: search service unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (DatasetError, ShardSearchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
