"""HTTP JSON search service over a directory of shards.

Endpoints (all JSON, snake_case):

``POST /search``
    request ``{"query": str, "max_results": int = 50, "timeout_hint": float | null}``
    response ``{"results": [SearchResult...], "stats": {"files_considered",
    "files_matched", "duration", "shards_searched"}, "overloaded": bool}``
``GET /health``
    ``{"status": "ok", "shard_count": int}``
``GET /shards``
    ``[{"repo_id", "revision_id", "file_count"}...]``
``GET /file?repo=&rev=&path=``
    ``{"repo_id", "revision_id", "path", "content"}``

Errors: 400 ``{"error": "parse_error", "message", "position"}`` or
``{"error": "bad_request", "message"}``; 404 ``{"error": "unknown_repo" |
"not_found", "message"}``; 503 with ``"overloaded": true``.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Optional, Sequence, Tuple
from urllib.parse import parse_qs, urlsplit

from .errors import ParseError
from .query import FilterKind, parse_query, plan_trigrams, scope_filters
from .shard import SearchResult, Shard, search_shard_stats
from .storage import load_shard_dir

log = logging.getLogger(__name__)

DEFAULT_MAX_RESULTS = 50
ENV_MAX_CONCURRENCY = "SCS_MAX_CONCURRENCY"


def default_concurrency() -> int:
    env = os.environ.get(ENV_MAX_CONCURRENCY)
    if env:
        return max(1, int(env))
    return 2 * (os.cpu_count() or 1)


class ConcurrencyGate:
    """At most ``limit`` active requests plus a bounded queue of waiters.

    A request is refused only when all ``limit`` slots are busy and the wait
    queue is full, or when it waited ``wait_timeout`` seconds without a slot.
    """

    def __init__(self, limit: int, queue_size: Optional[int] = None, wait_timeout: float = 5.0):
        if limit < 1:
            raise ValueError("concurrency limit must be positive")
        self.limit = limit
        self.queue_size = limit if queue_size is None else queue_size
        self.wait_timeout = wait_timeout
        self.active = 0
        self.waiting = 0
        self._cond = threading.Condition()

    def acquire(self) -> bool:
        with self._cond:
            if self.active < self.limit:
                self.active += 1
                return True
            if self.waiting >= self.queue_size:
                return False
            self.waiting += 1
            try:
                ok = self._cond.wait_for(lambda: self.active < self.limit, self.wait_timeout)
            finally:
                self.waiting -= 1
            if ok:
                self.active += 1
            return ok

    def release(self) -> None:
        with self._cond:
            self.active -= 1
            self._cond.notify()


@dataclass
class Reply:
    status: int
    body: object


class SearchService:
    """Transport-independent request handling over an immutable shard set."""

    def __init__(self, shards: Sequence[Shard]):
        self.shards: List[Shard] = sorted(
            shards, key=lambda s: (s.meta.repo_id, s.meta.revision_id)
        )
        self.by_repo: Dict[str, List[Shard]] = {}
        self.by_key: Dict[Tuple[str, str], Shard] = {}
        for s in self.shards:
            self.by_repo.setdefault(s.meta.repo_id, []).append(s)
            self.by_key[(s.meta.repo_id, s.meta.revision_id)] = s

    def health(self) -> Reply:
        return Reply(200, {"status": "ok", "shard_count": len(self.shards)})

    def list_shards(self) -> Reply:
        return Reply(
            200,
            [
                {"repo_id": s.meta.repo_id, "revision_id": s.meta.revision_id, "file_count": s.meta.file_count}
                for s in self.shards
            ],
        )

    def get_file(self, repo: str, rev: str, path: str) -> Reply:
        shard = self.by_key.get((repo, rev))
        rec = shard.get_file(path) if shard is not None else None
        if rec is None:
            return Reply(404, {"error": "not_found", "message": f"{path} not found in {repo}@{rev}"})
        return Reply(
            200,
            {
                "repo_id": repo,
                "revision_id": rev,
                "path": path,
                "content": rec.content.decode("utf-8", errors="replace"),
            },
        )

    def select(self, tree) -> Optional[List[Shard]]:
        """Shards in scope for a query; None when the repo: filter names an unknown repository."""
        scope = scope_filters(tree)
        repo = scope.get(FilterKind.REPO)
        rev = scope.get(FilterKind.REVISION)
        if repo is not None:
            pool = self.by_repo.get(repo)
            if pool is None:
                return None
        else:
            pool = self.shards
        if rev is not None:
            pool = [s for s in pool if s.meta.revision_id == rev]
        return list(pool)

    def search(self, request: dict) -> Reply:
        if not isinstance(request, dict):
            return Reply(400, {"error": "bad_request", "message": "request body must be a JSON object"})
        query = request.get("query")
        max_results = request.get("max_results", DEFAULT_MAX_RESULTS)
        if not isinstance(query, str) or not query.strip():
            return Reply(400, {"error": "bad_request", "message": "query must be a non-empty string"})
        if isinstance(max_results, bool) or not isinstance(max_results, int) or max_results < 1:
            return Reply(400, {"error": "bad_request", "message": "max_results must be a positive integer"})
        started = time.perf_counter()
        try:
            tree = parse_query(query)
        except ParseError as exc:
            return Reply(400, {"error": "parse_error", "message": exc.message, "position": exc.position})
        shards = self.select(tree)
        if shards is None:
            return Reply(404, {"error": "unknown_repo", "message": "no shards for the requested repository"})
        compiled = plan_trigrams(tree)
        results: List[SearchResult] = []
        considered = matched = 0
        for shard in shards:
            found, c, m = search_shard_stats(shard, compiled, max_results)
            results.extend(found)
            considered += c
            matched += m
        results.sort(key=SearchResult.sort_key)
        del results[max_results:]
        return Reply(
            200,
            {
                "results": [r.to_dict() for r in results],
                "stats": {
                    "files_considered": considered,
                    "files_matched": matched,
                    "duration": time.perf_counter() - started,
                    "shards_searched": len(shards),
                },
                "overloaded": False,
            },
        )


OVERLOADED_BODY = {
    "error": "overloaded",
    "results": [],
    "stats": {"files_considered": 0, "files_matched": 0, "duration": 0.0, "shards_searched": 0},
    "overloaded": True,
}


class _Handler(BaseHTTPRequestHandler):
    server: "SearchHTTPServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # noqa: A002 - signature fixed by the base class
        log.debug("%s - %s", self.address_string(), format % args)

    def _send(self, reply: Reply) -> None:
        data = json.dumps(reply.body).encode("utf-8")
        self.send_response(reply.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        url = urlsplit(self.path)
        service = self.server.service
        if url.path == "/health":
            self._send(service.health())
        elif url.path == "/shards":
            self._send(service.list_shards())
        elif url.path == "/file":
            q = parse_qs(url.query)
            try:
                repo, rev, path = q["repo"][0], q["rev"][0], q["path"][0]
            except KeyError:
                self._send(Reply(400, {"error": "bad_request", "message": "repo, rev and path are required"}))
                return
            self._send(service.get_file(repo, rev, path))
        else:
            self._send(Reply(404, {"error": "not_found", "message": url.path}))

    def do_POST(self):
        url = urlsplit(self.path)
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if url.path != "/search":
            self._send(Reply(404, {"error": "not_found", "message": url.path}))
            return
        gate = self.server.gate
        if not gate.acquire():
            self._send(Reply(503, OVERLOADED_BODY))
            return
        try:
            try:
                request = json.loads(raw or b"null")
            except ValueError:
                self._send(Reply(400, {"error": "bad_request", "message": "body is not valid JSON"}))
                return
            self._send(self.server.service.search(request))
        finally:
            gate.release()


class SearchHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, address, service: SearchService, gate: ConcurrencyGate):
        self.service = service
        self.gate = gate
        super().__init__(address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="shardsearch-http", daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def make_server(
    shards: Sequence[Shard],
    host: str = "127.0.0.1",
    port: int = 0,
    max_concurrency: Optional[int] = None,
    queue_size: Optional[int] = None,
) -> SearchHTTPServer:
    limit = max_concurrency if max_concurrency is not None else default_concurrency()
    return SearchHTTPServer((host, port), SearchService(shards), ConcurrencyGate(limit, queue_size))


def parse_bind(bind_address: str) -> Tuple[str, int]:
    host, _, port = bind_address.rpartition(":")
    return (host or "127.0.0.1"), int(port)


def serve(shard_directory, bind_address: str = "127.0.0.1:6070", block: bool = True) -> SearchHTTPServer:
    """Load every shard in ``shard_directory`` read-only and answer HTTP requests."""
    shards = load_shard_dir(shard_directory)
    host, port = parse_bind(bind_address)
    server = make_server(shards, host, port)
    log.info("serving %d shards on %s", len(shards), server.url)
    if block:
        try:
            server.serve_forever()
        finally:
            server.server_close()
    else:
        server.start_background()
    return server
