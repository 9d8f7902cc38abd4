"""HTTP client for the search service."""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from typing import List, Optional
from urllib.parse import urlencode

from .errors import ClientUnreachable, MalformedQuery, Overloaded, RequestTimeout, ShardSearchError
from .shard import SearchResult


def _is_timeout(exc: BaseException) -> bool:
    if isinstance(exc, (socket.timeout, TimeoutError)):
        return True
    reason = getattr(exc, "reason", None)
    return isinstance(reason, (socket.timeout, TimeoutError))


class HttpSearchClient:
    def __init__(self, base_url: str, default_timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.default_timeout = default_timeout

    def _call(self, method: str, path: str, body: Optional[dict] = None, timeout: Optional[float] = None):
        data = None if body is None else json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            self.base_url + path,
            data=data,
            method=method,
            headers={"Content-Type": "application/json"} if data is not None else {},
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout or self.default_timeout) as resp:
                return resp.status, json.loads(resp.read() or b"null")
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read() or b"null")
            except ValueError:
                payload = None
            return exc.code, payload
        except (urllib.error.URLError, OSError) as exc:
            if _is_timeout(exc):
                raise RequestTimeout(f"{method} {path} timed out") from exc
            raise ClientUnreachable(f"{self.base_url}: {exc}") from exc

    def search(self, query: str, max_results: int = 50, timeout: Optional[float] = None) -> List[SearchResult]:
        """Run one query. A 404 (unknown repository) is an empty result, not an error."""
        status, payload = self._call(
            "POST", "/search", {"query": query, "max_results": max_results}, timeout
        )
        if status == 200:
            return [SearchResult.from_dict(r) for r in payload["results"]]
        if status == 404:
            return []
        if status in (502, 503, 504):
            raise Overloaded(f"service overloaded ({status})")
        if status == 400:
            msg = payload.get("message") if isinstance(payload, dict) else None
            raise MalformedQuery(f"{msg or 'bad request'}: {query!r}")
        raise ShardSearchError(f"unexpected status {status} for {query!r}")

    def search_raw(self, query: str, max_results: int = 50, timeout: Optional[float] = None):
        return self._call("POST", "/search", {"query": query, "max_results": max_results}, timeout)

    def get_file(self, repo_id: str, revision_id: str, path: str) -> Optional[str]:
        qs = urlencode({"repo": repo_id, "rev": revision_id, "path": path})
        status, payload = self._call("GET", f"/file?{qs}")
        if status == 200:
            return payload["content"]
        if status == 404:
            return None
        raise ShardSearchError(f"unexpected status {status} fetching {path}")

    def health(self) -> dict:
        status, payload = self._call("GET", "/health")
        if status != 200:
            raise ShardSearchError(f"health check failed with {status}")
        return payload

    def shards(self) -> list:
        status, payload = self._call("GET", "/shards")
        if status != 200:
            raise ShardSearchError(f"/shards failed with {status}")
        return payload
