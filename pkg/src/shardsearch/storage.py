"""Binary shard format.

Layout::

    "SCS\\x01" | u32 format_version | u32 crc32(magic + version)
    5 x section: u64 payload length | payload | u32 crc32(payload)

Sections in order: meta (JSON), file table (JSON), content blob, postings
(u32 n_keys, u32 n_positions, keys u32[n], starts u64[n+1], positions
u32[m]), symbols (JSON). All integers little-endian.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, Dict, Iterator, List, Tuple, Union
from urllib.parse import quote

import numpy as np

from .errors import CorruptShard, VersionMismatch
from .shard import FORMAT_VERSION, FileRecord, Postings, Shard, ShardMeta, compute_line_offsets
from .symbols import Language, SymbolEntry, SymbolKind

log = logging.getLogger(__name__)

MAGIC = b"SCS\x01"
SHARD_SUFFIX = ".scs"
_SECTIONS = ("meta", "files", "content", "postings", "symbols")


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _encode_postings(p: Postings) -> bytes:
    keys = np.ascontiguousarray(p.keys, dtype="<u4")
    starts = np.ascontiguousarray(p.starts, dtype="<u8")
    positions = np.ascontiguousarray(p.positions, dtype="<u4")
    return (
        struct.pack("<II", len(keys), len(positions))
        + keys.tobytes()
        + starts.tobytes()
        + positions.tobytes()
    )


def encode_shard(shard: Shard, format_version: int = FORMAT_VERSION) -> bytes:
    meta = {
        "repo_id": shard.meta.repo_id,
        "revision_id": shard.meta.revision_id,
        "file_count": shard.meta.file_count,
        "built_at": shard.meta.built_at.isoformat(),
        "format_version": format_version,
    }
    files = [
        {"path": f.path, "language": f.language.value, "length": len(f.content)}
        for f in shard.files
    ]
    symbols = [[s.name, s.kind.value, s.path, s.line] for s in shard.symbols]
    sections = [
        _json(meta),
        _json(files),
        b"".join(f.content for f in shard.files),
        _encode_postings(shard.postings),
        _json(symbols),
    ]
    head = MAGIC + struct.pack("<I", format_version)
    out = [head, struct.pack("<I", zlib.crc32(head))]
    for payload in sections:
        out.append(struct.pack("<Q", len(payload)))
        out.append(payload)
        out.append(struct.pack("<I", zlib.crc32(payload)))
    return b"".join(out)


def write_shard(shard: Shard, sink: Union[BinaryIO, str, os.PathLike]) -> None:
    data = encode_shard(shard)
    if hasattr(sink, "write"):
        sink.write(data)
        return
    path = Path(sink)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _take(buf: memoryview, at: int, n: int, what: str) -> Tuple[bytes, int]:
    if n < 0 or at + n > len(buf):
        raise CorruptShard(f"truncated {what}")
    return bytes(buf[at : at + n]), at + n


def _decode_postings(raw: bytes, file_starts: np.ndarray) -> Postings:
    if len(raw) < 8:
        raise CorruptShard("truncated postings header")
    n_keys, n_pos = struct.unpack_from("<II", raw, 0)
    expected = 8 + 4 * n_keys + 8 * (n_keys + 1) + 4 * n_pos
    if expected != len(raw):
        raise CorruptShard("postings section has the wrong size")
    at = 8
    keys = np.frombuffer(raw, dtype="<u4", count=n_keys, offset=at).astype(np.uint32)
    at += 4 * n_keys
    starts = np.frombuffer(raw, dtype="<u8", count=n_keys + 1, offset=at).astype(np.int64)
    at += 8 * (n_keys + 1)
    positions = np.frombuffer(raw, dtype="<u4", count=n_pos, offset=at).astype(np.uint32)
    if starts[0] != 0 or starts[-1] != n_pos or (n_keys and np.any(np.diff(starts) <= 0)):
        raise CorruptShard("postings row boundaries are inconsistent")
    if n_keys and (np.any(np.diff(keys.astype(np.int64)) <= 0) or int(keys[-1]) >= 1 << 24):
        raise CorruptShard("postings keys are not sorted trigram codes")
    if n_pos and int(positions.max()) + 3 > int(file_starts[-1]):
        raise CorruptShard("posting offset beyond content")
    return Postings(keys, starts, positions, file_starts)


def decode_shard(data: bytes) -> Shard:
    """Parse a serialized shard; every structural problem becomes :class:`CorruptShard`."""
    buf = memoryview(data)
    if len(buf) < 12 or bytes(buf[:4]) != MAGIC:
        raise CorruptShard("bad magic")
    head = bytes(buf[:8])
    (crc,) = struct.unpack_from("<I", buf, 8)
    if zlib.crc32(head) != crc:
        raise CorruptShard("header checksum mismatch")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"shard format {version}, reader supports {FORMAT_VERSION}")
    at = 12
    payloads: Dict[str, bytes] = {}
    for name in _SECTIONS:
        raw_len, at = _take(buf, at, 8, f"{name} length")
        (n,) = struct.unpack("<Q", raw_len)
        payload, at = _take(buf, at, n, f"{name} section")
        raw_crc, at = _take(buf, at, 4, f"{name} checksum")
        if zlib.crc32(payload) != struct.unpack("<I", raw_crc)[0]:
            raise CorruptShard(f"{name} checksum mismatch")
        payloads[name] = payload
    if at != len(buf):
        raise CorruptShard("trailing bytes after last section")
    try:
        return _assemble(payloads, version)
    except (CorruptShard, VersionMismatch):
        raise
    except Exception as exc:  # any other failure means the payload is not a shard we wrote
        raise CorruptShard(f"malformed section content: {exc}") from exc


def _assemble(payloads: Dict[str, bytes], version: int) -> Shard:
    meta_d = json.loads(payloads["meta"])
    if meta_d["format_version"] != version:
        raise VersionMismatch("header and meta disagree on format version")
    files_d = json.loads(payloads["files"])
    blob = payloads["content"]
    if sum(int(f["length"]) for f in files_d) != len(blob):
        raise CorruptShard("file table does not cover the content blob")
    files: List[FileRecord] = []
    at = 0
    for f in files_d:
        content = blob[at : at + int(f["length"])]
        at += int(f["length"])
        files.append(FileRecord(f["path"], content, compute_line_offsets(content), Language(f["language"])))
    if len({f.path for f in files}) != len(files):
        raise CorruptShard("duplicate path in file table")
    file_starts = np.zeros(len(files) + 1, dtype=np.int64)
    if files:
        file_starts[1:] = np.cumsum([len(f.content) for f in files])
    postings = _decode_postings(payloads["postings"], file_starts)
    symbols = [
        SymbolEntry(str(name), SymbolKind(kind), str(path), int(line))
        for name, kind, path, line in json.loads(payloads["symbols"])
    ]
    meta = ShardMeta(
        repo_id=meta_d["repo_id"],
        revision_id=meta_d["revision_id"],
        file_count=int(meta_d["file_count"]),
        built_at=datetime.fromisoformat(meta_d["built_at"]),
        format_version=version,
    )
    if meta.file_count != len(files) or not meta.repo_id or not meta.revision_id:
        raise CorruptShard("meta does not match file table")
    return Shard(meta, files, postings, symbols)


def read_shard(source: Union[BinaryIO, str, os.PathLike, bytes]) -> Shard:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        data = Path(source).read_bytes()
    return decode_shard(data)


def shard_filename(repo_id: str, revision_id: str) -> str:
    return f"{quote(repo_id, safe='')}@{quote(revision_id, safe='')}{SHARD_SUFFIX}"


def iter_shard_files(directory: Union[str, os.PathLike]) -> Iterator[Path]:
    yield from sorted(Path(directory).glob(f"*{SHARD_SUFFIX}"))


def load_shard_dir(directory: Union[str, os.PathLike]) -> List[Shard]:
    """Load every shard in ``directory``; unreadable files are logged and skipped."""
    shards = []
    for path in iter_shard_files(directory):
        try:
            shards.append(read_shard(path))
        except (CorruptShard, VersionMismatch) as exc:
            log.error("skipping %s: %s", path, exc)
    return shards


__all__ = [
    "MAGIC",
    "decode_shard",
    "encode_shard",
    "iter_shard_files",
    "load_shard_dir",
    "read_shard",
    "shard_filename",
    "write_shard",
]
