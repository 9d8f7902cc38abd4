"""Benchmark datasets: one JSON object per line."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .miner import CompletionPoint

FIELDS = ("id", "repo", "revision", "path", "prefix", "suffix")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    repo: str
    revision: str
    path: str
    prefix: str
    suffix: str

    def completion_point(self) -> CompletionPoint:
        return CompletionPoint(self.id, self.repo, self.revision, self.path, self.prefix, self.suffix)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_field_map(spec: Optional[str]) -> Dict[str, str]:
    """``"id=datapoint_id,repo=repo_name"`` -> ``{"id": "datapoint_id", "repo": "repo_name"}``."""
    if not spec:
        return {}
    out = {}
    for part in spec.split(","):
        ours, _, theirs = part.partition("=")
        ours, theirs = ours.strip(), theirs.strip()
        if ours not in FIELDS or not theirs:
            raise DatasetError(f"bad field mapping {part!r}; expected one of {', '.join(FIELDS)}=<name>")
        out[ours] = theirs
    return out


def parse_records(lines: Iterable[str], field_map: Optional[Dict[str, str]] = None, source: str = "<dataset>") -> List[DatasetRecord]:
    mapping = {f: (field_map or {}).get(f, f) for f in FIELDS}
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise DatasetError(f"{source}:{lineno}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise DatasetError(f"{source}:{lineno}: expected a JSON object")
        values = {}
        for ours, theirs in mapping.items():
            if theirs not in obj:
                if ours in ("prefix", "suffix"):
                    values[ours] = ""
                    continue
                raise DatasetError(f"{source}:{lineno}: missing field {theirs!r}")
            values[ours] = "" if obj[theirs] is None else str(obj[theirs])
        if values["id"] in seen:
            raise DatasetError(f"{source}:{lineno}: duplicate id {values['id']!r}")
        seen.add(values["id"])
        records.append(DatasetRecord(**values))
    return records


def load_dataset(path, field_map: Optional[Dict[str, str]] = None) -> List[DatasetRecord]:
    p = Path(path)
    with p.open(encoding="utf-8") as fh:
        return parse_records(fh, field_map, str(p))


def write_dataset(records: Iterable[DatasetRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
