"""On-disk repository trees and datasets shared by the harness, CLI and acceptance tests."""

from __future__ import annotations

import random
from pathlib import Path
from typing import Dict, List

from shardsearch.dataset import DatasetRecord, write_dataset


def write_tree(root: Path, repo: str, rev: str, files: Dict[str, str]) -> None:
    for rel, text in files.items():
        p = root / repo / rev / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def hitrate_fixture(root: Path) -> List[DatasetRecord]:
    """Ten completion points; the terms of points 8 and 9 exist only in a sibling revision.

    Every point completes a brand-new file, so the diff is all additions and
    the point's own file contributes nothing to the index.
    """
    repos = root / "repos"
    own = {"r1": {}, "r2": {}}
    records = []
    for i in range(10):
        rev = "r1" if i % 2 == 0 else "r2"
        sibling = "r2" if rev == "r1" else "r1"
        helper = f"def omega{i}_fn(kappa{i}_arg):\n    return kappa{i}_arg\n"
        home = sibling if i >= 8 else rev
        own[home][f"lib/helper{i}.py"] = helper
        records.append(
            DatasetRecord(
                id=f"p{i}",
                repo="projA",
                revision=rev,
                path=f"new/point{i}.py",
                prefix=f"zeta{i}_val = omega{i}_fn(",
                suffix=f"kappa{i}_arg)\n",
            )
        )
    for rev, files in own.items():
        files["README.txt"] = "fixture\n"
        write_tree(repos, "projA", rev, files)
    write_dataset(records, root / "dataset.jsonl")
    return records


_VOCAB = ["alpha", "beta", "gamma", "delta", "eps", "omega", "kappa", "sigma", "tau", "phi"]


def random_fixture(root: Path, rng: random.Random, points: int = 12) -> List[DatasetRecord]:
    """Random words scattered over a few repositories and revisions."""
    repos = root / "repos"
    records = []
    layout = {}
    for r in range(rng.randint(1, 3)):
        repo = f"repo{r}"
        for v in range(rng.randint(1, 3)):
            rev = f"v{v}"
            files = {}
            for f in range(rng.randint(1, 5)):
                lines = []
                for _ in range(rng.randint(1, 12)):
                    a, b = rng.choice(_VOCAB), rng.choice(_VOCAB)
                    lines.append(f"{a}_{rng.randint(0, 9)} = {b}_{rng.randint(0, 9)}({a})")
                files[f"src/m{f}.py"] = "\n".join(lines) + "\n"
            write_tree(repos, repo, rev, files)
            layout[(repo, rev)] = files
    keys = sorted(layout)
    for i in range(points):
        repo, rev = rng.choice(keys)
        a, b = rng.choice(_VOCAB), rng.choice(_VOCAB)
        records.append(
            DatasetRecord(
                id=f"q{i}",
                repo=repo,
                revision=rev,
                path=f"new/q{i}.py",
                prefix=f"{a}_{rng.randint(0, 9)} = {b}_{rng.randint(0, 9)}(",
                suffix=f"{a}_{rng.randint(0, 9)}.{b}_{rng.randint(0, 9)})\n",
            )
        )
    write_dataset(records, root / "dataset.jsonl")
    return records


def synthetic_python(rng: random.Random, lines: int) -> str:
    """Plausible-looking Python with a sprinkling of declarations and calls."""
    out = []
    while len(out) < lines:
        cls = f"Widget{rng.randrange(10_000)}"
        out.append(f"class {cls}:")
        for _ in range(rng.randint(2, 6)):
            fn = f"handle_{rng.choice(_VOCAB)}_{rng.randrange(1000)}"
            out.append(f"    def {fn}(self, {rng.choice(_VOCAB)}):")
            for _ in range(rng.randint(2, 8)):
                a, b, c = rng.choice(_VOCAB), rng.choice(_VOCAB), rng.choice(_VOCAB)
                out.append(f"        {a}_{rng.randrange(50)} = self.{b}.{c}({a}, {rng.randrange(100)})")
            out.append(f"        return {rng.choice(_VOCAB)}")
        out.append("")
    return "\n".join(out[:lines]) + "\n"
