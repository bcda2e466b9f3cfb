"""JSON-lines files for instances, datasets and results.

Every file starts with a header object ``{"format": "copmdp", "version": 1,
"kind": ...}`` followed by one record per line. Records are written with
sorted keys and Python's shortest round-trip float repr, so a fixed seed
gives byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..core import Instance, PartialSolution, Step
from ..problems import instance_from_dict, random_instance

FORMAT = "copmdp"
VERSION = 1
KINDS = ("instances", "dataset", "results")


class FileFormatError(ValueError):
    pass


@dataclass
class Record:
    instance: Instance
    solution: PartialSolution | None = None
    objective: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def solution_to_json(sol: PartialSolution, with_flags: bool) -> list:
    if with_flags:
        return [[s.index, int(s.via_depot)] for s in sol]
    return [s.index for s in sol]


def solution_from_json(data: list, ordered: bool) -> PartialSolution:
    steps = [Step(int(s[0]), bool(s[1])) if isinstance(s, list) else Step(int(s)) for s in data]
    return PartialSolution(tuple(steps), ordered)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_records(path: str | Path, kind: str, records: Iterable[Record], **meta: Any) -> int:
    if kind not in KINDS:
        raise FileFormatError(f"unknown file kind {kind!r}")
    n = 0
    with open(path, "w") as fh:
        fh.write(_dumps({"format": FORMAT, "version": VERSION, "kind": kind, **meta}) + "\n")
        for rec in records:
            row = rec.instance.to_dict()  # type: ignore[attr-defined]
            if rec.solution is not None:
                row["solution"] = solution_to_json(rec.solution, rec.instance.head_width == 2)
            if rec.objective is not None:
                row["objective"] = rec.objective
            row.update(rec.extra)
            fh.write(_dumps(row) + "\n")
            n += 1
    return n


def read_records(path: str | Path, kind: str | None = None) -> tuple[dict[str, Any], list[Record]]:
    """Header and records of a file; ``kind`` restricts the accepted file kind."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: bad header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise FileFormatError(f"{path}: not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise FileFormatError(f"{path}: unsupported version {header.get('version')}")
    if kind is not None and header.get("kind") != kind:
        raise FileFormatError(f"{path}: expected a {kind} file, got {header.get('kind')}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            inst = instance_from_dict(row)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
        sol = row.pop("solution", None)
        obj = row.pop("objective", None)
        extra = {k: v for k, v in row.items() if k in ("index", "reference", "gap")}
        records.append(
            Record(inst, None if sol is None else solution_from_json(sol, inst.ordered), obj, extra)
        )
    return header, records


def generate(
    problem: str,
    n: int,
    count: int,
    seed: int,
    path: str | Path | None = None,
    **params: Any,
) -> list[Instance]:
    """``count`` random instances, instance ``i`` drawn from its own child seed.

    When ``path`` is given they are also written as an instances file.
    """
    if n < 1 or count < 0:
        raise ValueError("need n >= 1 and count >= 0")
    children = np.random.SeedSequence(seed).spawn(count)
    insts = [random_instance(problem, n, np.random.default_rng(c), **params) for c in children]
    if path is not None:
        meta = {"problem": problem, "n": n, "count": count, "seed": seed}
        meta.update({k: v for k, v in params.items() if v is not None})
        write_records(path, "instances", (Record(i) for i in insts), **meta)
    return insts
