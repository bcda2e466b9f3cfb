"""Optimality-gap reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

MAXIMIZE = {"op", "kp"}


class MissingReference(ValueError):
    pass


@dataclass(frozen=True)
class Result:
    """One solved instance. ``value`` is a cost (minimisation) or a prize/value
    total (maximisation), in the problem's natural sign."""

    value: float
    reference: float | None
    seconds: float = 0.0


def gap(value: float, reference: float, maximize: bool) -> float:
    """Signed optimality gap as a fraction; negative means better than the reference."""
    if reference == 0:
        raise MissingReference("reference value is zero")
    return (reference - value) / reference if maximize else (value - reference) / reference


def natural_value(problem: str, objective: float) -> float:
    """Objective in the problem's own sign (prizes and values are stored negated)."""
    return -objective if problem in MAXIMIZE else objective


def report(problem: str, results: Sequence[Result], label: str = "") -> dict:
    """Aggregate gaps: mean over instances, with count and total wall time."""
    if not results:
        raise MissingReference("no results to report")
    if any(r.reference is None for r in results):
        raise MissingReference("every result needs a reference value")
    maximize = problem in MAXIMIZE
    gaps = [gap(r.value, r.reference, maximize) for r in results]  # type: ignore[arg-type]
    return {
        "label": label,
        "problem": problem,
        "count": len(results),
        "mean_value": sum(r.value for r in results) / len(results),
        "mean_gap": sum(gaps) / len(gaps),
        "max_gap": max(gaps),
        "seconds": sum(r.seconds for r in results),
    }


def format_table(rows: Sequence[dict]) -> str:
    head = f"{'run':<24}{'problem':<9}{'count':>7}{'value':>12}{'gap':>10}{'time (s)':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['label']:<24}{r['problem']:<9}{r['count']:>7}{r['mean_value']:>12.4f}"
            f"{100 * r['mean_gap']:>9.2f}%{r['seconds']:>10.2f}"
        )
    return "\n".join(lines)


def to_json(rows: Sequence[dict]) -> str:
    return json.dumps(list(rows), indent=2, sort_keys=True)
