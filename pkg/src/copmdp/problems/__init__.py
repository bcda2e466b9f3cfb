"""Concrete problems and random instance generators."""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from ..core import Instance
from .cvrp import PathCvrp
from .kp import Knapsack
from .op import PathOp
from .tsp import PathAtsp, PathTsp, normalize_costs

PROBLEMS: dict[str, type] = {
    "tsp": PathTsp,
    "atsp": PathAtsp,
    "cvrp": PathCvrp,
    "op": PathOp,
    "kp": Knapsack,
}

ATSP_ID_DIM = 4
CVRP_CAPACITY = {100: 50, 200: 80, 500: 100, 1000: 250}


def cvrp_capacity(n: int) -> int:
    """Vehicle capacity for ``n`` customers (published sizes, else a linear rule)."""
    if n in CVRP_CAPACITY:
        return CVRP_CAPACITY[n]
    return int(math.floor(30 + n / 4 + 0.5))


def op_budget(n: int) -> float:
    return 2.0 * math.sqrt(n / 100)


def kp_capacity(n: int) -> float:
    return n / 8


def _unit(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Uniform on (0, 1]."""
    return 1.0 - rng.random(shape)


def random_instance(
    problem: str,
    n: int,
    rng: np.random.Generator,
    *,
    capacity: float | None = None,
    budget: float | None = None,
    asym_noise: float = 0.2,
    id_dim: int = 0,
) -> Instance:
    """Draw one fresh instance with ``n`` cities / customers / nodes / items."""
    if n < 1:
        raise ValueError("n must be positive")
    if problem == "tsp":
        xy = rng.random((n, 2))
        ids = rng.random((n, id_dim)) if id_dim else None
        return PathTsp.tour(xy, ids)
    if problem == "atsp":
        xy = rng.random((n, 2))
        cost = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
        cost *= rng.uniform(1.0, 1.0 + asym_noise, size=(n, n))
        np.fill_diagonal(cost, 0.0)
        return PathAtsp.tour(cost, rng.random((n, ATSP_ID_DIM)))
    if problem == "cvrp":
        xy = rng.random((n + 1, 2))
        demands = rng.integers(1, 10, size=n)
        cap = cvrp_capacity(n) if capacity is None else capacity
        ids = rng.random((n + 1, id_dim)) if id_dim else None
        return PathCvrp.fresh(xy[0], xy[1:], demands, cap, ids)
    if problem == "op":
        xy = rng.random((n + 1, 2))
        prizes = _unit(rng, n)
        b = op_budget(n) if budget is None else budget
        ids = rng.random((n + 2, id_dim)) if id_dim else None
        return PathOp.fresh(xy[0], xy[1:], prizes, b, ids)
    if problem == "kp":
        w = _unit(rng, n)
        v = _unit(rng, n)
        return Knapsack.fresh(w, v, kp_capacity(n) if capacity is None else capacity)
    raise ValueError(f"unknown problem {problem!r}")


def instance_from_dict(d: dict[str, Any]) -> Instance:
    try:
        cls = PROBLEMS[d["problem"]]
    except KeyError as exc:
        raise ValueError(f"unknown problem tag {d.get('problem')!r}") from exc
    return cls.from_dict(d)


__all__ = [
    "PROBLEMS",
    "PathTsp",
    "PathAtsp",
    "PathCvrp",
    "PathOp",
    "Knapsack",
    "normalize_costs",
    "random_instance",
    "instance_from_dict",
    "cvrp_capacity",
    "op_budget",
    "kp_capacity",
]
