"""Path-TSP (Euclidean) and path-ATSP (cost matrix).

A closed tour is encoded as a path whose destination is a copy of the origin,
so both variants are tail-recursive: after a step to ``z`` the remaining
problem is a path from ``z`` to the same destination over fewer customers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import IllegalStep, Instance, PartialSolution, Step, same_array


class _PathTour(Instance):
    """Shared logic of the two path-TSP flavours; subclasses provide ``dist``."""

    origin: int
    dest: int
    active: tuple[int, ...]

    def dist(self, a: int, b: int) -> float:
        raise NotImplementedError

    def _replace(self, origin: int, active: tuple[int, ...]) -> "_PathTour":
        raise NotImplementedError

    def allowed_steps(self) -> list[Step]:
        return [Step(i) for i in self.active]

    def reduce(self, step: Step) -> tuple["_PathTour", float]:
        if step.via_depot or step.index not in self.active:
            raise IllegalStep(f"{step} is not an unvisited customer")
        rest = tuple(i for i in self.active if i != step.index)
        cost = self.dist(self.origin, step.index)
        if not rest:
            cost += self.dist(step.index, self.dest)
        return self._replace(step.index, rest), -cost

    def is_complete(self) -> bool:
        return not self.active

    def canonical(self) -> tuple[tuple, tuple[float, ...]]:
        return (self.origin, self.dest, self.active), ()

    def objective(self, partial: PartialSolution) -> float:
        total, prev = 0.0, self.origin
        for s in partial:
            total += self.dist(prev, s.index)
            prev = s.index
        if partial.steps and self.is_feasible(partial):
            total += self.dist(prev, self.dest)
        return total

    def is_extendable(self, partial: PartialSolution) -> bool:
        nodes = [s.index for s in partial]
        return (
            not any(s.via_depot for s in partial)
            and len(set(nodes)) == len(nodes)
            and set(nodes) <= set(self.active)
        )

    def is_feasible(self, partial: PartialSolution) -> bool:
        return self.is_extendable(partial) and len(partial) == len(self.active)

    def step_universe(self) -> list[Step]:
        return [Step(i) for i in self.active]

    def token_nodes(self) -> list[int]:
        return [self.origin, self.dest, *self.active]

    def route(self, partial: PartialSolution) -> list[int]:
        """Node sequence travelled, including origin and (if complete) destination."""
        nodes = [self.origin, *(s.index for s in partial)]
        if self.is_feasible(partial):
            nodes.append(self.dest)
        return nodes


@dataclass(frozen=True, eq=False)
class PathTsp(_PathTour):
    coords: np.ndarray
    origin: int
    dest: int
    active: tuple[int, ...]
    ids: np.ndarray | None = field(default=None, repr=False)

    problem = "tsp"

    def __post_init__(self) -> None:
        object.__setattr__(self, "active", tuple(sorted(int(i) for i in self.active)))

    @classmethod
    def tour(cls, coords: np.ndarray, ids: np.ndarray | None = None) -> "PathTsp":
        """Closed tour from node 0; the destination is an appended copy of node 0."""
        coords = np.asarray(coords, dtype=np.float64)
        m = len(coords)
        full = np.vstack([coords, coords[:1]])
        if ids is not None:
            ids = np.vstack([ids, ids[:1]])
        return cls(full, 0, m, tuple(range(1, m)), ids)

    def dist(self, a: int, b: int) -> float:
        d = self.coords[a] - self.coords[b]
        return float(np.sqrt(d[0] * d[0] + d[1] * d[1]))

    def _replace(self, origin: int, active: tuple[int, ...]) -> "PathTsp":
        return PathTsp(self.coords, origin, self.dest, active, self.ids)

    def feature_matrix(self) -> np.ndarray:
        tokens = self.token_nodes()
        feats = self.coords[tokens].T
        if self.ids is not None:
            feats = np.vstack([feats, self.ids[tokens].T])
        return feats

    def _same_data(self, other: Instance) -> bool:
        return same_array(self.coords, other.coords)  # type: ignore[attr-defined]

    def restrict(self, active: tuple[int, ...], dest: int | None = None) -> "PathTsp":
        return PathTsp(self.coords, self.origin, self.dest if dest is None else dest, active, self.ids)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "problem": self.problem,
            "coords": self.coords.tolist(),
            "origin": self.origin,
            "dest": self.dest,
            "active": list(self.active),
        }
        if self.ids is not None:
            out["ids"] = self.ids.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PathTsp":
        ids = d.get("ids")
        return cls(
            np.asarray(d["coords"], dtype=np.float64),
            int(d["origin"]),
            int(d["dest"]),
            tuple(d["active"]),
            None if ids is None else np.asarray(ids, dtype=np.float64),
        )


def normalize_costs(cost: np.ndarray) -> np.ndarray:
    """Edge weights for the graph convolution: row-wise min-max, then 1 - c.

    Nearer nodes get larger weight; the diagonal is zero.
    """
    n = len(cost)
    if n == 1:
        return np.zeros((1, 1))
    off = ~np.eye(n, dtype=bool)
    c = np.where(off, cost, np.nan)
    lo = np.nanmin(c, axis=1, keepdims=True)
    hi = np.nanmax(c, axis=1, keepdims=True)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    w = 1.0 - (c - lo) / span
    return np.where(off, w, 0.0)


@dataclass(frozen=True, eq=False)
class PathAtsp(_PathTour):
    cost: np.ndarray
    ids: np.ndarray
    origin: int
    dest: int
    active: tuple[int, ...]

    problem = "atsp"

    def __post_init__(self) -> None:
        object.__setattr__(self, "active", tuple(sorted(int(i) for i in self.active)))

    @classmethod
    def tour(cls, cost: np.ndarray, ids: np.ndarray) -> "PathAtsp":
        cost = np.asarray(cost, dtype=np.float64)
        m = len(cost)
        full = np.zeros((m + 1, m + 1))
        full[:m, :m] = cost
        full[m, :m] = cost[0]
        full[:m, m] = cost[:, 0]
        ids = np.vstack([ids, ids[:1]])
        return cls(full, ids, 0, m, tuple(range(1, m)))

    def dist(self, a: int, b: int) -> float:
        return float(self.cost[a, b])

    def _replace(self, origin: int, active: tuple[int, ...]) -> "PathAtsp":
        return PathAtsp(self.cost, self.ids, origin, self.dest, active)

    def feature_matrix(self) -> np.ndarray:
        return self.ids[self.token_nodes()].T

    def cost_matrix(self) -> np.ndarray:
        tokens = self.token_nodes()
        return normalize_costs(self.cost[np.ix_(tokens, tokens)])

    def _same_data(self, other: Instance) -> bool:
        return same_array(self.cost, other.cost)  # type: ignore[attr-defined]

    def restrict(self, active: tuple[int, ...], dest: int | None = None) -> "PathAtsp":
        return PathAtsp(self.cost, self.ids, self.origin, self.dest if dest is None else dest, active)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem": self.problem,
            "cost": self.cost.tolist(),
            "ids": self.ids.tolist(),
            "origin": self.origin,
            "dest": self.dest,
            "active": list(self.active),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PathAtsp":
        return cls(
            np.asarray(d["cost"], dtype=np.float64),
            np.asarray(d["ids"], dtype=np.float64),
            int(d["origin"]),
            int(d["dest"]),
            tuple(d["active"]),
        )
