"""Path-OP: collect prizes on a route from an origin to a destination within a
distance budget. The objective is the negated collected prize."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import REGISTER_TOL, IllegalStep, Instance, PartialSolution, Step, same_array


@dataclass(frozen=True, eq=False)
class PathOp(Instance):
    coords: np.ndarray
    prizes: np.ndarray
    origin: int
    dest: int
    budget: float
    active: tuple[int, ...]
    ids: np.ndarray | None = field(default=None, repr=False)

    problem = "op"

    def __post_init__(self) -> None:
        object.__setattr__(self, "active", tuple(sorted(int(i) for i in self.active)))
        if self.budget < self.dist(self.origin, self.dest) - 1e-6:
            raise ValueError("budget does not allow reaching the destination")

    @classmethod
    def fresh(
        cls,
        depot_xy: np.ndarray,
        nodes_xy: np.ndarray,
        prizes: np.ndarray,
        budget: float,
        ids: np.ndarray | None = None,
    ) -> "PathOp":
        """Closed OP: node 0 is the depot, node n+1 its copy used as destination."""
        depot_xy = np.asarray(depot_xy, dtype=np.float64).reshape(1, 2)
        coords = np.vstack([depot_xy, nodes_xy, depot_xy])
        pr = np.concatenate([[0.0], np.asarray(prizes, dtype=np.float64), [0.0]])
        m = len(coords) - 1
        return cls(coords, pr, 0, m, float(budget), tuple(range(1, m)), ids)

    def dist(self, a: int, b: int) -> float:
        d = self.coords[a] - self.coords[b]
        return float(np.sqrt(d[0] * d[0] + d[1] * d[1]))

    def _reachable(self, i: int) -> bool:
        # closed inequality: a node exactly on the budget boundary is allowed
        return self.dist(self.origin, i) + self.dist(i, self.dest) <= self.budget + REGISTER_TOL

    def allowed_steps(self) -> list[Step]:
        return [Step(i) for i in self.active if self._reachable(i)]

    def reduce(self, step: Step) -> tuple["PathOp", float]:
        i = step.index
        if step.via_depot or i not in self.active or not self._reachable(i):
            raise IllegalStep(f"{step} cannot be visited within the budget")
        left = max(0.0, self.budget - self.dist(self.origin, i))
        rest = tuple(j for j in self.active if j != i)
        return PathOp(self.coords, self.prizes, i, self.dest, left, rest, self.ids), float(self.prizes[i])

    def is_complete(self) -> bool:
        return True

    def canonical(self) -> tuple[tuple, tuple[float, ...]]:
        return (self.origin, self.dest, self.active), (self.budget,)

    def length(self, partial: PartialSolution) -> float:
        """Route length origin -> partial -> destination."""
        total, prev = 0.0, self.origin
        for s in partial:
            total += self.dist(prev, s.index)
            prev = s.index
        return total + self.dist(prev, self.dest)

    def objective(self, partial: PartialSolution) -> float:
        return -float(sum(self.prizes[s.index] for s in partial))

    def is_feasible(self, partial: PartialSolution) -> bool:
        nodes = [s.index for s in partial]
        return (
            not any(s.via_depot for s in partial)
            and len(set(nodes)) == len(nodes)
            and set(nodes) <= set(self.active)
            and self.length(partial) <= self.budget + REGISTER_TOL
        )

    def is_extendable(self, partial: PartialSolution) -> bool:
        # with a metric distance, inserting nodes never shortens a route
        return self.is_feasible(partial)

    def step_universe(self) -> list[Step]:
        return [Step(i) for i in self.active]

    def route(self, partial: PartialSolution) -> list[int]:
        return [self.origin, *(s.index for s in partial), self.dest]

    def token_nodes(self) -> list[int]:
        return [self.origin, self.dest, *self.active]

    def feature_matrix(self) -> np.ndarray:
        tokens = self.token_nodes()
        prize = self.prizes[tokens].copy()
        prize[:2] = 0.0
        feats = np.vstack([self.coords[tokens].T, prize, np.full(len(tokens), self.budget)])
        if self.ids is not None:
            feats = np.vstack([feats, self.ids[tokens].T])
        return feats

    def _same_data(self, other: Instance) -> bool:
        return same_array(self.coords, other.coords) and same_array(self.prizes, other.prizes)  # type: ignore[attr-defined]

    def restrict(self, active: tuple[int, ...]) -> "PathOp":
        return PathOp(self.coords, self.prizes, self.origin, self.dest, self.budget, active, self.ids)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "problem": self.problem,
            "coords": self.coords.tolist(),
            "prizes": self.prizes.tolist(),
            "origin": self.origin,
            "dest": self.dest,
            "budget": self.budget,
            "active": list(self.active),
        }
        if self.ids is not None:
            out["ids"] = self.ids.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PathOp":
        ids = d.get("ids")
        return cls(
            np.asarray(d["coords"], dtype=np.float64),
            np.asarray(d["prizes"], dtype=np.float64),
            int(d["origin"]),
            int(d["dest"]),
            float(d["budget"]),
            tuple(d["active"]),
            None if ids is None else np.asarray(ids, dtype=np.float64),
        )
