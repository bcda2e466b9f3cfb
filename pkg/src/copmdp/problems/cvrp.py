"""Path-CVRP: the vehicle starts at an origin with some remaining capacity.

A step is either a direct move to an unvisited customer, or a move through the
depot (which refills the vehicle) to that customer. A plain CVRP instance is
the special case origin = depot with a full vehicle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import REGISTER_TOL, IllegalStep, Instance, PartialSolution, Step, same_array


@dataclass(frozen=True, eq=False)
class PathCvrp(Instance):
    coords: np.ndarray
    demands: np.ndarray
    depot: int
    capacity: float
    remaining: float
    origin: int
    active: tuple[int, ...]
    ids: np.ndarray | None = field(default=None, repr=False)

    problem = "cvrp"
    head_width = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "active", tuple(sorted(int(i) for i in self.active)))
        if not 0 <= self.remaining <= self.capacity:
            raise ValueError("remaining capacity must lie in [0, capacity]")

    @classmethod
    def fresh(
        cls,
        depot_xy: np.ndarray,
        customers_xy: np.ndarray,
        demands: np.ndarray,
        capacity: float,
        ids: np.ndarray | None = None,
    ) -> "PathCvrp":
        """Node 0 is the depot; customers are nodes 1..n."""
        coords = np.vstack([np.asarray(depot_xy, dtype=np.float64).reshape(1, 2), customers_xy])
        dem = np.concatenate([[0], np.asarray(demands)]).astype(np.int64)
        if dem.max(initial=0) > capacity:
            raise ValueError("every demand must fit in an empty vehicle")
        return cls(coords, dem, 0, float(capacity), float(capacity), 0, tuple(range(1, len(coords))), ids)

    def dist(self, a: int, b: int) -> float:
        d = self.coords[a] - self.coords[b]
        return float(np.sqrt(d[0] * d[0] + d[1] * d[1]))

    def step_cost(self, prev: int, step: Step) -> float:
        if step.via_depot:
            return self.dist(prev, self.depot) + self.dist(self.depot, step.index)
        return self.dist(prev, step.index)

    # -- quotiented MDP ----------------------------------------------------------------

    def allowed_steps(self) -> list[Step]:
        out = []
        for i in self.active:
            if self.demands[i] <= self.remaining:
                out.append(Step(i, False))
            if self.demands[i] <= self.capacity:
                out.append(Step(i, True))
        return out

    def reduce(self, step: Step) -> tuple["PathCvrp", float]:
        i = step.index
        if i not in self.active:
            raise IllegalStep(f"{step} is not an unvisited customer")
        load = self.capacity if step.via_depot else self.remaining
        if self.demands[i] > load:
            raise IllegalStep(f"demand {self.demands[i]} exceeds capacity {load}")
        rest = tuple(j for j in self.active if j != i)
        cost = self.step_cost(self.origin, step)
        if not rest:
            cost += self.dist(i, self.depot)
        nxt = PathCvrp(
            self.coords, self.demands, self.depot, self.capacity,
            float(load - self.demands[i]), i, rest, self.ids,
        )
        return nxt, -cost

    def is_complete(self) -> bool:
        return not self.active

    def canonical(self) -> tuple[tuple, tuple[float, ...]]:
        return (self.origin, self.depot, self.active), (self.remaining, self.capacity)

    # -- direct semantics ----------------------------------------------------------------

    def _simulate(self, partial: PartialSolution) -> tuple[bool, float]:
        """(capacity respected and customers distinct, path length without final leg)."""
        seen: set[int] = set()
        load, prev, length, ok = self.remaining, self.origin, 0.0, True
        for s in partial:
            length += self.step_cost(prev, s)
            if s.via_depot:
                load = self.capacity
            if s.index in seen or s.index not in self.active:
                ok = False
            seen.add(s.index)
            load -= self.demands[s.index]
            if load < -REGISTER_TOL:
                ok = False
            prev = s.index
        return ok, length

    def objective(self, partial: PartialSolution) -> float:
        _, length = self._simulate(partial)
        if partial.steps and self.is_feasible(partial):
            length += self.dist(partial.steps[-1].index, self.depot)
        return length

    def is_extendable(self, partial: PartialSolution) -> bool:
        return self._simulate(partial)[0]

    def is_feasible(self, partial: PartialSolution) -> bool:
        return self.is_extendable(partial) and len(partial) == len(self.active)

    def step_universe(self) -> list[Step]:
        return [Step(i, v) for i in self.active for v in (False, True)]

    def route(self, partial: PartialSolution) -> list[int]:
        """Flattened node sequence, depot visits included."""
        nodes = [self.origin]
        for s in partial:
            if s.via_depot:
                nodes.append(self.depot)
            nodes.append(s.index)
        if self.is_feasible(partial):
            nodes.append(self.depot)
        return nodes

    def subtours(self, partial: PartialSolution) -> list[list[Step]]:
        """Split a solution into subtours; a via-depot step opens a new one."""
        tours: list[list[Step]] = []
        for s in partial:
            if s.via_depot or not tours:
                tours.append([])
            tours[-1].append(s)
        return tours

    # -- model interface -------------------------------------------------------------

    def token_nodes(self) -> list[int]:
        return [self.origin, self.depot, *self.active]

    def feature_matrix(self) -> np.ndarray:
        tokens = self.token_nodes()
        dem = self.demands[tokens].astype(np.float64) / self.capacity
        dem[:2] = 0.0
        feats = np.vstack([
            self.coords[tokens].T,
            dem,
            np.full(len(tokens), self.remaining / self.capacity),
        ])
        if self.ids is not None:
            feats = np.vstack([feats, self.ids[tokens].T])
        return feats

    def _same_data(self, other: Instance) -> bool:
        return same_array(self.coords, other.coords) and same_array(self.demands, other.demands)  # type: ignore[attr-defined]

    def restrict(self, active: tuple[int, ...]) -> "PathCvrp":
        return PathCvrp(
            self.coords, self.demands, self.depot, self.capacity, self.remaining,
            self.origin, active, self.ids,
        )

    def to_dict(self) -> dict[str, Any]:
        out = {
            "problem": self.problem,
            "coords": self.coords.tolist(),
            "demands": self.demands.tolist(),
            "depot": self.depot,
            "capacity": self.capacity,
            "remaining": self.remaining,
            "origin": self.origin,
            "active": list(self.active),
        }
        if self.ids is not None:
            out["ids"] = self.ids.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PathCvrp":
        ids = d.get("ids")
        return cls(
            np.asarray(d["coords"], dtype=np.float64),
            np.asarray(d["demands"], dtype=np.int64),
            int(d["depot"]),
            float(d["capacity"]),
            float(d.get("remaining", d["capacity"])),
            int(d.get("origin", d["depot"])),
            tuple(d["active"]),
            None if ids is None else np.asarray(ids, dtype=np.float64),
        )
