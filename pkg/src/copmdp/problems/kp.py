"""0/1 knapsack. Partial solutions are item sets; the objective is the negated
total value so that every problem is a minimisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core import REGISTER_TOL, IllegalStep, Instance, PartialSolution, Step, same_array


@dataclass(frozen=True, eq=False)
class Knapsack(Instance):
    weights: np.ndarray
    values: np.ndarray
    capacity: float
    items: tuple[int, ...]

    problem = "kp"
    ordered = False
    has_endpoints = False

    def __post_init__(self) -> None:
        # items that can no longer fit are dropped from the instance
        kept = tuple(sorted(int(i) for i in self.items if self.weights[i] <= self.capacity + REGISTER_TOL))
        object.__setattr__(self, "items", kept)

    @classmethod
    def fresh(cls, weights: np.ndarray, values: np.ndarray, capacity: float) -> "Knapsack":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w, np.asarray(values, dtype=np.float64), float(capacity), tuple(range(len(w))))

    def allowed_steps(self) -> list[Step]:
        return [Step(i) for i in self.items]

    def reduce(self, step: Step) -> tuple["Knapsack", float]:
        i = step.index
        if step.via_depot or i not in self.items:
            raise IllegalStep(f"item {i} is not available or does not fit")
        left = max(0.0, self.capacity - float(self.weights[i]))
        rest = tuple(j for j in self.items if j != i)
        return Knapsack(self.weights, self.values, left, rest), float(self.values[i])

    def is_complete(self) -> bool:
        return True

    def canonical(self) -> tuple[tuple, tuple[float, ...]]:
        return (self.items,), (self.capacity,)

    def objective(self, partial: PartialSolution) -> float:
        return -float(sum(self.values[s.index] for s in partial))

    def weight(self, partial: PartialSolution) -> float:
        return float(sum(self.weights[s.index] for s in partial))

    def is_feasible(self, partial: PartialSolution) -> bool:
        idx = [s.index for s in partial]
        return (
            not any(s.via_depot for s in partial)
            and len(set(idx)) == len(idx)
            and set(idx) <= set(self.items)
            and self.weight(partial) <= self.capacity + REGISTER_TOL
        )

    def is_extendable(self, partial: PartialSolution) -> bool:
        # any subset of a feasible item set is feasible
        return self.is_feasible(partial)

    def step_universe(self) -> list[Step]:
        return [Step(i) for i in self.items]

    def token_nodes(self) -> list[int]:
        return list(self.items)

    def feature_matrix(self) -> np.ndarray:
        idx = list(self.items)
        return np.vstack([self.values[idx], self.weights[idx], np.full(len(idx), self.capacity)])

    def _same_data(self, other: Instance) -> bool:
        return same_array(self.weights, other.weights) and same_array(self.values, other.values)  # type: ignore[attr-defined]

    def restrict(self, items: tuple[int, ...]) -> "Knapsack":
        return Knapsack(self.weights, self.values, self.capacity, items)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem": self.problem,
            "weights": self.weights.tolist(),
            "values": self.values.tolist(),
            "capacity": self.capacity,
            "items": list(self.items),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Knapsack":
        w = np.asarray(d["weights"], dtype=np.float64)
        return cls(w, np.asarray(d["values"], dtype=np.float64), float(d["capacity"]), tuple(d.get("items", range(len(w)))))
