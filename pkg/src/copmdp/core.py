"""Solution-space algebra shared by every problem.

Partial solutions form a monoid under composition. Routing problems use the
free monoid of step sequences (composition is concatenation); the knapsack
uses the commutative monoid of finite multisets of items (composition is
multiset sum, stored as a sorted tuple so equality is canonical).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class BudgetExceeded(RuntimeError):
    """An exhaustive enumeration visited more nodes than it was allowed to."""


class IllegalStep(ValueError):
    """A step was applied whose guard does not hold."""


class Step(NamedTuple):
    """One construction step.

    ``index`` is a node (routing) or an item (knapsack). ``via_depot`` is only
    used by the CVRP, where it means "go through the depot before ``index``".
    """

    index: int
    via_depot: bool = False

    def __repr__(self) -> str:
        return f"Step({self.index}{', depot' if self.via_depot else ''})"


@dataclass(frozen=True)
class PartialSolution:
    steps: tuple[Step, ...] = ()
    ordered: bool = True

    def __post_init__(self) -> None:
        if not self.ordered:
            object.__setattr__(self, "steps", tuple(sorted(self.steps)))

    @classmethod
    def empty(cls, ordered: bool = True) -> "PartialSolution":
        return cls((), ordered)

    @classmethod
    def of(cls, steps: Sequence[Step | int], ordered: bool = True) -> "PartialSolution":
        return cls(tuple(s if isinstance(s, Step) else Step(int(s)) for s in steps), ordered)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    @property
    def is_empty(self) -> bool:
        return not self.steps

    def compose(self, other: "PartialSolution") -> "PartialSolution":
        return compose(self, other)

    def then(self, step: Step) -> "PartialSolution":
        return compose(self, PartialSolution((step,), self.ordered))


def compose(x: PartialSolution, y: PartialSolution) -> PartialSolution:
    """Monoid operation: concatenation for sequences, multiset sum for sets."""
    if x.ordered != y.ordered:
        raise ValueError("cannot compose partial solutions from different solution spaces")
    if not y.steps:
        return x
    if not x.steps:
        return y
    return PartialSolution(x.steps + y.steps, x.ordered)


def _divides(prefix: PartialSolution, x: PartialSolution) -> bool:
    """True iff some y satisfies prefix ∘ y = x."""
    if prefix.ordered:
        return x.steps[: len(prefix.steps)] == prefix.steps
    remaining = list(x.steps)
    for s in prefix.steps:
        if s not in remaining:
            return False
        remaining.remove(s)
    return True


def step_decompositions(
    x: PartialSolution, max_len: int, node_budget: int = 100_000
) -> list[list[Step]]:
    """All step sequences of length <= ``max_len`` whose composition is ``x``.

    This is a plain depth-first enumeration over steps taken from ``x`` itself;
    it is meant for tiny solutions only.
    """
    found: list[list[Step]] = []
    visited = 0
    alphabet = sorted(set(x.steps))

    def dfs(acc: PartialSolution, seq: list[Step]) -> None:
        nonlocal visited
        visited += 1
        if visited > node_budget:
            raise BudgetExceeded(f"more than {node_budget} enumeration nodes")
        if acc == x:
            found.append(list(seq))
        if len(seq) >= max_len or len(acc) >= len(x):
            return
        for s in alphabet:
            nxt = acc.then(s)
            if _divides(nxt, x):
                seq.append(s)
                dfs(nxt, seq)
                seq.pop()

    dfs(PartialSolution.empty(x.ordered), [])
    return found


def compose_all(steps: Sequence[Step], ordered: bool = True) -> PartialSolution:
    out = PartialSolution.empty(ordered)
    for s in steps:
        out = out.then(s)
    return out


class Instance(ABC):
    """A problem instance in parametric form; also a state of the quotiented MDP.

    Subclasses are immutable. Reduced instances share the arrays of the
    instance they were derived from and only carry index lists and scalar
    registers, so ``reduce`` never copies geometry.
    """

    problem: str = ""
    ordered: bool = True
    #: number of score columns the policy head emits per token
    head_width: int = 1
    #: whether the first two tokens are origin and destination (routing)
    has_endpoints: bool = True

    # -- parametric MDP interface -------------------------------------------------

    @abstractmethod
    def allowed_steps(self) -> list[Step]:
        """Steps z with X*z non-empty, in canonical action order."""

    @abstractmethod
    def reduce(self, step: Step) -> tuple["Instance", float]:
        """Tail subproblem after ``step`` and the reward ``f(ε) - f(step)``."""

    @abstractmethod
    def is_complete(self) -> bool:
        """True iff the empty solution is feasible for this instance."""

    @abstractmethod
    def canonical(self) -> tuple[tuple, tuple[float, ...]]:
        """Canonical form as (discrete part, float registers)."""

    # -- direct semantics on the original instance ---------------------------------

    @abstractmethod
    def objective(self, partial: PartialSolution) -> float:
        """Objective of a partial solution, normalised so that f(ε) = 0."""

    @abstractmethod
    def is_feasible(self, partial: PartialSolution) -> bool:
        """Membership in X, checked from scratch."""

    @abstractmethod
    def is_extendable(self, partial: PartialSolution) -> bool:
        """Membership in X̄ (some extension is feasible), checked from scratch."""

    @abstractmethod
    def step_universe(self) -> list[Step]:
        """Every step that can occur in any solution of this instance."""

    # -- model interface ------------------------------------------------------------

    @abstractmethod
    def token_nodes(self) -> list[int]:
        """Global node/item index of each model token, in token order."""

    @abstractmethod
    def feature_matrix(self) -> np.ndarray:
        """Model input features, shape (d_in, n_tokens)."""

    def action_mask(self) -> np.ndarray:
        """Boolean (n_tokens, head_width) mask of allowed actions."""
        mask = np.zeros((len(self.token_nodes()), self.head_width), dtype=bool)
        for s in self.allowed_steps():
            mask[self._step_token(s.index), int(s.via_depot)] = True
        return mask

    def _step_token(self, node: int) -> int:
        nodes = self.token_nodes()
        start = 2 if self.has_endpoints else 0
        return nodes.index(node, start)

    def action_to_step(self, action: int) -> Step:
        token, col = divmod(int(action), self.head_width)
        return Step(self.token_nodes()[token], bool(col))

    def step_to_action(self, step: Step) -> int:
        return self._step_token(step.index) * self.head_width + int(step.via_depot)

    def cost_matrix(self) -> np.ndarray | None:
        """Normalised edge weights between tokens (ATSP only)."""
        return None

    def empty_solution(self) -> PartialSolution:
        return PartialSolution.empty(self.ordered)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance) or type(other) is not type(self):
            return NotImplemented
        if not self._same_data(other):
            return False
        (k1, r1), (k2, r2) = self.canonical(), other.canonical()
        return k1 == k2 and all(abs(a - b) <= REGISTER_TOL for a, b in zip(r1, r2))

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.canonical()[0]))

    @abstractmethod
    def _same_data(self, other: "Instance") -> bool:
        """True iff both instances share the same underlying arrays."""


def same_array(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is b:
        return True
    if a is None or b is None:
        return False
    return a.shape == b.shape and bool(np.array_equal(a, b))


#: remaining budgets/capacities accumulate float subtraction
REGISTER_TOL = 1e-9
