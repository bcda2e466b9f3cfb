"""The per-instance direct MDP: states are partial solutions.

This engine evaluates everything from scratch on the original instance and
is the reference semantics the quotiented MDP is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import BudgetExceeded, IllegalStep, Instance, PartialSolution, Step

#: the neutral (stop-and-stay) action
NEUTRAL = None

Action = Optional[Step]


class DeadEnd(RuntimeError):
    """A valid state had no allowed action: the problem definition is broken."""


@dataclass(frozen=True)
class DirectState:
    instance: Instance
    partial: PartialSolution

    @classmethod
    def initial(cls, instance: Instance) -> "DirectState":
        return cls(instance, instance.empty_solution())


@dataclass(frozen=True)
class Transition:
    action: Action
    reward: float
    next: object


@dataclass
class Trajectory:
    actions: list[Action] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    outcome: PartialSolution | None = None

    @property
    def ret(self) -> float:
        return float(sum(self.rewards))


def allowed_actions(s: DirectState) -> list[Action]:
    inst, x = s.instance, s.partial
    acts: list[Action] = [z for z in inst.step_universe() if inst.is_extendable(x.then(z))]
    if inst.is_feasible(x):
        acts.append(NEUTRAL)
    if not acts:
        raise DeadEnd(f"no allowed action from {x}")
    return acts


def apply(s: DirectState, a: Action) -> Transition:
    inst, x = s.instance, s.partial
    if a is NEUTRAL:
        if not inst.is_feasible(x):
            raise IllegalStep("neutral action on an infeasible partial solution")
        return Transition(NEUTRAL, 0.0, s)
    nxt = x.then(a)
    if not inst.is_extendable(nxt):
        raise IllegalStep(f"{a} leads outside the extendable set")
    return Transition(a, inst.objective(x) - inst.objective(nxt), DirectState(inst, nxt))


def enumerate_trajectories(instance: Instance, node_budget: int = 1_000_000) -> list[Trajectory]:
    """Every trajectory from ε, each stopped at its first neutral action."""
    out: list[Trajectory] = []
    visited = 0

    def dfs(s: DirectState, traj: Trajectory) -> None:
        nonlocal visited
        visited += 1
        if visited > node_budget:
            raise BudgetExceeded(f"more than {node_budget} states expanded")
        for a in allowed_actions(s):
            t = apply(s, a)
            branch = Trajectory(traj.actions + [a], traj.rewards + [t.reward])
            if a is NEUTRAL:
                branch.outcome = s.partial
                out.append(branch)
            else:
                dfs(t.next, branch)  # type: ignore[arg-type]

    dfs(DirectState.initial(instance), Trajectory())
    return out


def rollout(
    instance: Instance,
    policy: Callable[[DirectState], Action],
    max_steps: int = 10_000,
) -> Trajectory:
    """Roll out a direct-state policy until it emits the neutral action."""
    s = DirectState.initial(instance)
    traj = Trajectory()
    for _ in range(max_steps):
        a = policy(s)
        t = apply(s, a)
        traj.actions.append(a)
        traj.rewards.append(t.reward)
        if a is NEUTRAL:
            traj.outcome = s.partial
            return traj
        s = t.next  # type: ignore[assignment]
    raise BudgetExceeded("trajectory did not terminate")
