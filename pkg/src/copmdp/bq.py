"""The bisimulation-quotiented MDP: states are (reduced) instances.

``phi`` maps a direct state (instance, partial solution) to the tail
subproblem it induces; ``check_bisimulation`` verifies, for one concrete
transition, that the direct and the quotiented MDP agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .core import IllegalStep, Instance, PartialSolution, Step
from .direct import NEUTRAL, Action, DirectState, Trajectory

REWARD_TOL = 1e-9


def reduce(inst: Instance, z: Step) -> tuple[Instance, float]:
    return inst.reduce(z)


def phi(inst: Instance, partial: PartialSolution) -> Instance:
    """Left fold of ``reduce`` over the steps of ``partial``."""
    for z in partial:
        inst, _ = inst.reduce(z)
    return inst


def allowed_actions(inst: Instance) -> list[Action]:
    acts: list[Action] = list(inst.allowed_steps())
    if inst.is_complete():
        acts.append(NEUTRAL)
    return acts


def transition(inst: Instance, a: Action) -> tuple[Instance, float]:
    if a is NEUTRAL:
        if not inst.is_complete():
            raise IllegalStep("neutral action on an instance whose empty solution is infeasible")
        return inst, 0.0
    return inst.reduce(a)


def rollout(
    inst: Instance,
    policy: Callable[[Instance], Step],
    max_steps: int = 10_000,
) -> Trajectory:
    """Roll out a policy on reduced states.

    The policy only chooses among steps; the neutral action is emitted by the
    environment as soon as no step is allowed.
    """
    traj = Trajectory()
    steps: list[Step] = []
    for _ in range(max_steps):
        if not inst.allowed_steps():
            traj.actions.append(NEUTRAL)
            traj.rewards.append(0.0)
            traj.outcome = _compose(inst, steps)
            return traj
        z = policy(inst)
        inst, r = inst.reduce(z)
        steps.append(z)
        traj.actions.append(z)
        traj.rewards.append(r)
    raise RuntimeError("rollout did not terminate")


def lifted_policy(inst: Instance, policy: Callable[[Instance], Step]) -> Callable[[DirectState], Action]:
    """Turn a reduced-state policy into a direct-state one via ``phi``."""

    def act(s: DirectState) -> Action:
        reduced = phi(inst, s.partial)
        if not reduced.allowed_steps():
            return NEUTRAL
        return policy(reduced)

    return act


def _compose(inst: Instance, steps: list[Step]) -> PartialSolution:
    return PartialSolution(tuple(steps), inst.ordered)


@dataclass(frozen=True)
class BisimulationReport:
    ok: bool
    leg: str | None = None
    detail: str = ""


def check_bisimulation(inst: Instance, partial: PartialSolution, z: Step) -> BisimulationReport:
    """Check the commutation diagram for the step ``z`` from direct state ``partial``.

    Legs: ``guard`` (x∘z ∈ X̄ iff z allowed in Φ(x)), ``state`` (Φ(x∘z) =
    Φ(x)*z), ``reward`` (f(x) - f(x∘z) equals the reduced reward) and
    ``neutral`` (x ∈ X iff ε is feasible for Φ(x)).
    """
    try:
        reduced = phi(inst, partial)
    except IllegalStep as exc:
        return BisimulationReport(False, "state", f"phi failed on a valid state: {exc}")

    if inst.is_feasible(partial) != reduced.is_complete():
        return BisimulationReport(False, "neutral", "x ∈ X disagrees with ε ∈ X*x")

    direct_ok = inst.is_extendable(partial.then(z))
    reduced_ok = z in reduced.allowed_steps()
    if direct_ok != reduced_ok:
        return BisimulationReport(
            False, "guard", f"direct guard {direct_ok}, reduced guard {reduced_ok} for {z}"
        )
    if not direct_ok:
        return BisimulationReport(True)

    nxt, reward = reduced.reduce(z)
    try:
        via_phi = phi(inst, partial.then(z))
    except IllegalStep as exc:
        return BisimulationReport(False, "state", f"phi(x∘z) failed: {exc}")
    if via_phi != nxt:
        return BisimulationReport(False, "state", f"{via_phi!r} != {nxt!r}")

    direct_reward = inst.objective(partial) - inst.objective(partial.then(z))
    if abs(direct_reward - reward) > REWARD_TOL:
        return BisimulationReport(False, "reward", f"direct {direct_reward} vs reduced {reward}")
    return BisimulationReport(True)
