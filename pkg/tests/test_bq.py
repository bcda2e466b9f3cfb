import dataclasses

import numpy as np
import pytest

from copmdp import bq, direct
from copmdp.core import PartialSolution, Step
from copmdp.problems import Knapsack, PathCvrp, PathTsp, random_instance
from copmdp.verify import bisimulation_suite, random_prefix, soundness_case, tiny_instance

from conftest import PROBLEMS


def test_phi_of_empty_is_identity(rng):
    for p in PROBLEMS:
        inst = random_instance(p, 5, rng)
        assert bq.phi(inst, inst.empty_solution()) is inst


@pytest.mark.parametrize("problem", PROBLEMS)
def test_phi_commutes_with_reduce(problem, rng):
    for _ in range(2000):
        inst = tiny_instance(problem, int(rng.integers(1, 8)), rng)
        x = random_prefix(inst, rng, int(rng.integers(0, 6)))
        state = bq.phi(inst, x)
        allowed = state.allowed_steps()
        if not allowed:
            continue
        z = allowed[int(rng.integers(len(allowed)))]
        assert bq.phi(inst, x.then(z)) == state.reduce(z)[0]


def test_single_step_from_empty_passes(rng):
    for p in PROBLEMS:
        inst = random_instance(p, 5, rng)
        for z in inst.allowed_steps():
            assert bq.check_bisimulation(inst, inst.empty_solution(), z).ok


@pytest.mark.parametrize("problem", PROBLEMS)
def test_bisimulation_random_triples(problem):
    rep = bisimulation_suite(problem, count=300, seed=7)
    assert rep.ok, rep.failures[:3]


class LeakyKnapsack(Knapsack):
    """Forgets to charge the item weight: the capacity register is wrong."""

    def reduce(self, step):
        nxt, r = super().reduce(step)
        return LeakyKnapsack(self.weights, self.values, self.capacity, nxt.items), r


class WrongRewardCvrp(PathCvrp):
    """Ignores the depot detour in the reward."""

    def reduce(self, step):
        nxt, r = super().reduce(step)
        nxt = WrongRewardCvrp(**{f.name: getattr(nxt, f.name) for f in dataclasses.fields(nxt)})
        if step.via_depot:
            r = -self.dist(self.origin, step.index)
        return nxt, r


def test_checker_reports_corrupted_capacity_update():
    inst = LeakyKnapsack.fresh([0.6, 0.3, 0.3], [1.0, 1.0, 1.0], capacity=1.0)
    # {0, 1} weighs 0.9, so item 2 no longer fits, but the leaky register still says 1.0
    rep = bq.check_bisimulation(inst, PartialSolution.of([0, 1], ordered=False), Step(2))
    assert not rep.ok and rep.leg == "guard"


def test_checker_reports_wrong_reward(rng):
    base = random_instance("cvrp", 4, rng)
    inst = WrongRewardCvrp(**{f.name: getattr(base, f.name) for f in dataclasses.fields(base)})
    z0 = inst.allowed_steps()[0]
    rep = bq.check_bisimulation(inst, PartialSolution.of([z0]), Step(inst.active[-1], True))
    assert not rep.ok and rep.leg == "reward"


def test_phi_is_many_to_one_for_tsp(rng):
    inst = PathTsp.tour(rng.random((6, 2)))
    a = bq.phi(inst, PartialSolution.of([1, 2, 3]))
    b = bq.phi(inst, PartialSolution.of([2, 1, 3]))
    assert a == b and hash(a) == hash(b)
    assert inst.objective(PartialSolution.of([1, 2, 3])) != inst.objective(PartialSolution.of([2, 1, 3]))


def test_register_tolerance_in_equality():
    w = np.array([0.1, 0.2, 0.3])
    a = Knapsack(w, w, 0.3, (0, 1, 2))
    b = Knapsack(w, w, 0.1 + 0.2, (0, 1, 2))
    assert a == b


@pytest.mark.parametrize("problem", PROBLEMS)
def test_quotient_replays_direct_rollouts(problem, rng):
    for _ in range(20):
        inst = tiny_instance(problem, int(rng.integers(1, 6)), rng)
        assert soundness_case(inst) is None


def test_auto_neutral_for_op_and_kp(rng):
    inst = Knapsack.fresh([0.9, 0.9], [1.0, 2.0], capacity=1.0)
    traj = bq.rollout(inst, lambda s: s.allowed_steps()[-1])
    assert traj.actions == [Step(1), direct.NEUTRAL]
    assert traj.rewards == [2.0, 0.0]
    assert traj.outcome == PartialSolution.of([1], ordered=False)
