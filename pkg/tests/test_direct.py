import math

import numpy as np
import pytest

from copmdp.core import IllegalStep, PartialSolution, Step
from copmdp.direct import NEUTRAL, DirectState, allowed_actions, apply, enumerate_trajectories
from copmdp.core import BudgetExceeded
from copmdp.oracles import brute_force_optimum
from copmdp.problems import Knapsack, PathCvrp, PathTsp
from copmdp.verify import tiny_instance

from conftest import PROBLEMS


def test_two_customer_tsp_start():
    inst = PathTsp.tour(np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
    acts = allowed_actions(DirectState.initial(inst))
    assert acts == [Step(1), Step(2)]


def test_complete_tour_allows_only_neutral():
    inst = PathTsp.tour(np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
    s = DirectState(inst, PartialSolution.of([2, 1]))
    assert allowed_actions(s) == [NEUTRAL]


def test_cvrp_capacity_guard():
    xy = np.array([[0.1, 0.0], [0.2, 0.0]])
    fresh = PathCvrp.fresh([0.0, 0.0], xy, [3, 1], capacity=12)
    inst = PathCvrp(fresh.coords, fresh.demands, 0, 12.0, 2.0, 0, (1, 2))
    acts = allowed_actions(DirectState.initial(inst))
    assert set(acts) == {Step(2), Step(1, True), Step(2, True)}


def test_step_reward_is_minus_edge_length():
    xy = np.array([[0, 0], [3, 4], [6, 0]], dtype=float)
    inst = PathTsp(xy, 0, 2, (1,))
    s = DirectState(inst, PartialSolution.of([]))
    t = apply(s, Step(1))
    # last customer: the leg to the destination is charged as well
    assert t.reward == pytest.approx(-10.0)
    assert t.next.partial == PartialSolution.of([1])


def test_neutral_keeps_state():
    inst = Knapsack.fresh([0.5], [1.0], capacity=1.0)
    s = DirectState.initial(inst)
    t = apply(s, NEUTRAL)
    assert t.next is s and t.reward == 0.0


def test_kp_reward_is_item_value():
    inst = Knapsack.fresh([0.5, 0.2], [0.9, 0.3], capacity=1.0)
    t = apply(DirectState.initial(inst), Step(0))
    assert t.reward == 0.9


def test_illegal_action():
    inst = PathTsp.tour(np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
    with pytest.raises(IllegalStep):
        apply(DirectState.initial(inst), NEUTRAL)
    with pytest.raises(IllegalStep):
        apply(DirectState(inst, PartialSolution.of([1])), Step(1))


def test_three_customer_tsp_has_six_trajectories(rng):
    inst = PathTsp.tour(rng.random((4, 2)))
    trajs = enumerate_trajectories(inst)
    assert len(trajs) == math.factorial(3)
    assert {tuple(s.index for s in t.outcome) for t in trajs} == {
        (1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)
    }
    for t in trajs:
        assert t.actions[-1] is NEUTRAL
        assert t.ret == pytest.approx(-inst.objective(t.outcome), abs=1e-12)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_best_return_matches_brute_force(problem, rng):
    for _ in range(5):
        inst = tiny_instance(problem, 4, rng)
        trajs = enumerate_trajectories(inst)
        best = max(trajs, key=lambda t: t.ret)
        opt, value = brute_force_optimum(inst)
        assert best.outcome in opt
        assert -best.ret == pytest.approx(value, abs=1e-9)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_no_dead_ends_and_termination(problem, rng):
    for _ in range(100):
        n = int(rng.integers(1, 5))
        inst = tiny_instance(problem, n, rng)
        # enumerate_trajectories raises DeadEnd on an empty action list
        for t in enumerate_trajectories(inst):
            steps = [a for a in t.actions if a is not NEUTRAL]
            assert len(steps) <= n


def test_enumeration_budget(rng):
    with pytest.raises(BudgetExceeded):
        enumerate_trajectories(PathTsp.tour(rng.random((8, 2))), node_budget=100)
