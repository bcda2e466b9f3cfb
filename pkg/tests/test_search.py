import numpy as np
import pytest

from copmdp.direct import enumerate_trajectories
from copmdp.oracles import brute_force_optimum
from copmdp.policy import config_for, init_model
from copmdp.problems import PathTsp
from copmdp.search import (
    DEFAULT_KNN,
    beam_search,
    greedy_rollout,
    greedy_rollouts,
    knn_restrict,
    policy_log_probs,
)

from conftest import PROBLEMS, small

SMALL = dict(d=16, heads=2, layers=2, d_ff=24)


def untrained(problem, seed=0):
    rng = np.random.default_rng(seed)
    model = init_model(config_for(problem, **SMALL), rng)
    # nonzero residual scalars so the attention layers take part
    for name in model.params:
        if "alpha" in name:
            model.params[name] = np.array(rng.normal())
        elif name.endswith("gc.W"):
            model.params[name] = rng.normal(0, 0.2, model.params[name].shape)
    return model


def tabular_oracle(views):
    """Scores every allowed step by the best return reachable after taking it."""
    out = []
    for v in views:
        best = {}
        for t in enumerate_trajectories(v):
            first = t.actions[0]
            if hasattr(first, "index"):
                a = v.step_to_action(first)
                best[a] = max(best.get(a, -np.inf), t.ret)
        lp = np.full(v.action_mask().size, -np.inf)
        top = max(best.values())
        for a, r in best.items():
            lp[a] = r - top
        out.append(lp)
    return out


def test_one_customer_path():
    inst = PathTsp(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]), 0, 2, (1,))
    for seed in range(3):
        res = greedy_rollout(untrained("tsp", seed), inst)
        assert [s.index for s in res.solution] == [1]
        assert res.objective == pytest.approx(2 * np.sqrt(2))
        assert res.score == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_greedy_outcomes_are_feasible(problem, rng):
    model = untrained(problem)
    insts = [small(problem, int(rng.integers(3, 12)), rng) for _ in range(100)]
    for inst, res in zip(insts, greedy_rollouts(model, insts)):
        assert inst.is_feasible(res.solution)
        assert res.objective == inst.objective(res.solution)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_batched_greedy_matches_single(problem, rng):
    model = untrained(problem)
    insts = [small(problem, int(rng.integers(3, 8)), rng) for _ in range(10)]
    for inst, res in zip(insts, greedy_rollouts(model, insts)):
        one = greedy_rollout(model, inst)
        assert one.solution == res.solution and one.score == pytest.approx(res.score, abs=1e-12)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_tabular_oracle_policy_is_optimal(problem, rng):
    for _ in range(3):
        inst = small(problem, 6 if problem != "cvrp" else 5, rng)
        _, best = brute_force_optimum(inst)
        res = greedy_rollout(tabular_oracle, inst)
        assert res.objective == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_width_one_beam_is_greedy(problem, rng):
    model = untrained(problem)
    for _ in range(5):
        inst = small(problem, 7, rng)
        g = greedy_rollout(model, inst)
        b = beam_search(model, inst, 1)
        assert b.solution.steps == g.solution.steps
        assert b.score == pytest.approx(g.score, abs=1e-12)


@pytest.mark.parametrize("problem", PROBLEMS)
def test_exhaustive_beam_finds_optimum(problem, rng):
    model = untrained(problem)
    for _ in range(3):
        inst = small(problem, 5, rng)
        width = len(enumerate_trajectories(inst))
        _, best = brute_force_optimum(inst)
        assert beam_search(model, inst, width).objective == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("problem", ["tsp", "cvrp", "op"])
def test_beam_not_worse_than_greedy_on_average(problem, rng):
    model = untrained(problem)
    insts = [small(problem, 7, rng) for _ in range(20)]
    greedy = np.mean([r.objective for r in greedy_rollouts(model, insts)])
    beam = np.mean([beam_search(model, i, 8).objective for i in insts])
    assert beam <= greedy + 1e-12


def test_beam_scores_never_increase(rng):
    model = untrained("cvrp")
    inst = small("cvrp", 7, rng)
    res = beam_search(model, inst, 4, select="score")
    state, total, prev = inst, 0.0, 0.0
    for z in res.solution:
        lp = policy_log_probs(model, [state])[0]
        total += lp[state.step_to_action(z)]
        assert total <= prev + 1e-15
        prev = total
        state, _ = state.reduce(z)
    assert total == pytest.approx(res.score, abs=1e-12)


def test_beam_argument_checks(rng):
    model = untrained("tsp")
    inst = small("tsp", 4, rng)
    with pytest.raises(ValueError):
        beam_search(model, inst, 0)
    with pytest.raises(ValueError):
        beam_search(model, inst, 2, select="longest")


@pytest.mark.parametrize("problem", PROBLEMS)
def test_large_k_is_a_no_op(problem, rng):
    model = untrained(problem)
    insts = [small(problem, 9, rng) for _ in range(10)]
    plain = greedy_rollouts(model, insts)
    for k in (9, 10, DEFAULT_KNN):
        knn = greedy_rollouts(model, insts, knn=k)
        assert [r.solution for r in knn] == [r.solution for r in plain]
        assert [r.score for r in knn] == [r.score for r in plain]
        assert knn_restrict(insts[0], k) is insts[0]


@pytest.mark.parametrize("problem", ["tsp", "atsp", "cvrp", "op"])
def test_restricted_rollouts_stay_feasible(problem, rng):
    model = untrained(problem)
    insts = [small(problem, 12, rng) for _ in range(50)]
    for inst, res in zip(insts, greedy_rollouts(model, insts, knn=3)):
        assert inst.is_feasible(res.solution)
    for inst in insts[:5]:
        assert inst.is_feasible(beam_search(model, inst, 3, knn=4).solution)


def test_restriction_keeps_nearest_allowed_nodes():
    xy = np.array([[0, 0], [5, 5], [1, 0], [3, 0], [2, 0], [4, 0]], dtype=float)
    inst = PathTsp(xy, 0, 1, (2, 3, 4, 5))
    view = knn_restrict(inst, 2)
    assert view.active == (2, 4) and view.origin == 0 and view.dest == 1
    with pytest.raises(ValueError):
        knn_restrict(inst, 0)


def test_knapsack_is_never_restricted(rng):
    inst = small("kp", 10, rng)
    assert knn_restrict(inst, 2) is inst
