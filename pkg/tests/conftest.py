import numpy as np
import pytest

from copmdp.problems import random_instance

PROBLEMS = ["tsp", "atsp", "cvrp", "op", "kp"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def roll_random(inst, rng, max_steps=None):
    """Apply uniformly random allowed steps until none is left; return (steps, final state)."""
    steps, state = [], inst
    while state.allowed_steps() and (max_steps is None or len(steps) < max_steps):
        allowed = state.allowed_steps()
        z = allowed[int(rng.integers(len(allowed)))]
        state, _ = state.reduce(z)
        steps.append(z)
    return steps, state


def small(problem, n, rng):
    if problem == "op":
        return random_instance("op", n, rng, budget=1.5)
    return random_instance(problem, n, rng)


GRADCHECK_SIZES = {"tsp": 7, "atsp": 7, "cvrp": 6, "op": 6, "kp": 8}


def gradcheck_case(problem, seed):
    """Relative gradient errors for a tiny random model on a random state.

    ReZero scalars and graph-conv weights are drawn nonzero so that every
    parameter actually influences the loss.
    """
    from copmdp.policy import config_for, gradient_check, init_model

    rng = np.random.default_rng(seed)
    inst = random_instance(problem, GRADCHECK_SIZES[problem], rng, **({"budget": 2.0} if problem == "op" else {}))
    model = init_model(config_for(problem, d=16, heads=2, layers=2, d_ff=24), rng)
    for name, p in model.params.items():
        if "alpha" in name:
            model.params[name] = np.array(rng.normal())
        elif name.endswith("gc.W"):
            model.params[name] = rng.normal(0.0, 0.2, p.shape)
    allowed = inst.allowed_steps()
    target = [inst.step_to_action(allowed[int(rng.integers(len(allowed)))])]
    return gradient_check(model, inst.feature_matrix(), inst.action_mask(), target, inst.cost_matrix())
