"""Randomised verification suites for the two MDP formulations.

``bisimulation_suite`` checks the commutation diagram on random
(instance, partial solution, step) triples. ``soundness_suite`` checks, on
tiny instances, that exhaustive direct-MDP trajectories reproduce the
brute-forced feasible set and its minimisers, and that the quotiented MDP
replays policies exactly like the direct one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bq, direct
from .core import Instance, PartialSolution, Step
from .oracles import brute_force_solutions
from .problems import random_instance

TIE_TOL = 1e-9
PROBLEM_NAMES = ("tsp", "atsp", "cvrp", "op", "kp")


@dataclass
class SuiteReport:
    name: str
    problem: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}[{self.problem}] {self.checked} cases, {self.seconds:.1f}s"


def tiny_instance(problem: str, n: int, rng: np.random.Generator) -> Instance:
    """Small random instance with settings that keep the interesting cases reachable."""
    if problem == "cvrp":
        return random_instance("cvrp", n, rng, capacity=int(rng.integers(9, 19)))
    if problem == "op":
        return random_instance("op", n, rng, budget=float(rng.uniform(0.5, 2.5)))
    if problem == "kp":
        return random_instance("kp", n, rng, capacity=float(rng.uniform(0.3, n / 2)))
    if problem == "tsp" and rng.random() < 0.5:
        # open path between two distinct points
        xy = rng.random((n + 2, 2))
        from .problems import PathTsp

        return PathTsp(xy, 0, n + 1, tuple(range(1, n + 1)))
    return random_instance(problem, n + 1, rng)


def random_prefix(inst: Instance, rng: np.random.Generator, length: int) -> PartialSolution:
    """Up to ``length`` uniformly chosen allowed steps from the fresh instance."""
    state, steps = inst, []
    for _ in range(length):
        allowed = state.allowed_steps()
        if not allowed:
            break
        z = allowed[int(rng.integers(len(allowed)))]
        state, _ = state.reduce(z)
        steps.append(z)
    return PartialSolution(tuple(steps), inst.ordered)


def bisimulation_suite(problem: str, count: int = 1000, seed: int = 0, max_n: int = 8) -> SuiteReport:
    """``count`` random triples; the step is drawn from the whole step universe,
    so disallowed steps exercise the guard leg too."""
    rep = SuiteReport("bisimulation", problem)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    while rep.checked < count:
        inst = tiny_instance(problem, int(rng.integers(1, max_n + 1)), rng)
        x = random_prefix(inst, rng, int(rng.integers(0, max_n + 1)))
        universe = inst.step_universe()
        if not universe:
            # e.g. a knapsack whose items are all too heavy: no triple to draw
            continue
        z = universe[int(rng.integers(len(universe)))]
        res = bq.check_bisimulation(inst, x, z)
        if not res.ok:
            rep.failures.append(f"case {rep.checked}: leg {res.leg}: {res.detail}")
        rep.checked += 1
    rep.seconds = time.perf_counter() - t0
    return rep


def _fixed_policies() -> list[Callable[[Instance], Step]]:
    """Deterministic reduced-state policies used for the replay check."""

    def first(s: Instance) -> Step:
        return s.allowed_steps()[0]

    def last(s: Instance) -> Step:
        return s.allowed_steps()[-1]

    def hashed(s: Instance) -> Step:
        allowed = s.allowed_steps()
        key = hash(s.canonical()[0]) ^ len(allowed)
        return allowed[key % len(allowed)]

    return [first, last, hashed]


def soundness_suite(problem: str, count: int = 100, seed: int = 0, max_n: int | None = None) -> SuiteReport:
    rep = SuiteReport("soundness", problem)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if max_n is None:
        # CVRP trajectories also branch on the depot flag, so it gets fewer customers
        max_n = 5 if problem == "cvrp" else 7
    for k in range(count):
        inst = tiny_instance(problem, int(rng.integers(1, max_n + 1)), rng)
        rep.checked += 1
        err = soundness_case(inst)
        if err:
            rep.failures.append(f"case {k}: {err}")
    rep.seconds = time.perf_counter() - t0
    return rep


def soundness_case(inst: Instance) -> str | None:
    """First violated property on one instance, or None."""
    trajs = direct.enumerate_trajectories(inst)
    outcomes = [t.outcome for t in trajs]
    feasible = set(brute_force_solutions(inst))
    if set(outcomes) != feasible:
        return f"outcomes differ from feasible set ({len(set(outcomes))} vs {len(feasible)})"
    for t in trajs:
        if abs(t.ret + inst.objective(t.outcome)) > TIE_TOL:
            return f"return {t.ret} != -f(outcome) {-inst.objective(t.outcome)}"
    best_ret = max(t.ret for t in trajs)
    argmax = {t.outcome for t in trajs if t.ret >= best_ret - TIE_TOL}
    values = {x: inst.objective(x) for x in feasible}
    best = min(values.values())
    argmin = {x for x, v in values.items() if v <= best + TIE_TOL}
    if argmax != argmin:
        return "max-return outcomes differ from brute-force minimisers"
    for policy in _fixed_policies():
        a = bq.rollout(inst, policy)
        b = direct.rollout(inst, bq.lifted_policy(inst, policy))
        if a.actions != b.actions:
            return f"action sequences differ under {policy.__name__}"
        if any(abs(r1 - r2) > TIE_TOL for r1, r2 in zip(a.rewards, b.rewards)):
            return f"reward sequences differ under {policy.__name__}"
    return None
