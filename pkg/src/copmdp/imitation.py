"""Imitation of expert solutions: trajectory extraction, sub-path sampling, training.

Every stored solution becomes one construction trajectory. Each epoch draws a
single sub-instance from every trajectory: the tail subproblem reached after
some prefix of expert steps, optionally truncated to the next few decisions,
labelled with the expert's next step.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .bq import phi
from .core import Instance, PartialSolution, Step
from .policy import (
    AdamState,
    PolicyModel,
    adam_step,
    backward,
    config_for,
    cross_entropy,
    forward,
    init_model,
    learning_rate,
    target_distribution,
)
from .problems import PathAtsp, PathCvrp, PathTsp

MIN_SUBPATH = 4


class InfeasibleSolution(ValueError):
    pass


class TrajectoryTooShort(ValueError):
    pass


class ConfigError(ValueError):
    pass


# -- expert trajectories -----------------------------------------------------------


def _closed_tour(inst: PathTsp | PathAtsp) -> bool:
    if isinstance(inst, PathTsp):
        return bool(np.array_equal(inst.coords[inst.origin], inst.coords[inst.dest]))
    o, d = inst.origin, inst.dest
    return bool(np.array_equal(inst.cost[o], inst.cost[d]) and np.array_equal(inst.cost[:, o], inst.cost[:, d]))


def solution_to_trajectory(
    inst: Instance,
    solution: PartialSolution,
    orientation: str = "given",
) -> list[Step]:
    """Canonical construction order of a feasible solution.

    Routing tours keep their stored order unless ``orientation="reverse"``
    (only meaningful for closed tours, where both directions are solutions).
    CVRP subtours are re-ordered by ascending remaining capacity at their end,
    so the last subtour leaves the most slack; a subtour that starts away from
    the depot is tied to the origin and stays first. OP routes keep their
    order; knapsack items come in index order.
    """
    if not inst.is_feasible(solution):
        raise InfeasibleSolution("solution is not feasible for this instance")
    steps = list(solution.steps)
    if isinstance(inst, (PathTsp, PathAtsp)):
        if orientation == "reverse":
            if not _closed_tour(inst):
                raise ValueError("only closed tours can be reversed")
            steps.reverse()
        elif orientation != "given":
            raise ValueError(f"unknown orientation {orientation!r}")
        return steps
    if isinstance(inst, PathCvrp):
        return _order_subtours(inst, solution)
    return steps if inst.ordered else sorted(steps)


def _order_subtours(inst: PathCvrp, solution: PartialSolution) -> list[Step]:
    tours = inst.subtours(solution)
    fresh = inst.origin == inst.depot and inst.remaining == inst.capacity
    pinned = tours.pop(0) if tours and not fresh and not tours[0][0].via_depot else []
    ends = [inst.capacity - sum(inst.demands[s.index] for s in t) for t in tours]
    out: list[Step] = list(pinned)
    for i in sorted(range(len(tours)), key=lambda i: (ends[i], i)):
        first, *rest = tours[i]
        out.append(Step(first.index, bool(out) or not fresh))
        out.extend(Step(s.index, False) for s in rest)
    return out


def subtour_end_capacities(inst: PathCvrp, trajectory: Sequence[Step]) -> list[float]:
    """Remaining capacity at the end of each subtour of a trajectory."""
    sol = PartialSolution(tuple(trajectory))
    out, load = [], inst.remaining
    for t in inst.subtours(sol):
        if t[0].via_depot:
            load = inst.capacity
        load -= sum(float(inst.demands[s.index]) for s in t)
        out.append(load)
    return out


# -- sub-path sampling -------------------------------------------------------------


def max_subpath(inst: Instance, trajectory: Sequence[Step]) -> int:
    """Largest admissible ``n`` (token count of the sampled sub-instance)."""
    return len(trajectory) + 2 if inst.has_endpoints else len(trajectory)


def sample_subinstance(
    inst: Instance,
    trajectory: Sequence[Step],
    n: int,
    rng: np.random.Generator,
) -> tuple[Instance, list[Step]]:
    """One supervised pair (reduced instance, expert target steps).

    ``n`` counts model tokens. Path-TSP/ATSP take a window of ``n`` consecutive
    route nodes: its ends become origin and destination. Path-CVRP reduces by a
    uniformly placed expert prefix and keeps the next ``n - 2`` customers. OP
    and knapsack keep the whole reduced instance (``n`` is ignored), since
    dropping nodes would change which stops are optimal; for knapsack the
    prefix is a random subset of the expert items and every remaining expert
    item is a target.
    """
    T = len(trajectory)
    if isinstance(inst, (PathTsp, PathAtsp)):
        seq = [inst.origin, *(s.index for s in trajectory), inst.dest]
        if n < MIN_SUBPATH or n > len(seq):
            raise TrajectoryTooShort(f"need {MIN_SUBPATH} <= n <= {len(seq)}, got {n}")
        i = int(rng.integers(0, len(seq) - n + 1))
        sub = dataclasses.replace(inst, origin=seq[i], dest=seq[i + n - 1], active=tuple(seq[i + 1 : i + n - 1]))
        return sub, [Step(seq[i + 1])]
    if isinstance(inst, PathCvrp):
        m = n - 2
        if n < MIN_SUBPATH or m > T:
            raise TrajectoryTooShort(f"need {MIN_SUBPATH} <= n <= {T + 2}, got {n}")
        i = int(rng.integers(0, T - m + 1))
        state = phi(inst, PartialSolution(tuple(trajectory[:i])))
        sub = state.restrict(tuple(s.index for s in trajectory[i : i + m]))  # type: ignore[attr-defined]
        return sub, [trajectory[i]]
    if T == 0:
        raise TrajectoryTooShort("the expert takes no step")
    i = int(rng.integers(0, T))
    if inst.ordered:
        state = phi(inst, PartialSolution(tuple(trajectory[:i])))
        return state, [trajectory[i]]
    perm = rng.permutation(T)
    prefix = [trajectory[j] for j in sorted(perm[:i])]
    state = phi(inst, PartialSolution(tuple(prefix), ordered=False))
    return state, sorted(trajectory[j] for j in perm[i:])


# -- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    problem: str = "tsp"
    epochs: int = 30
    batch_size: int = 256
    lr: float = 7.5e-4
    lr_decay: float = 0.98
    decay_every: int = 50
    seed: int = 0
    d: int = 64
    heads: int = 4
    layers: int = 3
    d_ff: int = 128
    id_dim: int = 0
    min_n: int = MIN_SUBPATH
    #: upper bound on the sub-path size; 0 means the full trajectory
    max_n: int = 0
    #: "given" keeps stored tour orientation, "random" flips closed tours per sample
    orientation: str = "given"

    def validate(self) -> None:
        from .problems import PROBLEMS

        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        for name in ("epochs", "batch_size", "decay_every", "d", "heads", "layers", "d_ff"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.lr > 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError("lr must be positive and lr_decay in (0, 1]")
        if self.d % self.heads:
            raise ConfigError("d must be divisible by heads")
        if self.min_n < MIN_SUBPATH or (self.max_n and self.max_n < self.min_n):
            raise ConfigError(f"need {MIN_SUBPATH} <= min_n <= max_n")
        if self.orientation not in ("given", "random"):
            raise ConfigError(f"unknown orientation {self.orientation!r}")
        if self.id_dim < 0:
            raise ConfigError("id_dim must be non-negative")


def load_config(path: str | Path, **overrides: Any) -> TrainConfig:
    """Read a flat key/value YAML file; keyword overrides win over the file."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must be a flat mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(raw)


def make_config(values: dict[str, Any]) -> TrainConfig:
    known = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


@dataclass
class Example:
    instance: Instance
    trajectory: list[Step]


def build_examples(pairs: Sequence[tuple[Instance, PartialSolution]]) -> list[Example]:
    return [Example(inst, solution_to_trajectory(inst, sol)) for inst, sol in pairs]


def _sample(ex: Example, n: int | None, cfg: TrainConfig, rng: np.random.Generator) -> tuple[Instance, list[Step]]:
    traj = ex.trajectory
    if cfg.orientation == "random" and isinstance(ex.instance, (PathTsp, PathAtsp)) and rng.random() < 0.5:
        if _closed_tour(ex.instance):
            traj = traj[::-1]
    return sample_subinstance(ex.instance, traj, n if n is not None else 0, rng)


def batch_gradient(
    model: PolicyModel,
    samples: Sequence[tuple[Instance, list[Step]]],
) -> tuple[float, int, dict[str, np.ndarray]]:
    """Mean cross-entropy over ``samples``, correct argmax count, and its gradient.

    Samples are grouped by token count; each group is one batched pass and the
    group gradients are combined in a fixed order with weights proportional to
    group size.
    """
    groups: dict[int, list[int]] = {}
    for i, (state, _) in enumerate(samples):
        groups.setdefault(len(state.token_nodes()), []).append(i)
    total = len(samples)
    loss, correct = 0.0, 0
    grads: dict[str, np.ndarray] = {}
    for size in sorted(groups):
        idx = groups[size]
        states = [samples[i][0] for i in idx]
        feats = np.stack([s.feature_matrix() for s in states])
        masks = np.stack([s.action_mask() for s in states])
        costs = [s.cost_matrix() for s in states]
        cost = None if costs[0] is None else np.stack(costs)
        targets = [[s.step_to_action(z) for z in samples[i][1]] for s, i in zip(states, idx)]
        logp, tape = forward(model, feats, masks, cost)
        q = target_distribution(tape.mask, targets)
        w = len(idx) / total
        loss += w * cross_entropy(logp, q)
        best = np.argmax(logp, axis=1)
        correct += int(sum(b in t for b, t in zip(best, targets)))
        for k, g in backward(model, tape, q).items():
            if k in grads:
                grads[k] += w * g
            else:
                grads[k] = w * g
    return loss, correct, grads


def relative_gap(objective: float, reference: float) -> float:
    """Signed gap in minimisation form; positive means worse than the reference.

    Objectives of maximisation problems are negated values, so this is
    (cost - ref)/ref for costs and (ref - value)/ref for values.
    """
    if reference == 0:
        raise ValueError("reference objective is zero")
    return (objective - reference) / abs(reference)


def train(
    examples: Sequence[Example],
    cfg: TrainConfig,
    held_out: Sequence[tuple[Instance, float]] = (),
    log_path: str | Path | None = None,
    model: PolicyModel | None = None,
    on_epoch: Callable[[dict[str, Any]], None] | None = None,
) -> tuple[PolicyModel, list[dict[str, Any]]]:
    """Imitation training; returns the model and one metrics record per epoch.

    Deterministic for a fixed ``cfg.seed``. ``held_out`` pairs an instance with
    its reference objective; when given, each epoch reports the mean greedy gap.
    """
    from .search import greedy_rollouts

    cfg.validate()
    # an expert that takes no step (e.g. an OP budget too small to leave the depot) teaches nothing
    examples = [e for e in examples if e.trajectory]
    if not examples:
        raise ConfigError("the training set has no expert steps")
    # a zero reference (nothing collectable) has no relative gap
    held_out = [(inst, ref) for inst, ref in held_out if ref != 0]
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        mcfg = config_for(cfg.problem, id_dim=cfg.id_dim, d=cfg.d, heads=cfg.heads, layers=cfg.layers, d_ff=cfg.d_ff)
        model = init_model(mcfg, rng)
    opt = AdamState()
    routed = cfg.problem in ("tsp", "atsp", "cvrp")
    log = open(log_path, "w") if log_path else None
    history: list[dict[str, Any]] = []
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            lr = learning_rate(epoch, cfg.lr, cfg.lr_decay, cfg.decay_every)
            order = rng.permutation(len(examples))
            loss_sum, correct, seen = 0.0, 0, 0
            for start in range(0, len(order), cfg.batch_size):
                batch = [examples[i] for i in order[start : start + cfg.batch_size]]
                n = None
                if routed:
                    hi = min(max_subpath(e.instance, e.trajectory) for e in batch)
                    if cfg.max_n:
                        hi = min(hi, cfg.max_n)
                    n = int(rng.integers(min(cfg.min_n, hi), hi + 1))
                samples = [_sample(e, n, cfg, rng) for e in batch]
                loss, ok, grads = batch_gradient(model, samples)
                adam_step(model, grads, opt, lr)
                loss_sum += loss * len(batch)
                correct += ok
                seen += len(batch)
            record: dict[str, Any] = {
                "epoch": epoch + 1,
                "loss": loss_sum / seen,
                "accuracy": correct / seen,
                "lr": lr,
            }
            if held_out:
                results = greedy_rollouts(model, [inst for inst, _ in held_out])
                gaps = [relative_gap(r.objective, ref) for r, (_, ref) in zip(results, held_out)]
                record["gap"] = float(np.mean(gaps))
            record["wall_time"] = time.perf_counter() - t0
            history.append(record)
            if log:
                log.write(json.dumps(record) + "\n")
                log.flush()
            if on_epoch:
                on_epoch(record)
    finally:
        if log:
            log.close()
    return model, history


def teacher_forced_accuracy(model: PolicyModel, examples: Sequence[Example]) -> float:
    """Share of expert steps that the model ranks first along the expert trajectory."""
    from .search import policy_log_probs

    hits = total = 0
    for ex in examples:
        state = ex.instance
        remaining = list(ex.trajectory)
        while remaining:
            lp = policy_log_probs(model, [state])[0]
            targets = {state.step_to_action(z) for z in remaining} if not state.ordered else {state.step_to_action(remaining[0])}
            hits += int(np.argmax(lp)) in targets
            total += 1
            z = remaining.pop(0)
            state, _ = state.reduce(z)
    return hits / max(total, 1)
