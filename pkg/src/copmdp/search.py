"""Decoding with a trained policy: greedy rollout, beam search, k-NN restriction.

All decoders act on reduced instances and let the environment stop a
trajectory once no step is allowed. Model calls go through ``knn_restrict``
when ``knn`` is given, so the policy may see fewer nodes than the state holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import Instance, PartialSolution, Step
from .policy import PolicyModel, forward

DEFAULT_KNN = 250

#: a trained model, or any function mapping states to flattened action log-probabilities
Scorer = Union[PolicyModel, Callable[[list[Instance]], list[np.ndarray]]]


@dataclass(frozen=True)
class SearchResult:
    solution: PartialSolution
    objective: float
    #: cumulative log-probability of the chosen actions
    score: float = 0.0


def _node_distance(inst: Instance, a: int, b: int) -> float:
    if hasattr(inst, "cost"):
        return float(inst.cost[a, b])  # type: ignore[attr-defined]
    return inst.dist(a, b)  # type: ignore[attr-defined]


def knn_restrict(inst: Instance, k: int | None) -> Instance:
    """The model's view of ``inst``: only the ``k`` allowed nodes nearest the origin.

    Distances are Euclidean, or the outgoing arc cost for ATSP. Only nodes with
    at least one allowed action compete for the ``k`` slots (ties by index);
    origin and destination/depot tokens are always kept. The environment state
    is untouched, and when at most ``k`` nodes are active the instance itself
    is returned, which makes large ``k`` an exact no-op. Knapsack has no
    geometry, so it is never restricted.
    """
    if k is None or not inst.has_endpoints:
        return inst
    if k < 1:
        raise ValueError("k must be at least 1")
    active = inst.active  # type: ignore[attr-defined]
    if len(active) <= k:
        return inst
    allowed = sorted({s.index for s in inst.allowed_steps()})
    origin = inst.origin  # type: ignore[attr-defined]
    allowed.sort(key=lambda j: (_node_distance(inst, origin, j), j))
    return inst.restrict(tuple(allowed[:k]))  # type: ignore[attr-defined]


def policy_log_probs(model: Scorer, views: list[Instance]) -> list[np.ndarray]:
    """Flattened action log-probabilities for several states.

    States with equal token counts share one batched forward pass; results
    come back in input order. A plain callable is used as is.
    """
    if not isinstance(model, PolicyModel):
        return list(model(views))
    out: list[np.ndarray | None] = [None] * len(views)
    groups: dict[int, list[int]] = {}
    for i, v in enumerate(views):
        groups.setdefault(len(v.token_nodes()), []).append(i)
    for idx in groups.values():
        feats = np.stack([views[i].feature_matrix() for i in idx])
        masks = np.stack([views[i].action_mask() for i in idx])
        costs = [views[i].cost_matrix() for i in idx]
        cost = None if costs[0] is None else np.stack(costs)
        logp, _ = forward(model, feats, masks, cost)
        for row, i in enumerate(idx):
            out[i] = logp[row]
    return out  # type: ignore[return-value]


def greedy_rollouts(model: Scorer, insts: list[Instance], knn: int | None = None) -> list[SearchResult]:
    """Greedy decoding of many instances in lockstep (batched by token count)."""
    states = list(insts)
    steps: list[list[Step]] = [[] for _ in insts]
    scores = [0.0] * len(insts)
    live = [i for i, s in enumerate(states) if s.allowed_steps()]
    while live:
        views = [knn_restrict(states[i], knn) for i in live]
        logps = policy_log_probs(model, views)
        nxt = []
        for i, view, lp in zip(live, views, logps):
            a = int(np.argmax(lp))  # first maximum, i.e. lowest action index on ties
            z = view.action_to_step(a)
            states[i], _ = states[i].reduce(z)
            steps[i].append(z)
            scores[i] += float(lp[a])
            if states[i].allowed_steps():
                nxt.append(i)
        live = nxt
    out = []
    for inst, st, sc in zip(insts, steps, scores):
        sol = PartialSolution(tuple(st), inst.ordered)
        out.append(SearchResult(sol, inst.objective(sol), sc))
    return out


def greedy_rollout(model: Scorer, inst: Instance, knn: int | None = None) -> SearchResult:
    return greedy_rollouts(model, [inst], knn)[0]


@dataclass(frozen=True)
class _Beam:
    state: Instance
    steps: tuple[Step, ...]
    score: float


def beam_search(
    model: Scorer,
    inst: Instance,
    width: int,
    knn: int | None = None,
    select: str = "objective",
) -> SearchResult:
    """Keep the ``width`` best partial states by cumulative log-probability.

    Candidates are ranked by cumulative score, then by the log-probability of
    the last action, then by parent rank and action index, so ``width=1``
    follows exactly the greedy path. States with no allowed step are parked
    in a completed pool. The answer is the completed state with the best
    objective (``select="objective"``) or the highest score (``"score"``).
    """
    if width < 1:
        raise ValueError("beam width must be at least 1")
    if select not in ("objective", "score"):
        raise ValueError(f"unknown selection rule {select!r}")
    live = [_Beam(inst, (), 0.0)]
    done: list[tuple[PartialSolution, float, float, int]] = []

    def park(b: _Beam) -> None:
        sol = PartialSolution(b.steps, inst.ordered)
        done.append((sol, inst.objective(sol), b.score, len(done)))

    if not inst.allowed_steps():
        park(live[0])
        live = []
    while live:
        views = [knn_restrict(b.state, knn) for b in live]
        logps = policy_log_probs(model, views)
        cands = []
        for rank, (b, view, lp) in enumerate(zip(live, views, logps)):
            for a in np.flatnonzero(np.isfinite(lp)):
                s = b.score + float(lp[a])
                cands.append((-s, -float(lp[a]), rank, int(a), b, view))
        cands.sort(key=lambda c: c[:4])
        nxt = []
        for neg_s, _, _, a, b, view in cands[:width]:
            z = view.action_to_step(a)
            state, _ = b.state.reduce(z)
            child = _Beam(state, b.steps + (z,), -neg_s)
            if state.allowed_steps():
                nxt.append(child)
            else:
                park(child)
        live = nxt

    if select == "objective":
        best = min(done, key=lambda d: (d[1], -d[2], d[3]))
    else:
        best = min(done, key=lambda d: (-d[2], d[1], d[3]))
    return SearchResult(best[0], best[1], best[2])
