"""Exact solvers for small instances, plus brute-force enumerators used to
cross-check them.

Ties are always broken towards the lowest node index (or lowest bitmask), so
datasets produced from these solvers are deterministic.
"""

from __future__ import annotations

import itertools
from typing import Iterator

import numba
import numpy as np

from .core import REGISTER_TOL, Instance, PartialSolution, Step
from .problems import Knapsack, PathAtsp, PathCvrp, PathOp, PathTsp


class SizeLimitExceeded(ValueError):
    pass


HELD_KARP_MAX = 22
CVRP_MAX = 12
OP_MAX = 14


@numba.njit(cache=True)
def _hk_table(dist: np.ndarray, start: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """dp[mask, j]: shortest path from ``start`` over customers ``mask`` ending at j.

    Customers are local nodes 0..k-1; ``dist`` is indexed with local ids.
    """
    size = 1 << k
    dp = np.full((size, max(k, 1)), np.inf)
    parent = np.full((size, max(k, 1)), -1, dtype=np.int8)
    for j in range(k):
        dp[1 << j, j] = dist[start, j]
    for mask in range(1, size):
        for j in range(k):
            if not (mask >> j) & 1:
                continue
            prev = mask ^ (1 << j)
            if prev == 0:
                continue
            best = np.inf
            arg = -1
            for i in range(k):
                if (prev >> i) & 1:
                    c = dp[prev, i] + dist[i, j]
                    if c < best:
                        best = c
                        arg = i
            dp[mask, j] = best
            parent[mask, j] = arg
    return dp, parent


def _close(dp: np.ndarray, dist: np.ndarray, end: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Best cost of a path over each mask that then goes to ``end``, and its last node."""
    if k == 0:
        return np.zeros(1), np.full(1, -1)
    tot = dp + dist[:k, end][None, :]
    last = np.argmin(tot, axis=1)
    cost = tot[np.arange(len(tot)), last]
    return cost, last


def _backtrack(parent: np.ndarray, mask: int, last: int) -> list[int]:
    order = []
    while mask and last >= 0:
        order.append(last)
        prev = int(parent[mask, last])
        mask ^= 1 << last
        last = prev
    return order[::-1]


def _local_matrix(inst: Instance, nodes: list[int]) -> np.ndarray:
    """Distance matrix over ``nodes`` using the instance's own metric."""
    if isinstance(inst, PathAtsp):
        return inst.cost[np.ix_(nodes, nodes)].astype(np.float64)
    xy = inst.coords[nodes]  # type: ignore[attr-defined]
    return np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))


def held_karp_matrix(dist: np.ndarray, origin: int, dest: int, customers: list[int]) -> tuple[list[int], float]:
    """Shortest origin -> dest Hamiltonian path over ``customers`` for a given matrix.

    Returns the customer order and the full path length (including the final
    leg to ``dest``; for no customers that is just origin -> dest).
    """
    k = len(customers)
    if k > HELD_KARP_MAX:
        raise SizeLimitExceeded(f"{k} customers exceeds the Held-Karp limit of {HELD_KARP_MAX}")
    nodes = list(customers) + [origin, dest]
    local = np.ascontiguousarray(np.asarray(dist, dtype=np.float64)[np.ix_(nodes, nodes)])
    if k == 0:
        return [], float(local[k, k + 1])
    dp, parent = _hk_table(local, k, k)
    cost, last = _close(dp, local, k + 1, k)
    full = (1 << k) - 1
    order = _backtrack(parent, full, int(last[full]))
    return [customers[i] for i in order], float(cost[full])


def held_karp_path(inst: PathTsp | PathAtsp) -> tuple[PartialSolution, float]:
    """Optimal path for a path-(A)TSP instance and its length."""
    nodes = [inst.origin, inst.dest, *inst.active]
    local = _local_matrix(inst, nodes)
    order, cost = held_karp_matrix(local, 0, 1, list(range(2, len(nodes))))
    return PartialSolution.of([nodes[i] for i in order]), cost


# -- knapsack -------------------------------------------------------------------------


def kp_exact(inst: Knapsack) -> tuple[PartialSolution, float]:
    """Optimal item set by depth-first branch and bound on the real weights.

    Items are explored by decreasing value density; the bound is the
    fractional (LP) relaxation of the remaining items.
    """
    items = sorted(inst.items, key=lambda i: (-inst.values[i] / inst.weights[i], i))
    w = np.array([inst.weights[i] for i in items])
    v = np.array([inst.values[i] for i in items])
    idx, val, cap = _kp_bnb(w, v, inst.capacity + REGISTER_TOL)
    picked = [items[i] for i in range(len(items)) if idx[i]]
    return PartialSolution.of(picked, ordered=False), float(val)


@numba.njit(cache=True)
def _kp_bnb(w: np.ndarray, v: np.ndarray, capacity: float) -> tuple[np.ndarray, float, float]:
    n = len(w)
    best = np.zeros(n, dtype=np.bool_)
    best_val = 0.0
    take = np.zeros(n, dtype=np.bool_)
    # explicit stack of (depth, phase); phase 0 = try include, 1 = try exclude, 2 = done
    phase = np.zeros(n + 1, dtype=np.int64)
    depth = 0
    cur_w = 0.0
    cur_v = 0.0
    while depth >= 0:
        if depth == n:
            if cur_v > best_val:
                best_val = cur_v
                best[:] = take
            depth -= 1
            continue
        p = phase[depth]
        if p == 0:
            phase[depth] = 1
            # bound: greedy fractional fill from depth
            room = capacity - cur_w
            bound = cur_v
            for i in range(depth, n):
                if w[i] <= room:
                    room -= w[i]
                    bound += v[i]
                else:
                    bound += v[i] * room / w[i]
                    break
            if bound <= best_val:
                phase[depth] = 0
                depth -= 1
                continue
            if cur_w + w[depth] <= capacity:
                take[depth] = True
                cur_w += w[depth]
                cur_v += v[depth]
                phase[depth + 1] = 0
                depth += 1
                continue
        elif p == 1:
            phase[depth] = 2
            if take[depth]:
                take[depth] = False
                cur_w -= w[depth]
                cur_v -= v[depth]
            phase[depth + 1] = 0
            depth += 1
            continue
        else:
            phase[depth] = 0
            if take[depth]:
                take[depth] = False
                cur_w -= w[depth]
                cur_v -= v[depth]
            depth -= 1
            continue
    return best, best_val, capacity


def kp_dp(inst: Knapsack, grid: float = 1e-4) -> tuple[PartialSolution, float]:
    """Table DP on weights rounded up to ``grid``; feasible, optimal up to the grid."""
    items = list(inst.items)
    wq = np.ceil(np.array([inst.weights[i] for i in items]) / grid - 1e-9).astype(np.int64)
    cap = int(np.floor(inst.capacity / grid + 1e-9))
    vals = np.array([inst.values[i] for i in items])
    table = np.zeros((len(items) + 1, cap + 1))
    for r, (wi, vi) in enumerate(zip(wq, vals), start=1):
        table[r] = table[r - 1]
        if wi <= cap:
            cand = table[r - 1, : cap + 1 - wi] + vi
            table[r, wi:] = np.maximum(table[r - 1, wi:], cand)
    picked, c = [], cap
    for r in range(len(items), 0, -1):
        if table[r, c] != table[r - 1, c]:
            picked.append(items[r - 1])
            c -= wq[r - 1]
    return PartialSolution.of(sorted(picked), ordered=False), float(table[-1, cap])


# -- CVRP -------------------------------------------------------------------------------


def cvrp_exact(inst: PathCvrp) -> tuple[PartialSolution, float]:
    """Optimal path-CVRP solution by DP over capacity-feasible set partitions.

    The first segment leaves from the origin with the remaining capacity and
    ends at the depot; every later subtour is a depot tour with full capacity.
    Each segment is routed optimally by Held-Karp over all subsets at once.
    """
    cust = list(inst.active)
    k = len(cust)
    if k > CVRP_MAX:
        raise SizeLimitExceeded(f"{k} customers exceeds the CVRP oracle limit of {CVRP_MAX}")
    if k == 0:
        return PartialSolution.empty(), 0.0
    nodes = cust + [inst.origin, inst.depot]
    local = np.ascontiguousarray(_local_matrix(inst, nodes))
    o, dep = k, k + 1
    dp_dep, par_dep = _hk_table(local, dep, k)
    dp_org, par_org = _hk_table(local, o, k)
    tour, tour_last = _close(dp_dep, local, dep, k)
    first, first_last = _close(dp_org, local, dep, k)
    tour[0] = 0.0
    first[0] = local[o, dep]
    dem = np.array([inst.demands[c] for c in cust], dtype=np.int64)
    load = np.array([dem[[i for i in range(k) if m >> i & 1]].sum() for m in range(1 << k)])
    best, choice = _partition_dp(tour, load, inst.capacity, k)
    full = (1 << k) - 1
    total, s1 = np.inf, -1
    for m in range(1 << k):
        if load[m] <= inst.remaining + REGISTER_TOL:
            c = first[m] + best[full ^ m]
            if c < total - 1e-12:
                total, s1 = c, m
    segments: list[list[int]] = []
    if s1:
        segments.append(_backtrack(par_org, s1, int(first_last[s1])))
    rest = full ^ s1
    while rest:
        blk = int(choice[rest])
        segments.append(_backtrack(par_dep, blk, int(tour_last[blk])))
        rest ^= blk
    steps: list[Step] = []
    for n_seg, seg in enumerate(segments):
        via = n_seg > 0 or s1 == 0
        if not steps and inst.origin == inst.depot and inst.remaining >= inst.capacity:
            # leaving a full vehicle at the depot: the direct move is the same route
            via = False
        for pos, i in enumerate(seg):
            steps.append(Step(cust[i], via and pos == 0))
    sol = PartialSolution(tuple(steps))
    return sol, inst.objective(sol)


@numba.njit(cache=True)
def _partition_dp(tour: np.ndarray, load: np.ndarray, capacity: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    size = 1 << k
    best = np.full(size, np.inf)
    choice = np.zeros(size, dtype=np.int64)
    best[0] = 0.0
    for mask in range(1, size):
        low = mask & -mask
        rest = mask ^ low
        sub = rest
        while True:
            blk = sub | low
            if load[blk] <= capacity + 1e-9:
                c = tour[blk] + best[mask ^ blk]
                if c < best[mask]:
                    best[mask] = c
                    choice[mask] = blk
            if sub == 0:
                break
            sub = (sub - 1) & rest
    return best, choice


# -- OP ---------------------------------------------------------------------------------


def op_exact(inst: PathOp) -> tuple[PartialSolution, float]:
    """Optimal path-OP solution: best prize over all node subsets whose shortest
    origin -> subset -> destination path fits the budget."""
    cand = list(inst.active)
    k = len(cand)
    if k > OP_MAX:
        raise SizeLimitExceeded(f"{k} nodes exceeds the OP oracle limit of {OP_MAX}")
    nodes = cand + [inst.origin, inst.dest]
    local = np.ascontiguousarray(_local_matrix(inst, nodes))
    dp, par = _hk_table(local, k, k)
    length, last = _close(dp, local, k + 1, k)
    length[0] = local[k, k + 1]
    prize = np.array([inst.prizes[c] for c in cand])
    best_m, best_p, best_len = 0, 0.0, length[0]
    for m in range(1, 1 << k):
        if length[m] > inst.budget + REGISTER_TOL:
            continue
        p = float(sum(prize[i] for i in range(k) if m >> i & 1))
        if p > best_p or (p == best_p and length[m] < best_len):
            best_m, best_p, best_len = m, p, length[m]
    order = _backtrack(par, best_m, int(last[best_m])) if best_m else []
    sol = PartialSolution.of([cand[i] for i in order])
    return sol, inst.objective(sol)


def solve_exact(inst: Instance) -> tuple[PartialSolution, float]:
    """Dispatch to the exact oracle of the instance's problem; returns (solution, objective)."""
    if isinstance(inst, (PathTsp, PathAtsp)):
        sol, _ = held_karp_path(inst)
        return sol, inst.objective(sol)
    if isinstance(inst, PathCvrp):
        return cvrp_exact(inst)
    if isinstance(inst, PathOp):
        return op_exact(inst)
    if isinstance(inst, Knapsack):
        sol, _ = kp_exact(inst)
        return sol, inst.objective(sol)
    raise TypeError(f"no exact oracle for {type(inst).__name__}")


# -- brute force ------------------------------------------------------------------------


def brute_force_solutions(inst: Instance, limit: int = 2_000_000) -> Iterator[PartialSolution]:
    """Every feasible solution, by enumerating candidate step sequences/sets.

    Independent of the masks and of ``reduce``: candidates are checked with
    the instance's from-scratch feasibility predicate only.
    """
    universe = inst.step_universe()
    seen = 0
    if not inst.ordered:
        for r in range(len(universe) + 1):
            for combo in itertools.combinations(universe, r):
                seen += 1
                if seen > limit:
                    raise SizeLimitExceeded("brute force enumeration limit reached")
                x = PartialSolution(tuple(combo), ordered=False)
                if inst.is_feasible(x):
                    yield x
        return
    variants: dict[int, list[Step]] = {}
    for z in universe:
        variants.setdefault(z.index, []).append(z)
    for r in range(len(variants) + 1):
        for nodes in itertools.permutations(sorted(variants), r):
            for seq in itertools.product(*(variants[i] for i in nodes)):
                seen += 1
                if seen > limit:
                    raise SizeLimitExceeded("brute force enumeration limit reached")
                x = PartialSolution(tuple(seq))
                if inst.is_feasible(x):
                    yield x


def brute_force_optimum(inst: Instance) -> tuple[set[PartialSolution], float]:
    """All minimisers (within 1e-9) of the objective over the feasible set."""
    sols = list(brute_force_solutions(inst))
    vals = [inst.objective(x) for x in sols]
    best = min(vals)
    return {x for x, v in zip(sols, vals) if v <= best + 1e-9}, best


def tsp_permutation_bruteforce(dist: np.ndarray, origin: int, dest: int, customers: list[int]) -> float:
    """Minimum path length over all customer permutations (vectorised)."""
    if not customers:
        return float(dist[origin, dest])
    perms = np.array(list(itertools.permutations(customers)))
    cost = dist[origin, perms[:, 0]] + dist[perms[:, -1], dest]
    cost += dist[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    return float(cost.min())


def kp_subset_bruteforce(inst: Knapsack) -> float:
    items = list(inst.items)
    n = len(items)
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)[None, :]) & 1
    w = bits @ inst.weights[items]
    v = bits @ inst.values[items]
    return float(v[w <= inst.capacity + REGISTER_TOL].max())


def cvrp_partition_bruteforce(inst: PathCvrp) -> float:
    """Minimum cost over all ordered set partitions, each block routed by
    permutation brute force."""
    cust = list(inst.active)
    k = len(cust)
    if k == 0:
        return 0.0
    nodes = cust + [inst.origin, inst.depot]
    d = _local_matrix(inst, nodes)
    o, dep = k, k + 1
    dem = [int(inst.demands[c]) for c in cust]
    tour_cache: dict[tuple[int, int], float] = {}

    def block_cost(start: int, block: tuple[int, ...]) -> float:
        key = (start, sum(1 << i for i in block))
        if key not in tour_cache:
            tour_cache[key] = tsp_permutation_bruteforce(d, start, dep, list(block))
        return tour_cache[key]

    best = np.inf
    for first_mask in range(1 << k):
        first = tuple(i for i in range(k) if first_mask >> i & 1)
        if sum(dem[i] for i in first) > inst.remaining + REGISTER_TOL:
            continue
        head = block_cost(o, first)
        rest = [i for i in range(k) if not first_mask >> i & 1]
        for part in _set_partitions(rest):
            if any(sum(dem[i] for i in b) > inst.capacity for b in part):
                continue
            best = min(best, head + sum(block_cost(dep, tuple(b)) for b in part))
    return float(best)


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first], *part]
        for i in range(len(part)):
            yield part[:i] + [[first, *part[i]]] + part[i + 1:]


def op_exhaustive(inst: PathOp) -> float:
    """Best prize by depth-first enumeration of every budget-feasible route."""
    best = 0.0
    d = {(a, b): inst.dist(a, b) for a in [inst.origin, *inst.active] for b in [*inst.active, inst.dest]}

    def dfs(at: int, used: float, prize: float, left: tuple[int, ...]) -> None:
        nonlocal best
        if used + d[(at, inst.dest)] <= inst.budget + REGISTER_TOL:
            best = max(best, prize)
        else:
            return
        for i in left:
            dfs(i, used + d[(at, i)], prize + float(inst.prizes[i]), tuple(j for j in left if j != i))

    dfs(inst.origin, 0.0, 0.0, inst.active)
    return best
