"""Exact oracles for tiny instances: the dynamic program and the offline bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calrm.demand import DemandModel, StageProbabilities, derive_probabilities
from calrm.errors import EnumerationTooLarge, StateSpaceTooLarge, ValidationError
from calrm.instance import NetworkInstance

DEFAULT_STATE_CAP = 50_000_000
DEFAULT_PATH_CAP = 1_000_000


@dataclass
class DPResult:
    opt: float
    states: int
    table: np.ndarray | None = None  # (K, T, n_capacity_states, T) when requested
    strides: np.ndarray | None = None


def _capacity_index(capacities: np.ndarray):
    radix = capacities.astype(np.int64) + 1
    strides = np.ones_like(radix)
    for i in range(1, radix.size):
        strides[i] = strides[i - 1] * radix[i - 1]
    n = int(np.prod(radix))
    # y[s, i]: remaining capacity of resource i in state s
    y = (np.arange(n)[:, None] // strides[None, :]) % radix[None, :]
    return n, strides, y


def solve_dp(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
    keep_table: bool = False,
) -> DPResult:
    """Backward induction over (k, t) with remaining capacity as a mixed-radix index."""
    instance.check_compatible(model)
    probs = derive_probabilities(model) if probs is None else probs
    K, T, J = model.K, model.T, instance.n_products
    caps = instance.capacities
    n_y = int(np.prod(caps.astype(object) + 1))
    required = K * T * T * n_y
    if required > state_cap:
        raise StateSpaceTooLarge(required, state_cap)
    n_y, strides, y = _capacity_index(caps)
    a = instance.usage
    f = instance.revenues
    lam = instance.arrivals
    # per product: which states can accept, and the state after accepting
    feasible = [np.all(y >= a[:, j][None, :], axis=1) for j in range(J)]
    after = [np.arange(n_y) - int(a[:, j] @ strides) for j in range(J)]
    table = np.zeros((K, T, n_y, T)) if keep_table else None
    next_stage = np.zeros((n_y, T))  # J_1^{k+1}(y, q), zero beyond the horizon
    theta = probs.survival
    for k in range(K - 1, -1, -1):
        nxt = np.zeros((n_y, T))  # J_{t+1}^k(y, q)
        for t in range(T - 1, -1, -1):
            th = theta[k, t]  # (T,) over q
            cont = th[None, :] * nxt + (1.0 - th[None, :]) * next_stage[:, t][:, None]
            val = np.zeros((n_y, T))
            for j in range(J):
                if lam[k, t, j] == 0:
                    continue
                best = cont.copy()
                ok = feasible[j]
                acc = f[j] + cont[after[j][ok]]
                best[ok] = np.maximum(best[ok], acc)
                val += lam[k, t, j] * best
            nxt = val
            if keep_table:
                table[k, t] = val
        next_stage = nxt
    start = int(caps @ strides)
    opt = float(next_stage[start, model.initial_prev_demand - 1])
    return DPResult(opt=opt, states=required, table=table, strides=strides)


# ------------------------------------------------------------------ offline


class HindsightSolver:
    """Max-revenue acceptance of known request counts under capacities.

    Depth-first branch and bound over products in descending revenue order.
    The bound at a node is the tightest single-resource relaxation: items not
    using resource i are all taken, the rest fill y_i greedily by revenue.
    """

    def __init__(self, instance: NetworkInstance):
        real = instance.real_products()
        order = real[np.argsort(-instance.revenues[real], kind="stable")]
        self.order = order
        self.f = instance.revenues[order]
        self.a = instance.usage[:, order].astype(bool)
        self.caps = tuple(int(c) for c in instance.capacities)
        self.J = instance.n_products
        self._memo: dict = {}

    def _bound(self, r: int, counts, y) -> float:
        best = math.inf
        rest = [(counts[j], self.f[j], self.a[:, j]) for j in range(r, len(self.order)) if counts[j]]
        total = sum(n * f for n, f, _ in rest)
        for i, yi in enumerate(y):
            room = yi
            val = total
            for n, f, use in rest:
                if use[i]:
                    take = min(n, room)
                    val -= (n - take) * f
                    room -= take
            best = min(best, val)
        return best

    def solve_sorted(self, counts: tuple[int, ...]) -> float:
        if counts in self._memo:
            return self._memo[counts]
        best = [0.0]
        nprod = len(self.order)

        def dfs(r, y, acc):
            if acc > best[0]:
                best[0] = acc
            if r == nprod:
                return
            if acc + self._bound(r, counts, y) <= best[0] + 1e-12:
                return
            use = self.a[:, r]
            hi = counts[r]
            for i in np.flatnonzero(use):
                hi = min(hi, y[i])
            for z in range(hi, -1, -1):
                y2 = tuple(yi - z if use[i] else yi for i, yi in enumerate(y))
                dfs(r + 1, y2, acc + z * self.f[r])

        dfs(0, self.caps, 0.0)
        self._memo[counts] = best[0]
        return best[0]

    def solve(self, counts_by_product) -> float:
        """Counts indexed by the instance's own product order."""
        counts = np.asarray(counts_by_product)
        return self.solve_sorted(tuple(int(counts[j]) for j in self.order))


@dataclass
class OfflineResult:
    value: float
    mode: str  # "exact" or "mc"
    n_paths: int | None = None
    seed: int | None = None
    stderr: float | None = None


def count_request_paths(instance: NetworkInstance, model: DemandModel) -> int:
    """Number of positive-probability (demand path, request sequence) realizations."""
    K, T = model.K, model.T
    nz = (instance.arrivals > 0).sum(axis=2)  # (K, T)
    counts = [0] * T
    counts[model.initial_prev_demand - 1] = 1
    for k in range(K):
        new = [0] * T
        prefix = [1]
        for t in range(T):
            prefix.append(prefix[-1] * int(nz[k, t]))
        for q in range(T):
            if not counts[q]:
                continue
            for d in range(T):
                if model.transition[k, q, d] > 0:
                    new[d] += counts[q] * prefix[d + 1]
        counts = new
    return sum(counts)


def offline_bound(
    instance: NetworkInstance,
    model: DemandModel,
    mode: str = "exact",
    n_paths: int = 10_000,
    seed: int = 0,
    path_cap: int = DEFAULT_PATH_CAP,
) -> OfflineResult:
    instance.check_compatible(model)
    solver = HindsightSolver(instance)
    if mode == "exact":
        n = count_request_paths(instance, model)
        if n > path_cap:
            raise EnumerationTooLarge(f"{n} request paths exceed the cap of {path_cap}")
        dist = request_count_distribution(instance, model)
        value = sum(p * solver.solve_sorted(c) for c, p in dist.items())
        return OfflineResult(float(value), "exact")
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1")
    counts = sample_request_counts(instance, model, n_paths, seed)
    vals = np.array([solver.solve(c) for c in counts])
    se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return OfflineResult(float(vals.mean()), "mc", n_paths, seed, se)


def request_count_distribution(instance: NetworkInstance, model: DemandModel) -> dict:
    """Law of the per-product request counts (in the solver's revenue order)."""
    probs = derive_probabilities(model)
    solver_order = HindsightSolver(instance).order
    pos = {int(j): r for r, j in enumerate(solver_order)}
    K, T = model.K, model.T
    zero = tuple(0 for _ in solver_order)
    # state: (prev demand q, counts) -> probability, at the start of a stage
    stage = {(model.initial_prev_demand - 1, zero): 1.0}
    for k in range(K):
        active = dict(stage)  # paths that reach period t of stage k
        ended: dict = {}
        for t in range(T):
            lam = instance.arrivals[k, t]
            grown: dict = {}
            for (q, c), p in active.items():
                for j in np.flatnonzero(lam > 0):
                    if int(j) in pos:
                        cl = list(c)
                        cl[pos[int(j)]] += 1
                        key = (q, tuple(cl))
                    else:
                        key = (q, c)
                    grown[key] = grown.get(key, 0.0) + p * lam[j]
            active = {}
            for (q, c), p in grown.items():
                th = probs.survival[k, t, q]
                if th > 0:
                    active[(q, c)] = active.get((q, c), 0.0) + p * th
                if th < 1:
                    key = (t, c)
                    ended[key] = ended.get(key, 0.0) + p * (1 - th)
        stage = ended
    out: dict = {}
    for (_, c), p in stage.items():
        out[c] = out.get(c, 0.0) + p
    return out


def sample_request_counts(instance: NetworkInstance, model: DemandModel, n_paths: int, seed: int) -> np.ndarray:
    """Per-path request counts (instance product order) using the simulator's product and survival streams."""
    from calrm.policy import simulate_requests

    products, _ = simulate_requests(instance, model, n_paths, seed)
    J = instance.n_products
    out = np.zeros((n_paths, J), dtype=np.int64)
    flat = products.reshape(n_paths, -1)
    for j in range(J):
        out[:, j] = (flat == j).sum(axis=1)
    return out
