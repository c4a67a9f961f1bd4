"""Fluid-derived admission policies and their Monte Carlo evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from calrm import crn
from calrm.demand import DemandModel, StageProbabilities, derive_probabilities
from calrm.errors import (
    DegenerateDenominator,
    DimensionMismatch,
    EpsilonZero,
    GammaOutOfRange,
    PreconditionViolated,
    ValidationError,
)
from calrm.fluid import BoundKind, FluidSolution, expected_demand
from calrm.instance import NetworkInstance

CHUNK = 20_000


@dataclass(frozen=True)
class AdmissionPolicy:
    """Acceptance probabilities ``p[k, t, q, j]`` (0-based; q is the previous stage's demand minus 1)."""

    tag: str
    gamma: float
    table: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.table, dtype=float)
        if p.ndim != 4:
            raise DimensionMismatch("policy table must have shape (K, T, T, J)")
        if np.any(p < 0) or np.any(p > 1):
            raise ValidationError("acceptance probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "table", p)

    def prob(self, j: int, t: int, k: int, q_prev: int) -> float:
        """1-based t, k, q_prev as in the model's notation."""
        return float(self.table[k - 1, t - 1, q_prev - 1, j])


def _check_gamma(gamma: float):
    if not (0.0 <= gamma <= 1.0) or math.isnan(gamma):
        raise GammaOutOfRange(f"gamma must lie in [0, 1], got {gamma}")


def _ratio(num: np.ndarray, lam: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lam > 0, num / np.where(lam > 0, lam, 1.0), 0.0)
    return np.clip(r, 0.0, 1.0)


def prf_policy(fluid: FluidSolution, instance: NetworkInstance, gamma: float) -> AdmissionPolicy:
    _check_gamma(gamma)
    if fluid.x.ndim != 4:
        raise PreconditionViolated("prf_policy needs a PRF solution indexed by (k, t, q, j)")
    lam = instance.arrivals[:, :, None, :]
    return AdmissionPolicy("prf", gamma, _ratio(gamma * fluid.x, np.broadcast_to(lam, fluid.x.shape)))


def indep_policy(
    fluid: FluidSolution, instance: NetworkInstance, probs: StageProbabilities, gamma: float
) -> AdmissionPolicy:
    """q-free acceptance probabilities: the PRF rates averaged over the previous demand.

    An INDEP/naive solution (indexed by (k, t, j)) is used as is.
    """
    _check_gamma(gamma)
    K, T, J = instance.arrivals.shape
    if fluid.x.ndim == 4:
        xbar = np.einsum("kq,ktqj->ktj", probs.marginal[:K], fluid.x)
    elif fluid.x.ndim == 3:
        xbar = fluid.x
    else:
        raise PreconditionViolated("indep_policy needs a PRF or INDEP solution")
    p = _ratio(gamma * xbar, instance.arrivals)
    return AdmissionPolicy("indep", gamma, np.broadcast_to(p[:, :, None, :], (K, T, T, J)).copy())


def exf_policy(
    fluid: FluidSolution, instance: NetworkInstance, probs: StageProbabilities, gamma: float
) -> AdmissionPolicy:
    _check_gamma(gamma)
    if fluid.kind != BoundKind.EXF:
        raise PreconditionViolated("exf_policy needs an EXF solution")
    E = expected_demand(instance, probs)
    w = fluid.x
    bad = (E <= 0) & (w > 1e-12)
    if bad.any():
        raise DegenerateDenominator(f"product {int(np.argmax(bad))} has zero expected demand but w > 0")
    p = _ratio(gamma * w, E)
    K, T, J = instance.arrivals.shape
    table = np.broadcast_to(p, (K, T, T, J)).copy()
    table[np.broadcast_to(instance.arrivals[:, :, None, :] == 0, table.shape)] = 0.0
    return AdmissionPolicy("exf", gamma, table)


def recommended_gamma(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    regime: str = "constant_factor",
) -> float:
    """Theoretical tuning choices: ``asymptotic`` or ``constant_factor`` (1/(2L))."""
    if regime == "constant_factor":
        return 1.0 / (2.0 * instance.max_usage)
    if regime != "asymptotic":
        raise ValueError(f"unknown regime {regime!r}")
    probs = derive_probabilities(model) if probs is None else probs
    eps = probs.eps
    if eps <= 0:
        raise EpsilonZero("a zero transition probability leaves the asymptotic rule undefined")
    c = instance.c_min
    if c < 2:
        raise PreconditionViolated("the asymptotic rule needs c_min >= 2")
    delta = eps**-6
    g = 1.0 - math.sqrt(4.0 * (c + 3.0 * delta * (model.K - 1)) * math.log(c)) / c
    return float(min(max(g, 0.0), 1.0))


# ----------------------------------------------------------------- simulation


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    seed: int = 0
    record_paths: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be at least 1")


@dataclass
class SimStats:
    mean: float
    stderr: float
    n_paths: int
    accept_counts: np.ndarray
    capacity_violations: int = 0
    revenues: np.ndarray | None = field(default=None, repr=False)
    demands: np.ndarray | None = field(default=None, repr=False)  # (n, K), realized D^k
    products: np.ndarray | None = field(default=None, repr=False)  # (n, K, T), -1 where no period
    accepted: np.ndarray | None = field(default=None, repr=False)  # (n, K, T) bool


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    j = np.searchsorted(cdf, u, side="right")
    return np.minimum(j, cdf.size - 1)


def _run_chunk(instance, model, theta, table, seed, start, count, record):
    K, T, J = instance.arrivals.shape
    width = K * T
    u_prod = crn.uniforms(seed, crn.PRODUCT, start, count, width)
    u_acc = crn.uniforms(seed, crn.ACCEPT, start, count, width)
    u_surv = crn.uniforms(seed, crn.SURVIVAL, start, count, width)
    cap = np.broadcast_to(instance.capacities, (count, instance.n_resources)).astype(np.int64).copy()
    a = instance.usage.T.astype(np.int64)  # (J, L)
    f = instance.revenues
    cdfs = np.cumsum(instance.arrivals, axis=2)
    q = np.full(count, model.initial_prev_demand - 1)
    revenue = np.zeros(count)
    accepts = np.zeros(J, dtype=np.int64)
    violations = 0
    demands = np.zeros((count, K), dtype=np.int64) if record else None
    products = np.full((count, K, T), -1, dtype=np.int64) if record else None
    accepted = np.zeros((count, K, T), dtype=bool) if record else None
    for k in range(K):
        active = np.ones(count, dtype=bool)
        d_k = np.zeros(count, dtype=np.int64)
        for t in range(T):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            col = k * T + t
            j = _inverse_cdf(cdfs[k, t], u_prod[idx, col])
            qi = q[idx]
            p = table[k, t, qi, j]
            want = u_acc[idx, col] < p
            fits = np.all(cap[idx] >= a[j], axis=1)
            take = want & fits
            ti = idx[take]
            cap[ti] -= a[j[take]]
            violations += int((cap[ti] < 0).any(axis=1).sum())
            revenue[ti] += f[j[take]]
            np.add.at(accepts, j[take], 1)
            if record:
                products[idx, k, t] = j
                accepted[ti, k, t] = True
            go_on = u_surv[idx, col] < theta[k, t, qi]
            stop = idx[~go_on]
            d_k[stop] = t + 1
            active[stop] = False
        q = d_k - 1
        if record:
            demands[:, k] = d_k
    return revenue, accepts, violations, demands, products, accepted


def simulate(
    instance: NetworkInstance,
    model: DemandModel,
    policy: AdmissionPolicy,
    cfg: SimConfig,
    probs: StageProbabilities | None = None,
) -> SimStats:
    """Evaluate a policy on n_paths sample paths with per-path counter-based streams."""
    instance.check_compatible(model)
    K, T, J = instance.arrivals.shape
    if policy.table.shape != (K, T, T, J):
        raise DimensionMismatch(f"policy table has shape {policy.table.shape}, expected {(K, T, T, J)}")
    probs = derive_probabilities(model) if probs is None else probs
    parts = []
    for start in range(0, cfg.n_paths, CHUNK):
        count = min(CHUNK, cfg.n_paths - start)
        parts.append(
            _run_chunk(instance, model, probs.survival, policy.table, cfg.seed, start, count, cfg.record_paths)
        )
    revenue = np.concatenate([p[0] for p in parts])
    n = cfg.n_paths
    se = float(revenue.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    stats = SimStats(
        mean=float(revenue.mean()),
        stderr=se,
        n_paths=n,
        accept_counts=sum(p[1] for p in parts),
        capacity_violations=sum(p[2] for p in parts),
        revenues=revenue,
    )
    if cfg.record_paths:
        stats.demands = np.concatenate([p[3] for p in parts])
        stats.products = np.concatenate([p[4] for p in parts])
        stats.accepted = np.concatenate([p[5] for p in parts])
    return stats


def simulate_requests(instance: NetworkInstance, model: DemandModel, n_paths: int, seed: int):
    """Request sequences and demands of the paths a simulation with this seed would face."""
    K, T, J = instance.arrivals.shape
    never = AdmissionPolicy("none", 0.0, np.zeros((K, T, T, J)))
    st = simulate(instance, model, never, SimConfig(n_paths, seed, record_paths=True))
    return st.products, st.demands


def pathwise_offline_audit(instance: NetworkInstance, stats: SimStats, limit: int | None = None) -> dict:
    """Compare each recorded path's revenue with its hindsight optimum."""
    from calrm.exact import HindsightSolver

    if stats.products is None:
        raise ValidationError("simulation was run without record_paths")
    solver = HindsightSolver(instance)
    n = stats.n_paths if limit is None else min(limit, stats.n_paths)
    J = instance.n_products
    flat = stats.products[:n].reshape(n, -1)
    violations = 0
    worst = -math.inf
    for i in range(n):
        counts = np.bincount(flat[i][flat[i] >= 0], minlength=J)
        best = solver.solve(counts)
        gap = stats.revenues[i] - best
        worst = max(worst, gap)
        if gap > 1e-9:
            violations += 1
    return {"audited": n, "violations": violations, "max_excess": worst}


def bernoulli_mgf_check(step: float = 0.05, tol: float = 1e-12) -> tuple[int, float]:
    """Check exp(-l*m)((1-m) + m*exp(l)) <= exp(m*l^2) on a grid of [0,1]^2.

    Returns the number of failing grid points and the largest excess.
    """
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    mu, lam = np.meshgrid(grid, grid, indexing="ij")
    lhs = np.exp(-lam * mu) * ((1 - mu) + mu * np.exp(lam))
    rhs = np.exp(mu * lam * lam)
    excess = lhs - rhs
    return int((excess > tol).sum()), float(excess.max())
