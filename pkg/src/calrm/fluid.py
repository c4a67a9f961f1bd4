"""LP builders for the fluid approximation and the competing bounds.

PRF variables ``x[k, t, q, j]`` (0-based, flat index ``((k*T + t)*T + q)*J + j``)
are acceptance probabilities for product j at period t of stage k given the
previous stage's demand q.  Variables attached to zero-probability events or
to zero arrival probability are pinned to 0 through their bounds so the index
map stays rectangular.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from calrm.demand import DemandModel, StageProbabilities, conditional_joint_all, derive_probabilities
from calrm.errors import NumericalBreakdown, PreconditionViolated, TooManyProducts, ValidationError
from calrm.instance import NetworkInstance
from calrm.lp import EQ, GE, LE, BoundedLP, LPBuilder, LPSolution, solve_lp


class BoundKind(str, enum.Enum):
    PRF_REDUCED = "prf"
    PRF_FULL = "prf-full"
    EXF = "exf"
    INDEP = "indep"
    NAIVE_CUMULATIVE = "naive-cum"
    NAIVE_UNWEIGHTED = "naive-unw"
    LAGRANGIAN_DUAL = "lagrangian"
    LINEAR_VFA = "vfa"
    ASSORTMENT = "assortment"


@dataclass
class FluidSolution:
    kind: BoundKind
    value: float
    x: np.ndarray  # PRF: (K, T, T, J); INDEP/naive: (K, T, J); EXF: (J,)
    lp_solution: LPSolution | None = field(default=None, repr=False)


@dataclass(frozen=True)
class MNLChoiceModel:
    """Multinomial logit weights over the non-null products; no-purchase weight is 1."""

    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.weights, dtype=float)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValidationError("MNL weights must be positive and finite")
        object.__setattr__(self, "weights", v)

    def choice_probs(self, subset: tuple[int, ...], n: int) -> np.ndarray:
        out = np.zeros(n)
        if subset:
            idx = np.array(subset)
            out[idx] = self.weights[idx] / (1.0 + self.weights[idx].sum())
        return out


def _check(instance: NetworkInstance, model: DemandModel, probs: StageProbabilities | None):
    instance.check_compatible(model)
    return derive_probabilities(model) if probs is None else probs


def _solve(lp: BoundedLP, method: str) -> LPSolution:
    sol = solve_lp(lp, method=method)
    if not sol.optimal:
        raise NumericalBreakdown(f"bound LP ended with status {sol.status}")
    return sol


# ------------------------------------------------------------------------ PRF


@dataclass(frozen=True)
class PRFIndex:
    K: int
    T: int
    J: int

    def __call__(self, k, t, q, j):
        return ((k * self.T + t) * self.T + q) * self.J + j

    @property
    def size(self) -> int:
        return self.K * self.T * self.T * self.J


def prf_bounds(instance: NetworkInstance, probs: StageProbabilities) -> np.ndarray:
    """Upper bounds of the PRF variables, shape (K, T, T, J)."""
    lam = instance.arrivals  # (K, T, J)
    live = probs.w > 0  # (K, T, Tq)
    return np.where(live[..., None], lam[:, :, None, :], 0.0)


def build_prf(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    form: str = "reduced",
) -> tuple[BoundedLP, PRFIndex]:
    """The fluid LP.  ``form="reduced"`` keeps one capacity row per (i, k, q)."""
    probs = _check(instance, model, probs)
    K, T, J = model.K, model.T, instance.n_products
    L = instance.n_resources
    a = instance.usage.astype(float)
    idx = PRFIndex(K, T, J)
    obj = (probs.w[..., None] * instance.revenues[None, None, None, :]).ravel()
    hi = prf_bounds(instance, probs).ravel()
    rows, cols, vals, rhs = [], [], [], []
    nrow = 0
    if form not in ("reduced", "full"):
        raise ValueError(f"unknown form {form!r}")
    for k in range(K):
        reach = np.flatnonzero(probs.marginal[k] > 0)
        if k > 0:
            cj = conditional_joint_all(model, probs, k + 1)  # (k, T, T, Tq)
            cjf = cj.reshape(k * T * T, T)  # [(l, s, p), q]
        for q in reach:
            if k > 0:
                earlier = np.flatnonzero(cjf[:, q])
                e_cols = (earlier[:, None] * J + np.arange(J)[None, :])  # (n_e, J)
                e_coef = cjf[earlier, q][:, None]
            t_list = [T - 1] if form == "reduced" else [t for t in range(T) if probs.w[k, t, q] > 0]
            for t in t_list:
                s_live = np.flatnonzero(probs.w[k, : t + 1, q] > 0)
                c_cols = idx(k, s_live, q, 0)[:, None] + np.arange(J)[None, :]
                for i in range(L):
                    used = a[i] > 0
                    if not used.any():
                        continue
                    parts_c, parts_v = [], []
                    if k > 0 and earlier.size:
                        parts_c.append(e_cols[:, used].ravel())
                        parts_v.append(np.broadcast_to(e_coef, (earlier.size, J))[:, used].ravel())
                    parts_c.append(c_cols[:, used].ravel())
                    parts_v.append(np.ones(c_cols[:, used].size))
                    cc = np.concatenate(parts_c)
                    rows.append(np.full(cc.size, nrow))
                    cols.append(cc)
                    vals.append(np.concatenate(parts_v))
                    rhs.append(float(instance.capacities[i]))
                    nrow += 1
    A = _assemble(rows, cols, vals, nrow, idx.size)
    lp = BoundedLP(
        sense="max",
        c=obj,
        A=A,
        relations=np.full(nrow, LE, dtype=object),
        rhs=np.array(rhs),
        lo=np.zeros(idx.size),
        hi=hi,
    )
    return lp, idx


def _assemble(rows, cols, vals, m, n) -> sp.csr_matrix:
    if not rows:
        return sp.csr_matrix((m, n))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n)
    ).tocsr()


def prf_solution(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    form: str = "reduced",
    method: str = "simplex",
) -> FluidSolution:
    probs = _check(instance, model, probs)
    lp, idx = build_prf(instance, model, probs, form=form)
    sol = _solve(lp, method)
    x = np.clip(sol.x, 0.0, lp.hi).reshape(idx.K, idx.T, idx.T, idx.J)
    kind = BoundKind.PRF_REDUCED if form == "reduced" else BoundKind.PRF_FULL
    return FluidSolution(kind, sol.objective, x, sol)


# ------------------------------------------------------------------------ EXF


def expected_demand(instance: NetworkInstance, probs: StageProbabilities) -> np.ndarray:
    """E_j = sum_{k,t} P{D^k >= t} lambda_jt^k."""
    return np.einsum("kt,ktj->j", probs.tail, instance.arrivals)


def build_exf(instance: NetworkInstance, model: DemandModel, probs: StageProbabilities | None = None) -> BoundedLP:
    probs = _check(instance, model, probs)
    J = instance.n_products
    return BoundedLP(
        sense="max",
        c=instance.revenues.copy(),
        A=sp.csr_matrix(instance.usage.astype(float)),
        relations=np.full(instance.n_resources, LE, dtype=object),
        rhs=instance.capacities.astype(float),
        lo=np.zeros(J),
        hi=expected_demand(instance, probs),
    )


def exf_solution(instance, model, probs=None, method: str = "simplex") -> FluidSolution:
    lp = build_exf(instance, model, probs)
    sol = _solve(lp, method)
    return FluidSolution(BoundKind.EXF, sol.objective, np.clip(sol.x, 0.0, lp.hi), sol)


# -------------------------------------------------------- independent demands


def _require_independent(model: DemandModel):
    if not model.is_independent():
        raise PreconditionViolated("this LP is defined for independent stage demands only")


def build_indep(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    variant: str = "indep",
) -> BoundedLP:
    """Independent-demand LP; ``variant`` in {"indep", "cumulative", "unweighted"}."""
    probs = _check(instance, model, probs)
    _require_independent(model)
    K, T, J = model.K, model.T, instance.n_products
    tail = probs.tail  # (K, T)
    a = instance.usage.astype(float)
    n = K * T * J
    obj = (tail[..., None] * instance.revenues[None, None, :]).ravel()
    rows, cols, vals, rhs = [], [], [], []
    m = 0
    for k in range(K):
        for i in range(instance.n_resources):
            coef = np.zeros((K, T, J))
            for ell in range(k + 1):
                if variant == "unweighted":
                    w = np.ones(T)
                elif ell < k or variant == "cumulative":
                    w = tail[ell]
                else:
                    w = np.ones(T)
                coef[ell] = w[:, None] * a[i][None, :]
            flat = coef.ravel()
            nz = np.flatnonzero(flat)
            rows.append(np.full(nz.size, m))
            cols.append(nz)
            vals.append(flat[nz])
            rhs.append(float(instance.capacities[i]))
            m += 1
    if variant not in ("indep", "cumulative", "unweighted"):
        raise ValueError(f"unknown variant {variant!r}")
    return BoundedLP(
        sense="max",
        c=obj,
        A=_assemble(rows, cols, vals, m, n),
        relations=np.full(m, LE, dtype=object),
        rhs=np.array(rhs),
        lo=np.zeros(n),
        hi=instance.arrivals.ravel().copy(),
    )


def build_naive(instance, model, probs=None, variant: str = "cumulative") -> BoundedLP:
    if variant not in ("cumulative", "unweighted"):
        raise ValueError(f"unknown naive variant {variant!r}")
    return build_indep(instance, model, probs, variant=variant)


def indep_solution(instance, model, probs=None, variant: str = "indep", method: str = "simplex") -> FluidSolution:
    lp = build_indep(instance, model, probs, variant=variant)
    sol = _solve(lp, method)
    kind = {
        "indep": BoundKind.INDEP,
        "cumulative": BoundKind.NAIVE_CUMULATIVE,
        "unweighted": BoundKind.NAIVE_UNWEIGHTED,
    }[variant]
    x = np.clip(sol.x, 0.0, lp.hi).reshape(model.K, model.T, instance.n_products)
    return FluidSolution(kind, sol.objective, x, sol)


# -------------------------------------------------- dual (minimization) forms


def _transitions(K, T, theta):
    """For each (k, t, q): successor (k, t+1, q) with weight theta and (k+1, 1, t) with 1 - theta."""
    for k, t, q in itertools.product(range(K), range(T), range(T)):
        th = theta[k, t, q]
        nxt = []
        if t + 1 < T and th != 0:
            nxt.append(((k, t + 1, q), th))
        if k + 1 < K and th != 1:
            nxt.append(((k + 1, 0, t), 1.0 - th))
        yield (k, t, q), nxt


def build_lagrangian(instance: NetworkInstance, model: DemandModel, probs: StageProbabilities | None = None) -> BoundedLP:
    """Minimization LP over slopes alpha, intercepts beta, multipliers mu and eta."""
    probs = _check(instance, model, probs)
    K, T, J, L = model.K, model.T, instance.n_products, instance.n_resources
    a = instance.usage
    lam = instance.arrivals
    b = LPBuilder("min")
    n3 = K * T * T
    alpha = b.add_vars(L * n3, lo=-np.inf, name="alpha").reshape(L, K, T, T)
    beta = b.add_vars(n3, lo=-np.inf, name="beta").reshape(K, T, T)
    mu = b.add_vars(L * n3, name="mu").reshape(L, K, T, T)
    eta = b.add_vars(J * n3, name="eta").reshape(J, K, T, T)
    q0 = model.initial_prev_demand - 1
    obj = np.zeros(b.n)
    obj[alpha[:, 0, 0, q0]] = instance.capacities
    obj[beta[0, 0, q0]] = 1.0
    for (k, t, q), nxt in _transitions(K, T, probs.survival):
        for i in range(L):
            cols = [alpha[i, k, t, q], mu[i, k, t, q]] + [alpha[i][s] for s, _ in nxt]
            vals = [1.0, -1.0] + [-w for _, w in nxt]
            b.add_row(cols, vals, EQ, 0.0)
        cols = [beta[k, t, q]] + list(eta[:, k, t, q]) + [beta[s] for s, _ in nxt]
        vals = [1.0] + list(-lam[k, t]) + [-w for _, w in nxt]
        b.add_row(cols, vals, EQ, 0.0)
        for j in range(J):
            used = np.flatnonzero(a[:, j])
            b.add_row([eta[j, k, t, q]] + list(alpha[used, k, t, q]), 1.0, GE, instance.revenues[j])
    lp = b.build()
    return BoundedLP("min", obj, lp.A, lp.relations, lp.rhs, lp.lo, lp.hi, lp.var_names, lp.row_names)


def build_linear_vfa(instance: NetworkInstance, model: DemandModel, probs: StageProbabilities | None = None) -> BoundedLP:
    """Linear value-function LP with the positive parts linearized by eta and zeta."""
    probs = _check(instance, model, probs)
    K, T, J, L = model.K, model.T, instance.n_products, instance.n_resources
    a = instance.usage
    lam = instance.arrivals
    cap = instance.capacities.astype(float)
    b = LPBuilder("min")
    n3 = K * T * T
    alpha = b.add_vars(L * n3, lo=-np.inf, name="alpha").reshape(L, K, T, T)
    beta = b.add_vars(n3, lo=-np.inf, name="beta").reshape(K, T, T)
    eta = b.add_vars(J * n3, name="eta").reshape(J, K, T, T)
    zeta = b.add_vars(L * n3, name="zeta").reshape(L, K, T, T)
    q0 = model.initial_prev_demand - 1
    obj = np.zeros(b.n)
    obj[alpha[:, 0, 0, q0]] = cap
    obj[beta[0, 0, q0]] = 1.0
    for (k, t, q), nxt in _transitions(K, T, probs.survival):
        for j in range(J):
            used = np.flatnonzero(a[:, j])
            cols = [eta[j, k, t, q]]
            vals = [1.0]
            for s, w in nxt:
                cols += list(alpha[used][:, s[0], s[1], s[2]])
                vals += [w] * used.size
            b.add_row(cols, vals, GE, instance.revenues[j])
        for i in range(L):
            cols = [zeta[i, k, t, q], alpha[i, k, t, q]] + [alpha[i][s] for s, _ in nxt]
            vals = [1.0, 1.0] + [-w for _, w in nxt]
            b.add_row(cols, vals, GE, 0.0)
        cols = [beta[k, t, q]] + [beta[s] for s, _ in nxt] + list(eta[:, k, t, q]) + list(zeta[:, k, t, q])
        vals = [1.0] + [-w for _, w in nxt] + list(-lam[k, t]) + list(-cap)
        b.add_row(cols, vals, GE, 0.0)
    lp = b.build()
    return BoundedLP("min", obj, lp.A, lp.relations, lp.rhs, lp.lo, lp.hi, lp.var_names, lp.row_names)


# ----------------------------------------------------------------- assortment

MAX_ASSORTMENT_PRODUCTS = 10


def build_assortment(
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None,
    choice: MNLChoiceModel,
) -> tuple[BoundedLP, list[tuple[int, ...]]]:
    """Assortment LP over all subsets of the non-null products (reduced capacity rows).

    A customer for a real product shows up with probability 1 - lambda_null at
    each period and then chooses by MNL among the offered products.
    """
    probs = _check(instance, model, probs)
    real = instance.real_products()
    if real.size > MAX_ASSORTMENT_PRODUCTS:
        raise TooManyProducts(f"{real.size} products; subset enumeration is capped at {MAX_ASSORTMENT_PRODUCTS}")
    J = instance.n_products
    if choice.weights.shape != (J,):
        raise ValidationError(f"need one MNL weight per product ({J})")
    K, T = model.K, model.T
    subsets = [s for r in range(real.size + 1) for s in itertools.combinations(real.tolist(), r)]
    nS = len(subsets)
    phi_base = np.stack([choice.choice_probs(s, J) for s in subsets])  # (nS, J)
    n_null = instance.null_product_index
    arrive = 1.0 - (instance.arrivals[:, :, n_null] if n_null is not None else 0.0)  # (K, T)
    arrive = np.broadcast_to(arrive, (K, T))
    rev_s = phi_base @ instance.revenues  # (nS,)
    use_s = instance.usage.astype(float) @ phi_base.T  # (L, nS)
    n = K * T * T * nS

    def col(k, t, q, s=0):
        return ((k * T + t) * T + q) * nS + s

    obj = (probs.w[..., None] * arrive[:, :, None, None] * rev_s[None, None, None, :]).ravel()
    rows, cols, vals, rhs, rel = [], [], [], [], []
    m = 0
    for k, t, q in itertools.product(range(K), range(T), range(T)):
        rows.append(np.full(nS, m))
        cols.append(col(k, t, q) + np.arange(nS))
        vals.append(np.ones(nS))
        rhs.append(1.0)
        rel.append(EQ)
        m += 1
    for k in range(K):
        if k > 0:
            cjf = conditional_joint_all(model, probs, k + 1).reshape(k * T * T, T)
        for q in np.flatnonzero(probs.marginal[k] > 0):
            for i in range(instance.n_resources):
                cc, vv = [], []
                if k > 0:
                    earlier = np.flatnonzero(cjf[:, q])
                    ell, rem = np.divmod(earlier, T * T)
                    r, p = np.divmod(rem, T)
                    coef = cjf[earlier, q] * arrive[ell, r]
                    cc.append((earlier[:, None] * nS + np.arange(nS)[None, :]).ravel())
                    vv.append((coef[:, None] * use_s[i][None, :]).ravel())
                live = np.flatnonzero(probs.w[k, :, q] > 0)
                cc.append((col(k, live, q)[:, None] + np.arange(nS)[None, :]).ravel())
                vv.append((arrive[k, live][:, None] * use_s[i][None, :]).ravel())
                c_all, v_all = np.concatenate(cc), np.concatenate(vv)
                keep = v_all != 0
                rows.append(np.full(int(keep.sum()), m))
                cols.append(c_all[keep])
                vals.append(v_all[keep])
                rhs.append(float(instance.capacities[i]))
                rel.append(LE)
                m += 1
    lp = BoundedLP(
        sense="max",
        c=obj,
        A=_assemble(rows, cols, vals, m, n),
        relations=np.array(rel, dtype=object),
        rhs=np.array(rhs),
        lo=np.zeros(n),
        hi=np.full(n, np.inf),
    )
    return lp, subsets


# --------------------------------------------------------------- dispatching


def solve_bound(
    kind: BoundKind | str,
    instance: NetworkInstance,
    model: DemandModel,
    probs: StageProbabilities | None = None,
    method: str = "simplex",
    choice: MNLChoiceModel | None = None,
) -> FluidSolution:
    kind = BoundKind(kind)
    probs = _check(instance, model, probs)
    if kind in (BoundKind.PRF_REDUCED, BoundKind.PRF_FULL):
        return prf_solution(instance, model, probs, form="reduced" if kind == BoundKind.PRF_REDUCED else "full", method=method)
    if kind == BoundKind.EXF:
        return exf_solution(instance, model, probs, method=method)
    if kind == BoundKind.INDEP:
        return indep_solution(instance, model, probs, "indep", method)
    if kind == BoundKind.NAIVE_CUMULATIVE:
        return indep_solution(instance, model, probs, "cumulative", method)
    if kind == BoundKind.NAIVE_UNWEIGHTED:
        return indep_solution(instance, model, probs, "unweighted", method)
    if kind == BoundKind.LAGRANGIAN_DUAL:
        lp = build_lagrangian(instance, model, probs)
    elif kind == BoundKind.LINEAR_VFA:
        lp = build_linear_vfa(instance, model, probs)
    else:
        choice = choice or MNLChoiceModel(np.ones(instance.n_products))
        lp, _ = build_assortment(instance, model, probs, choice)
    sol = _solve(lp, method)
    return FluidSolution(kind, sol.objective, sol.x, sol)


def build_bound_lp(kind: BoundKind | str, instance, model, probs=None, choice=None) -> BoundedLP:
    kind = BoundKind(kind)
    if kind == BoundKind.PRF_REDUCED:
        return build_prf(instance, model, probs, "reduced")[0]
    if kind == BoundKind.PRF_FULL:
        return build_prf(instance, model, probs, "full")[0]
    if kind == BoundKind.EXF:
        return build_exf(instance, model, probs)
    if kind == BoundKind.INDEP:
        return build_indep(instance, model, probs)
    if kind == BoundKind.NAIVE_CUMULATIVE:
        return build_naive(instance, model, probs, "cumulative")
    if kind == BoundKind.NAIVE_UNWEIGHTED:
        return build_naive(instance, model, probs, "unweighted")
    if kind == BoundKind.LAGRANGIAN_DUAL:
        return build_lagrangian(instance, model, probs)
    if kind == BoundKind.LINEAR_VFA:
        return build_linear_vfa(instance, model, probs)
    choice = choice or MNLChoiceModel(np.ones(instance.n_products))
    return build_assortment(instance, model, probs, choice)[0]


def exf_from_prf(instance: NetworkInstance, probs: StageProbabilities, fluid: FluidSolution) -> np.ndarray:
    """Aggregate a PRF solution into expected accepted requests per product."""
    return np.einsum("ktq,ktqj->j", probs.w, fluid.x)
