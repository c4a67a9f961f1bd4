"""Sparse bounded-variable LPs and a revised simplex solver.

The solver keeps a dense basis inverse, updates it with rank-one (eta) steps
and refactorizes periodically.  Variable bounds are handled directly by the
ratio test, so simple upper bounds never become rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import blas as _blas

from calrm.errors import NumericalBreakdown, ParseError, ValidationError

LE, EQ, GE = "<=", "=", ">="
OPTIMAL, INFEASIBLE, UNBOUNDED = "Optimal", "Infeasible", "Unbounded"

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
DUAL_TOL = 1e-9
REFACTOR_EVERY = 100
BLAND_AFTER = 500
PRICING_SEGMENTS = 1  # partial pricing: more segments trade pricing cost for extra pivots


@dataclass(frozen=True)
class BoundedLP:
    sense: str  # "max" or "min"
    c: np.ndarray
    A: sp.csr_matrix
    relations: np.ndarray  # one of "<=", "=", ">=" per row
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise ValidationError(f"sense must be 'max' or 'min', got {self.sense!r}")
        c = np.asarray(self.c, dtype=float)
        A = sp.csr_matrix(self.A, dtype=float)
        rel = np.asarray(self.relations, dtype=object)
        rhs = np.asarray(self.rhs, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        n = c.size
        m = rhs.size
        if A.shape != (m, n):
            raise ValidationError(f"A has shape {A.shape}, expected {(m, n)}")
        if rel.shape != (m,) or lo.shape != (n,) or hi.shape != (n,):
            raise ValidationError("relations/bounds have the wrong length")
        if not set(rel.tolist()) <= {LE, EQ, GE}:
            raise ValidationError("relations must be '<=', '=' or '>='")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(rhs))):
            raise ValidationError("objective, matrix and right-hand side must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValidationError("bounds must satisfy lo in R or -inf, hi in R or +inf")
        if np.any(lo > hi):
            raise ValidationError(f"lo > hi for variable {int(np.argmax(lo > hi))}")
        for name, val in (("c", c), ("A", A), ("relations", rel), ("rhs", rhs), ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def scaled(self, factor: float) -> "BoundedLP":
        return BoundedLP(self.sense, self.c * factor, self.A, self.relations, self.rhs, self.lo, self.hi,
                         self.var_names, self.row_names)


@dataclass
class LPSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class LPBuilder:
    """Incremental assembly of a BoundedLP from coordinate triplets."""

    def __init__(self, sense: str = "max"):
        self.sense = sense
        self._c: list[np.ndarray] = []
        self._lo: list[np.ndarray] = []
        self._hi: list[np.ndarray] = []
        self._names: list[str] = []
        self.n = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._rel: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []

    def add_vars(self, count: int, c=0.0, lo=0.0, hi=np.inf, name: str = "x") -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self._c.append(np.broadcast_to(np.asarray(c, dtype=float), (count,)).copy())
        self._lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (count,)).copy())
        self._hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (count,)).copy())
        self._names.extend(f"{name}{i}" for i in range(count))
        self.n += count
        return idx

    def add_row(self, cols, vals, rel: str, rhs: float, name: str | None = None) -> int:
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        keep = vals != 0
        r = len(self._rhs)
        self._rows.append(np.full(int(keep.sum()), r, dtype=np.int64))
        self._cols.append(cols[keep])
        self._vals.append(vals[keep])
        self._rel.append(rel)
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"r{r}")
        return r

    def build(self) -> BoundedLP:
        m = len(self._rhs)
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        A = sp.coo_matrix(
            (cat(self._vals, float), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
            shape=(m, self.n),
        ).tocsr()
        A.sum_duplicates()
        return BoundedLP(
            sense=self.sense,
            c=cat(self._c, float),
            A=A,
            relations=np.array(self._rel, dtype=object),
            rhs=np.array(self._rhs, dtype=float),
            lo=cat(self._lo, float),
            hi=cat(self._hi, float),
            var_names=self._names,
            row_names=self._row_names,
        )


# ----------------------------------------------------------------- transform


@dataclass
class _Internal:
    """min c'z s.t. A'z = b, lo' <= z <= hi', lo' finite; z = structurals + slacks."""

    A: sp.csc_matrix
    c: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_struct: int
    # original variable j = sum over its pieces of sign * z[col] (+ nothing)
    piece_col: np.ndarray
    piece_var: np.ndarray
    piece_sign: np.ndarray


def _to_internal(lp: BoundedLP) -> _Internal:
    m = lp.n_rows
    obj = -lp.c if lp.sense == "max" else lp.c.copy()
    lo_fin, hi_fin = np.isfinite(lp.lo), np.isfinite(lp.hi)
    free = ~lo_fin & ~hi_fin
    # one piece per variable, plus a negated second piece for free variables
    first_sign = np.where(lo_fin | free, 1.0, -1.0)
    first_lo = np.where(lo_fin, lp.lo, np.where(free, 0.0, -lp.hi))
    first_hi = np.where(lo_fin, lp.hi, np.inf)
    extra = np.flatnonzero(free)
    pv = np.concatenate([np.arange(lp.n_vars), extra])
    ps = np.concatenate([first_sign, -np.ones(extra.size)])
    los = np.concatenate([first_lo, np.zeros(extra.size)])
    his = np.concatenate([first_hi, np.full(extra.size, np.inf)])
    costs = ps * obj[pv]
    pc = np.arange(pv.size)
    Astruct = (lp.A.tocsc()[:, pv] @ sp.diags(ps)).tocsc()
    n_struct = len(costs)
    sign = np.where(lp.relations == GE, -1.0, 1.0)
    slack = sp.csc_matrix((sign, (np.arange(m), np.arange(m))), shape=(m, m))
    slo = np.zeros(m)
    shi = np.where(lp.relations == EQ, 0.0, np.inf)
    return _Internal(
        A=sp.hstack([Astruct, slack], format="csc"),
        c=np.concatenate([costs, np.zeros(m)]),
        b=lp.rhs.astype(float).copy(),
        lo=np.concatenate([los, slo]),
        hi=np.concatenate([his, shi]),
        n_struct=n_struct,
        piece_col=pc,
        piece_var=pv,
        piece_sign=ps,
    )


# ------------------------------------------------------------------- simplex


class _Simplex:
    def __init__(self, prob: _Internal, max_iter: int | None = None):
        self.p = prob
        m = prob.b.size
        self.m = m
        n_real = prob.c.size
        # starting point: structurals at their lower bound
        x = prob.lo.copy()
        x[prob.n_struct :] = 0.0
        r = prob.b - prob.A[:, : prob.n_struct] @ x[: prob.n_struct]
        slack_sign = prob.A[:, prob.n_struct :].diagonal() if m else np.zeros(0)
        basis = np.empty(m, dtype=np.int64)
        art_rows, art_sign = [], []
        for i in range(m):
            col = prob.n_struct + i
            s = r[i] * slack_sign[i]
            if prob.lo[col] - FEAS_TOL <= s <= prob.hi[col] + FEAS_TOL:
                basis[i] = col
                x[col] = s
            else:
                v = min(max(s, prob.lo[col]), prob.hi[col])
                x[col] = v
                res = r[i] - slack_sign[i] * v
                basis[i] = n_real + len(art_rows)
                art_rows.append(i)
                art_sign.append(1.0 if res >= 0 else -1.0)
        n_art = len(art_rows)
        self.n_real = n_real
        self.n_art = n_art
        if n_art:
            art = sp.csc_matrix((art_sign, (art_rows, np.arange(n_art))), shape=(m, n_art))
            self.A = sp.hstack([prob.A, art], format="csc")
            x = np.concatenate([x, np.abs(r[art_rows] - slack_sign[art_rows] * x[prob.n_struct + np.array(art_rows)])])
        else:
            self.A = prob.A.tocsc()
        self.AT = self.A.T.tocsr()
        N = self.A.shape[1]
        self.lo = np.concatenate([prob.lo, np.zeros(n_art)])
        self.hi = np.concatenate([prob.hi, np.full(n_art, np.inf)])
        self.x = x
        self.basis = basis
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0
        self.max_iter = max_iter or max(20000, 50 * (m + N))
        self.since_refactor = 0
        self.bland = False
        self.stall = 0
        self.refactor()

    # basis inverse -------------------------------------------------------
    def refactor(self):
        m = self.m
        if m == 0:
            self.Binv = np.zeros((0, 0))
            return
        B = self.A[:, self.basis].toarray()
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("basis matrix is singular after refactorization") from exc
        if not np.all(np.isfinite(Binv)) or np.linalg.norm(B @ Binv - np.eye(m), np.inf) > 1e-6:
            raise NumericalBreakdown("basis matrix is numerically singular after refactorization")
        self.Binv = np.asfortranarray(Binv)
        self.since_refactor = 0
        nb = ~self.is_basic
        rhs = self.p.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = Binv @ rhs

    def column(self, j: int) -> np.ndarray:
        start, stop = self.A.indptr[j], self.A.indptr[j + 1]
        rows = self.A.indices[start:stop]
        return self.Binv[:, rows] @ self.A.data[start:stop]

    # main loop ---------------------------------------------------------------
    def _directions(self) -> np.ndarray:
        """+1 for nonbasic columns that may increase, -1 for those that may decrease, else 0."""
        lo, hi, x = self.lo, self.hi, self.x
        at_hi = np.isfinite(hi) & (x >= hi - 1e-12)
        out = np.where(at_hi, -1, 1).astype(np.int8)
        out[(hi - lo <= 0) | self.is_basic] = 0
        return out

    def _segments(self):
        N = self.A.shape[1]
        n_seg = max(1, min(PRICING_SEGMENTS, N // 2000))
        bounds = np.linspace(0, N, n_seg + 1).astype(np.int64)
        return [(int(bounds[i]), int(bounds[i + 1])) for i in range(n_seg)]

    def run(self, cost: np.ndarray) -> str:
        lo, hi, x = self.lo, self.hi, self.x
        direction = self._directions()
        segs = self._segments()
        seg_AT = [self.AT[a:b] for a, b in segs]
        d = np.zeros(cost.size)
        score = np.zeros(cost.size)
        fresh = np.zeros(len(segs), dtype=bool)  # segment's reduced costs match the current basis
        stale = True
        ptr = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalBreakdown(f"simplex hit the iteration limit ({self.max_iter})")
            if stale:
                y = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
                fresh[:] = False
                stale = False
            j = -1
            order = range(len(segs)) if self.bland else [(ptr + i) % len(segs) for i in range(len(segs))]
            for sidx in order:
                a, b = segs[sidx]
                if not fresh[sidx]:
                    d[a:b] = cost[a:b] - seg_AT[sidx] @ y
                    score[a:b] = -d[a:b] * direction[a:b]
                    fresh[sidx] = True
                sc = score[a:b]
                if self.bland:
                    elig = np.flatnonzero(sc > DUAL_TOL)
                    if elig.size:
                        j = a + int(elig[0])
                        break
                else:
                    best = int(np.argmax(sc))
                    if sc[best] > DUAL_TOL:
                        j = a + best
                        ptr = sidx
                        break
            if j < 0:
                self.y, self.d = y, d
                return OPTIMAL
            sigma = float(direction[j])
            alpha = self.column(j)
            delta = -sigma * alpha  # rate of change of x_B per unit step
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            dec = delta < -PIVOT_TOL
            inc = (delta > PIVOT_TOL) & np.isfinite(hib)
            ratio = np.full(self.m, np.inf)
            ratio[dec] = (xb[dec] - lob[dec]) / -delta[dec]
            ratio[inc] = (hib[inc] - xb[inc]) / delta[inc]
            ratio = np.maximum(ratio, 0.0)
            flip = hi[j] - lo[j]
            r = -1
            theta = math.inf
            if self.m and np.isfinite(ratio).any():
                if self.bland:
                    tmin = ratio.min()
                    ties = np.flatnonzero(ratio <= tmin + 1e-12)
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    # Harris pass: relax the bounds, then take the largest pivot among eligible rows
                    relax = np.full(self.m, np.inf)
                    relax[dec] = (xb[dec] - lob[dec] + PIVOT_TOL) / -delta[dec]
                    relax[inc] = (hib[inc] - xb[inc] + PIVOT_TOL) / delta[inc]
                    tmax = relax.min()
                    cand = np.flatnonzero(ratio <= tmax)
                    r = int(cand[np.argmax(np.abs(delta[cand]))])
                theta = ratio[r]
            if flip <= theta:
                if not np.isfinite(flip):
                    return UNBOUNDED
                theta = flip
                r = -1
            self.iterations += 1
            if theta * abs(d[j]) <= 1e-12:
                self.stall += 1
                if self.stall >= BLAND_AFTER:
                    self.bland = True
            else:
                self.stall = 0
                self.bland = False
            if theta > 0:
                x[self.basis] = xb + theta * delta
            if r < 0:
                x[j] = hi[j] if sigma > 0 else lo[j]
                direction[j] = -direction[j]
                score[j] = -score[j]
                continue
            x[j] += sigma * theta
            leave = self.basis[r]
            to_lo = delta[r] < 0
            x[leave] = lob[r] if to_lo else hib[r]
            self.basis[r] = j
            self.is_basic[leave] = False
            self.is_basic[j] = True
            direction[j] = 0
            direction[leave] = 0 if hi[leave] - lo[leave] <= 0 else (1 if to_lo else -1)
            stale = True
            piv = alpha[r]
            if abs(piv) < PIVOT_TOL or self.since_refactor + 1 >= REFACTOR_EVERY:
                self.refactor()
                continue
            row = self.Binv[r] / piv
            self.Binv = _blas.dger(-1.0, alpha, row, a=self.Binv, overwrite_a=True)
            self.Binv[r] = row
            self.since_refactor += 1


def solve_lp(lp: BoundedLP, method: str = "simplex", max_iter: int | None = None) -> LPSolution:
    """Solve a BoundedLP.  ``method="highs"`` delegates to scipy for cross-checks."""
    if method == "highs":
        return _solve_highs(lp)
    if method != "simplex":
        raise ValueError(f"unknown method {method!r}")
    prob = _to_internal(lp)
    s = _Simplex(prob, max_iter=max_iter)
    if s.n_art:
        cost1 = np.zeros(s.A.shape[1])
        cost1[s.n_real :] = 1.0
        s.run(cost1)
        s.refactor()
        infeas = float(s.x[s.n_real :].sum())
        if infeas > FEAS_TOL * (1.0 + np.abs(prob.b).max(initial=0.0)):
            return LPSolution(INFEASIBLE, iterations=s.iterations, info={"phase1": infeas})
        s.hi[s.n_real :] = 0.0
        s.x[s.n_real :] = np.minimum(s.x[s.n_real :], 0.0)
        s.stall, s.bland = 0, False
    cost2 = np.concatenate([prob.c, np.zeros(s.n_art)])
    status = s.run(cost2)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=s.iterations)
    s.refactor()
    y = cost2[s.basis] @ s.Binv if s.m else np.zeros(0)
    z = s.x[: prob.c.size]
    x = np.zeros(lp.n_vars)
    np.add.at(x, prob.piece_var, prob.piece_sign * z[prob.piece_col])
    duals = -y if lp.sense == "max" else y
    reduced = lp.c - lp.A.T @ duals
    return LPSolution(
        OPTIMAL,
        objective=float(lp.c @ x),
        x=x,
        duals=duals,
        reduced_costs=reduced,
        iterations=s.iterations,
    )


def _solve_highs(lp: BoundedLP) -> LPSolution:
    from scipy.optimize import linprog

    c = -lp.c if lp.sense == "max" else lp.c
    le = lp.relations == LE
    ge = lp.relations == GE
    eq = lp.relations == EQ
    A_ub = sp.vstack([lp.A[le], -lp.A[ge]]).tocsr()
    b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]])
    bounds = np.column_stack([np.where(np.isfinite(lp.lo), lp.lo, -np.inf), lp.hi])
    res = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=lp.A[eq] if eq.any() else None,
        b_eq=lp.rhs[eq] if eq.any() else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return LPSolution(INFEASIBLE)
    if res.status == 3:
        return LPSolution(UNBOUNDED)
    if res.status != 0:
        raise NumericalBreakdown(f"HiGHS failed: {res.message}")
    duals = np.zeros(lp.n_rows)
    flip = -1.0 if lp.sense == "max" else 1.0
    if le.any() or ge.any():
        m_ub = res.ineqlin.marginals
        duals[np.flatnonzero(le)] = flip * m_ub[: le.sum()]
        duals[np.flatnonzero(ge)] = -flip * m_ub[le.sum() :]
    if eq.any():
        duals[np.flatnonzero(eq)] = flip * res.eqlin.marginals
    return LPSolution(
        OPTIMAL,
        objective=float(lp.c @ res.x),
        x=res.x,
        duals=duals,
        reduced_costs=lp.c - lp.A.T @ duals,
        iterations=int(res.nit),
    )


def check_solution(lp: BoundedLP, sol: LPSolution) -> dict:
    """Primal, bound and complementary-slackness residuals of an optimal solution."""
    act = lp.A @ sol.x
    viol = np.zeros(lp.n_rows)
    le, ge, eq = lp.relations == LE, lp.relations == GE, lp.relations == EQ
    viol[le] = np.maximum(act[le] - lp.rhs[le], 0)
    viol[ge] = np.maximum(lp.rhs[ge] - act[ge], 0)
    viol[eq] = np.abs(act[eq] - lp.rhs[eq])
    bound = np.maximum(np.maximum(lp.lo - sol.x, sol.x - lp.hi), 0)
    cs = np.abs(sol.duals * (act - lp.rhs))
    d = np.where(np.abs(sol.reduced_costs) <= 1e-12, 0.0, sol.reduced_costs)
    upper_side = d > 0 if lp.sense == "max" else d < 0
    with np.errstate(invalid="ignore"):
        bound_term = np.where(d == 0, 0.0, np.where(upper_side, lp.hi * d, lp.lo * d))
    dual_obj = float(lp.rhs @ sol.duals + bound_term.sum())
    return {
        "row_violation": float((viol / (1 + np.abs(lp.rhs))).max(initial=0.0)),
        "bound_violation": float(bound.max(initial=0.0)),
        "complementary_slackness": float(cs.max(initial=0.0)),
        "dual_objective": float(dual_obj),
    }


# ------------------------------------------------------------------------ MPS


def _num(v: float) -> str:
    # shortest round-trip repr; may overflow the classical 12-character field
    return repr(float(v))


def write_mps(lp: BoundedLP, path: str | Path, name: str = "CALRM") -> None:
    """Fixed-column MPS.  A maximization objective is written negated (MPS minimizes)."""
    sign = -1.0 if lp.sense == "max" else 1.0
    rname = [f"R{i}" for i in range(lp.n_rows)]
    cname = [f"C{j}" for j in range(lp.n_vars)]
    rel_code = {LE: "L", GE: "G", EQ: "E"}
    out = []
    if lp.sense == "max":
        out.append("* objective negated: original problem is a maximization")
    out.append(f"NAME          {name}")
    out.append("ROWS")
    out.append(" N  OBJ")
    for i in range(lp.n_rows):
        out.append(f" {rel_code[lp.relations[i]]}  {rname[i]}")
    out.append("COLUMNS")
    A = lp.A.tocsc()
    for j in range(lp.n_vars):
        entries = []
        if lp.c[j] != 0:
            entries.append(("OBJ", sign * lp.c[j]))
        for p in range(A.indptr[j], A.indptr[j + 1]):
            entries.append((rname[A.indices[p]], A.data[p]))
        if not entries:
            entries.append(("OBJ", 0.0))
        for rn, v in entries:
            out.append(f"    {cname[j]:<8}  {rn:<8}  {_num(v):>12}")
    out.append("RHS")
    for i in range(lp.n_rows):
        if lp.rhs[i] != 0:
            out.append(f"    {'RHS':<8}  {rname[i]:<8}  {_num(lp.rhs[i]):>12}")
    out.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, hi = lp.lo[j], lp.hi[j]
        cj = cname[j]
        if lo == -np.inf and hi == np.inf:
            out.append(f" FR {'BND':<8}  {cj:<8}")
            continue
        if lo == hi:
            out.append(f" FX {'BND':<8}  {cj:<8}  {_num(lo):>12}")
            continue
        if lo == -np.inf:
            out.append(f" MI {'BND':<8}  {cj:<8}")
        elif lo != 0:
            out.append(f" LO {'BND':<8}  {cj:<8}  {_num(lo):>12}")
        if hi != np.inf:
            out.append(f" UP {'BND':<8}  {cj:<8}  {_num(hi):>12}")
    out.append("ENDATA")
    Path(path).write_text("\n".join(out) + "\n")


def read_mps(path: str | Path, sense: str = "min") -> BoundedLP:
    """Read the subset of MPS written by :func:`write_mps` (whitespace separated)."""
    lines = Path(path).read_text().splitlines()
    section = None
    rows: dict[str, int] = {}
    rels: list[str] = []
    obj_row = None
    cols: dict[str, int] = {}
    trip: list[tuple[int, int, float]] = []
    cvec: dict[int, float] = {}
    rhs: dict[int, float] = {}
    bounds: dict[int, list[float]] = {}
    code = {"L": LE, "G": GE, "E": EQ}
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("*"):
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        tok = line.split()
        try:
            if section == "ROWS":
                if tok[0] == "N":
                    obj_row = tok[1]
                else:
                    rows[tok[1]] = len(rels)
                    rels.append(code[tok[0]])
            elif section == "COLUMNS":
                j = cols.setdefault(tok[0], len(cols))
                for rn, v in zip(tok[1::2], tok[2::2]):
                    if rn == obj_row:
                        cvec[j] = float(v)
                    else:
                        trip.append((rows[rn], j, float(v)))
            elif section == "RHS":
                for rn, v in zip(tok[1::2], tok[2::2]):
                    rhs[rows[rn]] = float(v)
            elif section == "BOUNDS":
                kind, j = tok[0], cols[tok[2]]
                b = bounds.setdefault(j, [0.0, np.inf])
                v = float(tok[3]) if len(tok) > 3 else 0.0
                if kind == "UP":
                    b[1] = v
                elif kind == "LO":
                    b[0] = v
                elif kind == "FX":
                    b[0] = b[1] = v
                elif kind == "FR":
                    b[0], b[1] = -np.inf, np.inf
                elif kind == "MI":
                    b[0] = -np.inf
                else:
                    raise KeyError(kind)
        except (KeyError, IndexError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}", f"cannot parse {line.strip()!r}") from exc
    m, n = len(rels), len(cols)
    A = sp.coo_matrix(
        ([t[2] for t in trip], ([t[0] for t in trip], [t[1] for t in trip])), shape=(m, n)
    ).tocsr()
    c = np.zeros(n)
    for j, v in cvec.items():
        c[j] = v
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    for j, (l, h) in bounds.items():
        lo[j], hi[j] = l, h
    if sense == "max":
        c = -c
    return BoundedLP(sense, c, A, np.array(rels, dtype=object), b, lo, hi)
