"""Calendar-aware Markov demand: stage demands D^1..D^K on {1..T}.

Arrays are 0-based internally; demand values and stage numbers in the public
API are 1-based, matching how the model is usually written down.  So
``transition[k - 1, q - 1, p - 1] = P{D^k = p | D^{k-1} = q}``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from calrm.errors import ConditioningOnNull, InvalidTarget, ParseError, ValidationError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class DemandModel:
    K: int
    T: int
    transition: np.ndarray  # (K, T, T), row-stochastic in the last axis
    initial_prev_demand: int

    def __post_init__(self):
        tr = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "transition", tr)
        tr.setflags(write=False)
        if self.K < 1 or self.T < 1:
            raise ValidationError(f"need K >= 1 and T >= 1, got K={self.K}, T={self.T}")
        if tr.shape != (self.K, self.T, self.T):
            raise ValidationError(
                f"transition has shape {tr.shape}, expected {(self.K, self.T, self.T)}"
            )
        if not np.all(np.isfinite(tr)) or np.any(tr < 0):
            raise ValidationError("transition entries must be finite and nonnegative")
        sums = tr.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            k, q = bad[0]
            raise ValidationError(
                f"transition row (stage {k + 1}, prev demand {q + 1}) sums to {sums[k, q]!r}"
            )
        if not 1 <= self.initial_prev_demand <= self.T:
            raise ValidationError(
                f"initial_prev_demand={self.initial_prev_demand} outside 1..{self.T}"
            )

    def is_independent(self, tol: float = PROB_TOL) -> bool:
        """True when every row of every stage matrix is the same distribution."""
        return bool(np.all(np.abs(self.transition - self.transition[:, :1, :]) <= tol))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "T": self.T,
            "initial_prev_demand": self.initial_prev_demand,
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict, path: str = "demand") -> "DemandModel":
        for key in ("K", "T", "initial_prev_demand", "transition"):
            if key not in doc:
                raise ParseError(f"{path}.{key}", "missing field")
        try:
            tr = np.array(doc["transition"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}.transition", str(exc)) from exc
        return cls(
            K=int(doc["K"]),
            T=int(doc["T"]),
            transition=tr,
            initial_prev_demand=int(doc["initial_prev_demand"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "DemandModel":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), str(exc)) from exc
        return cls.from_dict(doc)

    def __eq__(self, other):
        if not isinstance(other, DemandModel):
            return NotImplemented
        return (
            self.K == other.K
            and self.T == other.T
            and self.initial_prev_demand == other.initial_prev_demand
            and np.array_equal(self.transition, other.transition)
        )

    __hash__ = None


@dataclass(frozen=True)
class StageProbabilities:
    """Precomputed demand probabilities.

    w[k-1, t-1, q-1]        = P{D^k >= t, D^{k-1} = q}
    marginal[k, q-1]        = P{D^k = q}, with row 0 the point mass at D^0
    survival[k-1, t-1, q-1] = P{D^k >= t+1 | D^k >= t, D^{k-1} = q} (0 on null events)
    tail[k-1, t-1]          = P{D^k >= t}
    """

    w: np.ndarray
    marginal: np.ndarray
    survival: np.ndarray
    eps: float
    joint: np.ndarray = field(repr=False)  # joint[k-1, q-1, p-1] = P{D^{k-1}=q, D^k=p}

    @property
    def tail(self) -> np.ndarray:
        return self.w.sum(axis=2)


def derive_probabilities(model: DemandModel) -> StageProbabilities:
    K, T = model.K, model.T
    tr = model.transition
    marginal = np.zeros((K + 1, T))
    marginal[0, model.initial_prev_demand - 1] = 1.0
    joint = np.empty((K, T, T))
    for k in range(K):
        joint[k] = marginal[k][:, None] * tr[k]
        marginal[k + 1] = joint[k].sum(axis=0)
    # w[k, t, q] = sum_{p >= t} joint[k, q, p]
    w = np.flip(np.cumsum(np.flip(joint, axis=2), axis=2), axis=2).transpose(0, 2, 1).copy()
    nxt = np.zeros_like(w)
    nxt[:, :-1, :] = w[:, 1:, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        survival = np.where(w > 0, nxt / np.where(w > 0, w, 1.0), 0.0)
    survival = np.clip(survival, 0.0, 1.0)
    for arr in (w, marginal, survival, joint):
        arr.setflags(write=False)
    return StageProbabilities(
        w=w, marginal=marginal, survival=survival, eps=min_transition_mass(model), joint=joint
    )


def min_transition_mass(model: DemandModel) -> float:
    return float(model.transition.min())


def validate_model(model: DemandModel) -> float:
    """Return the full-support mass and warn when it is zero."""
    eps = min_transition_mass(model)
    if eps == 0.0:
        warnings.warn(
            "some transition probability is zero; the asymptotic tuning rule is undefined",
            stacklevel=2,
        )
    return eps


def _propagator(model: DemandModel, start: int, stop: int) -> np.ndarray:
    """P{D^stop = q | D^start = r} as a (T, T) matrix indexed [r, q]; stages 1-based."""
    out = np.eye(model.T)
    for k in range(start + 1, stop + 1):
        out = out @ model.transition[k - 1]
    return out


def conditional_joint_all(model: DemandModel, probs: StageProbabilities, k: int) -> np.ndarray:
    """P{D^l >= s, D^{l-1} = p | D^{k-1} = q} for all l < k, s, p, q.

    Returns shape (k-1, T, T, T) indexed [l-1, s-1, p-1, q-1].  Entries for a q
    with P{D^{k-1} = q} = 0 are left at zero.
    """
    T = model.T
    out = np.zeros((k - 1, T, T, T))
    denom = probs.marginal[k - 1]
    live = denom > 0
    for ell in range(1, k):
        prop = _propagator(model, ell, k - 1)  # [r, q]
        a = probs.joint[ell - 1][:, :, None] * prop[None, :, :]  # [p, r, q]
        tail = np.flip(np.cumsum(np.flip(a, axis=1), axis=1), axis=1)  # [p, s, q]
        out[ell - 1][:, :, live] = tail.transpose(1, 0, 2)[:, :, live] / denom[live]
    return out


def conditional_joint(
    model: DemandModel, probs: StageProbabilities, k: int, q: int
) -> np.ndarray:
    """P{D^l >= s, D^{l-1} = p | D^{k-1} = q} as an array indexed [l-1, s-1, p-1]."""
    if not 1 <= k <= model.K or not 1 <= q <= model.T:
        raise ValueError(f"stage {k} / demand {q} out of range")
    if probs.marginal[k - 1, q - 1] <= 0:
        raise ConditioningOnNull(f"P{{D^{k - 1} = {q}}} = 0")
    return conditional_joint_all(model, probs, k)[..., q - 1]


@dataclass(frozen=True)
class DemandPath:
    demands: tuple[int, ...]

    def __post_init__(self):
        if any(d < 1 for d in self.demands):
            raise ValidationError(f"demands must be positive, got {self.demands}")


def sample_path(model: DemandModel, rng: np.random.Generator) -> DemandPath:
    """Draw D^1..D^K, one uniform per stage, by inverting the row CDF."""
    cdf = np.cumsum(model.transition, axis=2)
    prev = model.initial_prev_demand
    out = []
    for k in range(model.K):
        u = rng.random()
        row = cdf[k, prev - 1]
        d = int(np.searchsorted(row, u, side="right")) + 1
        d = min(d, model.T)  # guards u beyond a row total of 1 - 1e-16
        out.append(d)
        prev = d
    return DemandPath(tuple(out))


@dataclass(frozen=True)
class CalibrationTarget:
    """Target law of total demand over {K, ..., K*T}; ``pmf[i] = P{total = K + i}``."""

    K: int
    T: int
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if self.K < 1 or self.T < 1:
            raise InvalidTarget(f"need K, T >= 1, got K={self.K}, T={self.T}")
        size = self.K * (self.T - 1) + 1
        if pmf.shape != (size,):
            raise InvalidTarget(f"pmf needs {size} atoms for support {self.K}..{self.K * self.T}")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
            raise InvalidTarget("pmf entries must be finite and nonnegative")
        if abs(pmf.sum() - 1.0) > PROB_TOL:
            raise InvalidTarget(f"pmf sums to {pmf.sum()!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationTarget":
        for key in ("K", "T", "pmf"):
            if key not in doc:
                raise ParseError(f"target.{key}", "missing field")
        return cls(int(doc["K"]), int(doc["T"]), np.array(doc["pmf"], dtype=float))


def calibrate_total_demand(target: CalibrationTarget, K: int | None = None, T: int | None = None) -> DemandModel:
    """Build a chain whose total demand has exactly the target law.

    Stage k draws Z^k ~ f^k only if every earlier stage hit the cap T, and
    otherwise has demand 1.  f^k is the target law of the excess over
    (k-1)(T-1) + K, conditioned on reaching it, with the upper tail lumped at T.
    """
    K = target.K if K is None else K
    T = target.T if T is None else T
    if (K, T) != (target.K, target.T):
        raise InvalidTarget(f"target is for K={target.K}, T={target.T}, asked for K={K}, T={T}")
    pmf = target.pmf
    # survival_from[i] = P{total - K >= i}
    survival_from = np.concatenate([np.cumsum(pmf[::-1])[::-1], [0.0]])
    tr = np.zeros((K, T, T))
    tr[:, :, 0] = 1.0
    for k in range(1, K + 1):
        base = (k - 1) * (T - 1)  # offset of the conditioning threshold above K
        denom = survival_from[base]
        f = np.zeros(T)
        if denom > 0:
            f[: T - 1] = pmf[base : base + T - 1] / denom
            f[T - 1] = survival_from[base + T - 1] / denom
            f /= f.sum()
        else:
            f[0] = 1.0
        tr[k - 1, T - 1] = f
    return DemandModel(K=K, T=T, transition=tr, initial_prev_demand=T)


def total_demand_pmf(model: DemandModel) -> np.ndarray:
    """Exact law of D^1 + ... + D^K on {K..KT} by forward propagation over (sum, last demand)."""
    K, T = model.K, model.T
    # state[s, q]: P{partial sum = s, last demand = q}
    state = np.zeros((K * T + 1, T))
    state[0, model.initial_prev_demand - 1] = 1.0
    for k in range(K):
        nxt = np.zeros_like(state)
        for p in range(T):
            mass = state @ model.transition[k][:, p]
            nxt[p + 1 :, p] += mass[: K * T + 1 - (p + 1)]
        state = nxt
    return state.sum(axis=1)[K:]
