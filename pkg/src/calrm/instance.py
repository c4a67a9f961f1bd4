"""Network instances, the hub-and-spoke generator and the named small instances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import lognorm

from calrm.demand import DemandModel, PROB_TOL
from calrm.errors import DimensionMismatch, ParamOutOfRange, ParseError, UnknownName, ValidationError


@dataclass(frozen=True)
class NetworkInstance:
    capacities: np.ndarray  # (L,) positive ints
    revenues: np.ndarray  # (J,)
    usage: np.ndarray  # (L, J) 0/1
    arrivals: np.ndarray  # (K, T, J), rows sum to 1
    null_product_index: int | None = None

    def __post_init__(self):
        cap = np.asarray(self.capacities)
        if cap.ndim != 1 or cap.size == 0:
            raise ValidationError("capacities must be a nonempty vector")
        if not np.all(np.equal(np.mod(cap, 1), 0)) or np.any(cap < 1):
            raise ValidationError(f"capacities must be positive integers, got {cap.tolist()}")
        cap = cap.astype(np.int64)
        rev = np.asarray(self.revenues, dtype=float)
        usage = np.asarray(self.usage)
        arr = np.asarray(self.arrivals, dtype=float)
        object.__setattr__(self, "capacities", cap)
        object.__setattr__(self, "revenues", rev)
        object.__setattr__(self, "arrivals", arr)
        L, J = cap.size, rev.size
        if usage.shape != (L, J):
            raise DimensionMismatch(f"usage has shape {usage.shape}, expected {(L, J)}")
        if not np.all((usage == 0) | (usage == 1)):
            raise ValidationError("usage entries must be 0 or 1")
        usage = usage.astype(np.int64)
        object.__setattr__(self, "usage", usage)
        if not np.all(np.isfinite(rev)) or np.any(rev < 0):
            raise ValidationError("revenues must be finite and nonnegative")
        if arr.ndim != 3 or arr.shape[2] != J:
            raise DimensionMismatch(f"arrivals has shape {arr.shape}, expected (K, T, {J})")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("arrival probabilities must be finite and nonnegative")
        sums = arr.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            k, t = bad[0]
            raise ValidationError(
                f"arrival row (stage {k + 1}, period {t + 1}) sums to {sums[k, t]!r}"
            )
        n = self.null_product_index
        if n is not None:
            if not 0 <= n < J:
                raise ValidationError(f"null_product_index {n} out of range")
            if rev[n] != 0 or usage[:, n].any():
                raise ValidationError("null product must have zero revenue and no usage")
        for j in range(J):
            if j != n and not usage[:, j].any():
                raise ValidationError(f"product {j} uses no resource")
        for a in (cap, rev, usage, arr):
            a.setflags(write=False)

    @property
    def n_resources(self) -> int:
        return self.capacities.size

    @property
    def n_products(self) -> int:
        return self.revenues.size

    @property
    def K(self) -> int:
        return self.arrivals.shape[0]

    @property
    def T(self) -> int:
        return self.arrivals.shape[1]

    @property
    def max_usage(self) -> int:
        """L: the largest number of resources any product uses."""
        return int(self.usage.sum(axis=0).max())

    @property
    def c_min(self) -> int:
        return int(self.capacities.min())

    def real_products(self) -> np.ndarray:
        return np.array([j for j in range(self.n_products) if j != self.null_product_index], dtype=int)

    def check_compatible(self, demand: DemandModel) -> None:
        if (demand.K, demand.T) != (self.K, self.T):
            raise DimensionMismatch(
                f"instance has (K, T) = {(self.K, self.T)}, demand model has {(demand.K, demand.T)}"
            )

    def to_dict(self) -> dict:
        return {
            "resources": self.capacities.tolist(),
            "products": [
                {"revenue": float(self.revenues[j]), "usage": self.usage[:, j].tolist()}
                for j in range(self.n_products)
            ],
            "arrivals": self.arrivals.tolist(),
            "null_product_index": self.null_product_index,
        }

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return (
            self.null_product_index == other.null_product_index
            and np.array_equal(self.capacities, other.capacities)
            and np.array_equal(self.revenues, other.revenues)
            and np.array_equal(self.usage, other.usage)
            and np.array_equal(self.arrivals, other.arrivals)
        )

    __hash__ = None


def instance_to_dict(inst: NetworkInstance, demand: DemandModel) -> dict:
    doc = inst.to_dict()
    doc["demand"] = demand.to_dict()
    return doc


def instance_from_dict(doc: dict, base_dir: Path | None = None) -> tuple[NetworkInstance, DemandModel]:
    for key in ("resources", "products", "arrivals"):
        if key not in doc:
            raise ParseError(key, "missing field")
    products = doc["products"]
    if not isinstance(products, list) or not products:
        raise ParseError("products", "expected a nonempty list")
    revenues, cols = [], []
    for j, p in enumerate(products):
        for key in ("revenue", "usage"):
            if key not in p:
                raise ParseError(f"products[{j}].{key}", "missing field")
        revenues.append(p["revenue"])
        cols.append(p["usage"])
    try:
        usage = np.array(cols, dtype=float).T
        arrivals = np.array(doc["arrivals"], dtype=float)
        caps = np.array(doc["resources"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError("arrivals", str(exc)) from exc
    if usage.ndim != 2:
        raise ParseError("products", "usage vectors have inconsistent lengths")
    inst = NetworkInstance(
        capacities=caps,
        revenues=np.array(revenues, dtype=float),
        usage=usage,
        arrivals=arrivals,
        null_product_index=doc.get("null_product_index"),
    )
    dem = doc.get("demand")
    if isinstance(dem, dict):
        demand = DemandModel.from_dict(dem)
    elif isinstance(dem, str):
        p = Path(dem)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        demand = DemandModel.load(p)
    else:
        raise ParseError("demand", "expected an embedded model or a file path")
    inst.check_compatible(demand)
    return inst, demand


def load_instance(path: str | Path) -> tuple[NetworkInstance, DemandModel]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), str(exc)) from exc
    return instance_from_dict(doc, base_dir=path.parent)


def save_instance(path: str | Path, inst: NetworkInstance, demand: DemandModel) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst, demand), indent=1))


# ---------------------------------------------------------------- hub and spoke


@dataclass(frozen=True)
class HubSpokeConfig:
    K: int
    spoke_count: int = 3
    base_mean: float = 100.0
    cv: float = 0.3
    rho: float = 0.5
    kappa: float = 8.0
    beta: float = 1.6
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ParamOutOfRange(f"rho must lie in [0, 1), got {self.rho}")
        if self.base_mean < 2:
            raise ParamOutOfRange(f"base_mean must be at least 2, got {self.base_mean}")
        if self.beta <= 0 or self.kappa <= 0 or self.cv <= 0:
            raise ParamOutOfRange("beta, kappa and cv must be positive")
        if self.K < 1 or self.spoke_count < 1:
            raise ParamOutOfRange("K and spoke_count must be positive")

    @property
    def T(self) -> int:
        return math.ceil((1 + 3 * self.cv) * self.base_mean - 1e-9)


def lognormal_row(mean: float, cv: float, T: int) -> np.ndarray:
    """P{ceil(X) = d} for d in 1..T, X log-normal with the given mean and cv, upper tail lumped at T."""
    s2 = math.log1p(cv * cv)
    dist = lognorm(s=math.sqrt(s2), scale=math.exp(math.log(mean) - s2 / 2))
    cdf = dist.cdf(np.arange(1, T + 1, dtype=float))
    row = np.diff(np.concatenate([[0.0], cdf]))
    row[-1] += 1.0 - cdf[-1]
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def hub_spoke_demand(cfg: HubSpokeConfig) -> DemandModel:
    T, m = cfg.T, cfg.base_mean
    q = np.arange(1, T + 1)
    rows = np.stack([lognormal_row(cfg.rho * qq + (1 - cfg.rho) * m, cfg.cv, T) for qq in q])
    tr = np.broadcast_to(rows, (cfg.K, T, T)).copy()
    return DemandModel(K=cfg.K, T=T, transition=tr, initial_prev_demand=min(int(round(m)), T))


def generate_hub_spoke(cfg: HubSpokeConfig) -> tuple[NetworkInstance, DemandModel]:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.spoke_count
    # node 0 is the hub, nodes 1..n are spokes
    loc = np.vstack([[50.0, 50.0], rng.uniform(0.0, 100.0, size=(n, 2))])
    # leg n + s - 1 flies hub -> s (out of the hub), leg s - 1 flies s -> hub
    def legs(o, d):
        if o == 0:
            return [n + d - 1]
        if d == 0:
            return [o - 1]
        return [o - 1, n + d - 1]

    pairs = [(o, d) for o in range(n + 1) for d in range(n + 1) if o != d]
    zeta = rng.uniform(0.0, 1.0, size=len(pairs))
    gamma = zeta / zeta.sum()
    demand = hub_spoke_demand(cfg)
    K, T = cfg.K, demand.T
    KT = K * T
    lo_tau, hi_tau = math.ceil(KT / 2), math.ceil(2 * KT / 3)
    tau = rng.integers(lo_tau, hi_tau + 1, size=len(pairs))

    J = 2 * len(pairs)
    usage = np.zeros((2 * n, J), dtype=int)
    revenues = np.zeros(J)
    arrivals = np.zeros((K, T, J))
    g = (np.arange(K)[:, None] * T + np.arange(1, T + 1)[None, :]).astype(float)  # global period
    F = (KT + 1 - g) / KT
    for idx, (o, d) in enumerate(pairs):
        low, high = 2 * idx, 2 * idx + 1
        for i in legs(o, d):
            usage[i, low] = usage[i, high] = 1
        dist = float(np.linalg.norm(loc[o] - loc[d]))
        revenues[low], revenues[high] = dist, cfg.kappa * dist
        span = KT - tau[idx]
        H = np.maximum(g - tau[idx], 0.0) / span if span > 0 else np.zeros_like(g)
        arrivals[:, :, low] = gamma[idx] * F / (F + H)
        arrivals[:, :, high] = gamma[idx] * H / (F + H)
    arrivals /= arrivals.sum(axis=2, keepdims=True)

    tail = demand_tail(demand)
    xi = np.einsum("ij,kt,ktj->i", usage, tail, arrivals)
    caps = np.maximum(np.ceil(xi / cfg.beta - 1e-12), 1).astype(int)
    inst = NetworkInstance(capacities=caps, revenues=revenues, usage=usage, arrivals=arrivals)
    return inst, demand


def demand_tail(demand: DemandModel) -> np.ndarray:
    """P{D^k >= t} as a (K, T) array."""
    from calrm.demand import derive_probabilities

    return derive_probabilities(demand).tail


# ------------------------------------------------------------ named instances


@dataclass(frozen=True)
class NamedInstance:
    name: str
    params: dict
    instance: NetworkInstance
    demand: DemandModel
    known: dict = field(default_factory=dict)  # exactly known reference values


def _point_rows(K, T, dist_by_stage):
    tr = np.zeros((K, T, T))
    for k, dist in enumerate(dist_by_stage):
        if np.ndim(dist) == 1:
            tr[k] = np.broadcast_to(dist, (T, T))
        else:
            tr[k] = dist
    return tr


def _unit(T, d, weight=1.0):
    v = np.zeros(T)
    v[d - 1] = weight
    return v


def _single(capacity, revenues, usage_cols, arrivals, null=None):
    return NetworkInstance(
        capacities=np.array(capacity, dtype=int).reshape(-1),
        revenues=np.array(revenues, dtype=float),
        usage=np.array(usage_cols, dtype=int),
        arrivals=np.array(arrivals, dtype=float),
        null_product_index=null,
    )


def _app_e1(params):
    K, T = 2, 2
    m2 = np.array([[0.0, 1.0], [0.5, 0.5]])
    tr = _point_rows(K, T, [np.array([0.5, 0.5]), m2])
    arr = np.zeros((K, T, 3))
    arr[:, 0, 2] = 1.0  # dummy period: null request
    arr[0, 1, 0] = 1.0
    arr[1, 1, :] = [0.5, 0.5, 0.0]
    inst = _single([1], [1, 2, 0], [[1, 1, 0]], arr, null=2)
    known = {"prf": Fraction(5, 4), "offline": Fraction(11, 8)}
    return inst, DemandModel(K, T, tr, 1), known


def _app_e2(params):
    K, T = 2, 1
    tr = np.ones((K, 1, 1))
    arr = np.array([[[0.5, 0.5, 0.0]], [[0.0, 0.5, 0.5]]])
    inst = _single([1], [1, 2, 0], [[1, 1, 0]], arr, null=2)
    known = {"prf": Fraction(2), "offline": Fraction(7, 4)}
    return inst, DemandModel(K, T, tr, 1), known


def _app_f(params):
    K = int(params.get("K", 8))
    if K < 2 or K % 2:
        raise ParamOutOfRange(f"appF needs an even K >= 2, got {K}")
    arr = np.full((K, 1, 2), 0.5)
    inst = _single([K // 2], [1, 0], [[1, 0]], arr, null=1)
    known = {"prf": Fraction(K, 2)}
    if K == 8:
        known["dp"] = Fraction(884, 256)
    return inst, DemandModel(K, 1, np.ones((K, 1, 1)), 1), known


def _app_g(params):
    C = int(params.get("C", 8))
    if C < 8 or C % 2:
        raise ParamOutOfRange(f"appG needs an even C >= 8, got {C}")
    K, T = 3, C + 1
    half = C // 2
    stage1 = _unit(T, 1, 0.5) + _unit(T, T, 0.5)
    tr = _point_rows(K, T, [stage1, _unit(T, 2), _unit(T, half + 1)])
    arr = np.zeros((K, T, 3))
    arr[:, :, 2] = 1.0
    arr[0, 1:, :] = [1.0, 0.0, 0.0]
    arr[1, 1, :] = [1.0, 0.0, 0.0]
    arr[2, 1:half, :] = [1.0, 0.0, 0.0]
    arr[2, half, :] = [0.0, 1.0, 0.0]
    inst = _single([C + 1], [1, C / 4, 0], [[1, 1, 0]], arr, null=2)
    known = {"prf": Fraction(5 * C, 4), "dp": Fraction(C)}
    return inst, DemandModel(K, T, tr, 1), known


def _alpha(params, low, default):
    a = params.get("alpha", params.get("α", default))
    if int(a) != a or a < low:
        raise ParamOutOfRange(f"alpha must be an integer >= {low}, got {a}")
    return int(a)


def _app_k1(params):
    a = _alpha(params, 2, 2)
    T = a**4
    row = _unit(T, a, 1 - Fraction(1, a * a)) + _unit(T, T, Fraction(1, a * a))
    tr = np.broadcast_to(row.astype(float), (1, T, T)).copy()
    inst = _single([a**3], [1], [[1]], np.ones((1, T, 1)))
    known = {}
    if a == 2:
        known = {"dp": Fraction(7, 2), "prf": Fraction(7, 2), "naive-cum": Fraction(11, 2)}
    return inst, DemandModel(1, T, tr, 1), known


def _app_k2(params):
    K, T = 2, 2
    tr = np.full((K, T, T), 0.5)
    inst = _single([3], [1], [[1]], np.ones((K, T, 1)))
    known = {"dp": Fraction(11, 4), "prf": Fraction(11, 4), "naive-unw": Fraction(5, 2)}
    return inst, DemandModel(K, T, tr, 1), known


def _app_n(params):
    a = _alpha(params, 2, 3)
    T = a**3
    p_hi = Fraction(1, 2 * (a - 1))
    row = _unit(T, a, 1 - p_hi) + _unit(T, T, p_hi)
    tr = np.broadcast_to(row.astype(float), (1, T, T)).copy()
    inst = _single([a * a], [1], [[1]], np.ones((1, T, 1)))
    known = {}
    if a >= 3:
        # the fluid LP sees the two-point law; the expected-value LP sees only the mean
        known["prf"] = Fraction(3 * a, 2)
        known["dp"] = Fraction(3 * a, 2)
        known["exf"] = Fraction(a * a + 3 * a, 2)
    return inst, DemandModel(1, T, tr, 1), known


_REGISTRY = {
    "appE1": _app_e1,
    "appE2": _app_e2,
    "appF": _app_f,
    "appG": _app_g,
    "appK1": _app_k1,
    "appK2": _app_k2,
    "appN": _app_n,
}

FIXTURE_NAMES = tuple(_REGISTRY)


def counterexample(name: str, params: dict | None = None) -> NamedInstance:
    params = dict(params or {})
    try:
        build = _REGISTRY[name]
    except KeyError:
        raise UnknownName(f"unknown instance {name!r}; choose from {', '.join(_REGISTRY)}") from None
    inst, demand, known = build(params)
    inst.check_compatible(demand)
    return NamedInstance(name=name, params=params, instance=inst, demand=demand, known=known)


def random_instance(
    rng: np.random.Generator,
    K: int,
    T: int,
    L: int,
    J: int,
    cmax: int,
    full_support: bool = True,
    independent: bool = False,
) -> tuple[NetworkInstance, DemandModel]:
    """Small random instance for property tests; every product uses at least one resource."""
    usage = np.zeros((L, J), dtype=int)
    for j in range(J):
        while not usage[:, j].any():
            usage[:, j] = rng.integers(0, 2, size=L)
    caps = rng.integers(1, cmax + 1, size=L)
    revenues = np.round(rng.uniform(1.0, 10.0, size=J), 3)
    arr = rng.dirichlet(np.ones(J), size=(K, T))
    shape = (K, 1, T) if independent else (K, T, T)
    raw = rng.uniform(0.05 if full_support else 0.0, 1.0, size=shape)
    if not full_support:
        raw[rng.random(shape) < 0.3] = 0.0
        raw[..., 0] += 1e-3 * (raw.sum(axis=-1) == 0)
    tr = raw / raw.sum(axis=-1, keepdims=True)
    tr = np.broadcast_to(tr, (K, T, T)).copy()
    d0 = int(rng.integers(1, T + 1))
    return (
        NetworkInstance(capacities=caps, revenues=revenues, usage=usage, arrivals=arr),
        DemandModel(K, T, tr, d0),
    )


def enumerate_paths(demand: DemandModel):
    """Yield (path, probability) for all positive-probability demand paths."""
    T = demand.T

    def rec(k, prev, prob, path):
        if k == demand.K:
            yield tuple(path), prob
            return
        row = demand.transition[k, prev - 1]
        for d in range(1, T + 1):
            if row[d - 1] > 0:
                yield from rec(k + 1, d, prob * row[d - 1], path + [d])

    yield from rec(0, demand.initial_prev_demand, 1.0, [])


def count_paths(demand: DemandModel) -> int:
    """Number of positive-probability demand paths, by a forward pass."""
    counts = np.zeros(demand.T, dtype=object)
    counts[demand.initial_prev_demand - 1] = 1
    for k in range(demand.K):
        pos = (demand.transition[k] > 0).astype(object)
        counts = counts @ pos
    return int(sum(counts))

