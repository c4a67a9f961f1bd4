"""Command-line entry point: ``calrm <command> ...`` or ``python -m calrm``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from calrm.demand import CalibrationTarget, DemandModel, calibrate_total_demand, derive_probabilities
from calrm.errors import (
    CalrmError,
    EnumerationTooLarge,
    NumericalBreakdown,
    StateSpaceTooLarge,
    TooManyProducts,
    ValidationError,
)
from calrm.exact import offline_bound, solve_dp
from calrm.fluid import BoundKind, build_bound_lp, exf_solution, prf_solution, solve_bound
from calrm.instance import (
    FIXTURE_NAMES,
    HubSpokeConfig,
    counterexample,
    generate_hub_spoke,
    load_instance,
    save_instance,
)
from calrm.lp import write_mps
from calrm.policy import (
    SimConfig,
    exf_policy,
    indep_policy,
    prf_policy,
    recommended_gamma,
    simulate,
)

log = logging.getLogger("calrm")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
ORACLES = ("dp", "offline")
BOUND_CHOICES = tuple(k.value for k in BoundKind) + ORACLES
SIM_COLUMNS = ["policy", "gamma", "n_paths", "mean", "stderr", "bound_prf", "bound_exf", "ratio_prf"]
EXPERIMENT_COLUMNS = [
    "cell", "K", "rho", "T", "bound_prf", "bound_exf", "policy_prf", "stderr_prf",
    "policy_exf", "stderr_exf", "ratio_prf", "ratio_exf", "bound_gap_pct", "policy_gap_pct", "status",
]


class UsageError(CalrmError):
    pass


# ----------------------------------------------------------------- helpers


def _parse_value(text: str):
    try:
        v = float(text)
    except ValueError:
        return text
    return int(v) if v.is_integer() and "." not in text else v


def _parse_params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--param expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k in ("α", "a"):
            k = "alpha"
        out[k] = _parse_value(v.strip())
    return out


def _load(args):
    if getattr(args, "instance", None) and getattr(args, "fixture", None):
        raise UsageError("give either --instance or --fixture, not both")
    if getattr(args, "instance", None):
        return load_instance(args.instance)
    if getattr(args, "fixture", None):
        named = counterexample(args.fixture, _parse_params(args.param))
        return named.instance, named.demand
    raise UsageError("an instance is required (--instance PATH or --fixture NAME)")


def _split_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _write_csv(rows: list[dict], columns: list[str], out: str | None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r.get(c, "")) for c in columns})
    text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _resolve_gamma(text: str, instance, model, probs) -> float:
    if text == "auto-asymptotic":
        return recommended_gamma(instance, model, probs, "asymptotic")
    if text == "auto-constant":
        return recommended_gamma(instance, model, probs, "constant_factor")
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--gamma must be a number, auto-asymptotic or auto-constant; got {text!r}") from None


def _build_policy(kind: str, instance, model, probs, gamma: float, prf=None, exf=None):
    if kind == "prf":
        return prf_policy(prf or prf_solution(instance, model, probs), instance, gamma)
    if kind == "indep":
        return indep_policy(prf or prf_solution(instance, model, probs), instance, probs, gamma)
    if kind == "exf":
        return exf_policy(exf or exf_solution(instance, model, probs), instance, probs, gamma)
    raise UsageError(f"unknown policy {kind!r}")


# ---------------------------------------------------------------- commands


def cmd_bounds(args) -> int:
    instance, model = _load(args)
    probs = derive_probabilities(model)
    kinds = _split_list(args.bound or "")
    kinds += _split_list(args.oracle or "")
    if not kinds:
        kinds = ["prf"]
    rows = []
    for kind in kinds:
        if kind not in BOUND_CHOICES:
            raise UsageError(f"unknown bound {kind!r}; choose from {', '.join(BOUND_CHOICES)}")
        start = time.perf_counter()
        if kind == "dp":
            value = solve_dp(instance, model, probs).opt
            extra = ""
        elif kind == "offline":
            res = offline_bound(instance, model, mode=args.offline_mode, n_paths=args.paths, seed=args.seed)
            value = res.value
            extra = "" if res.stderr is None else f"stderr={res.stderr:.6g}"
        else:
            sol = solve_bound(kind, instance, model, probs, method=args.method)
            value = sol.value
            extra = f"iterations={sol.lp_solution.iterations}" if sol.lp_solution else ""
            if args.export_x and kind in ("prf", "prf-full"):
                _export_prf(sol.x, args.export_x)
        rows.append({"bound": kind, "value": value, "seconds": time.perf_counter() - start, "note": extra})
        if args.dump_lp and kind in [k.value for k in BoundKind]:
            write_mps(build_bound_lp(kind, instance, model, probs), args.dump_lp)
            args.dump_lp = None  # first LP bound only
    text = _write_csv(rows, ["bound", "value", "seconds", "note"], args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        for r in rows:
            print(f"{r['bound']:>12}  {r['value']:.10g}")
    return EXIT_OK


def _export_prf(x: np.ndarray, path: str):
    K, T, _, J = x.shape
    rows = []
    for k, t, q, j in zip(*np.nonzero(x > 0)):
        rows.append({"k": k + 1, "t": t + 1, "q": q + 1, "j": j, "x": float(x[k, t, q, j])})
    _write_csv(rows, ["k", "t", "q", "j", "x"], path)


def cmd_simulate(args) -> int:
    instance, model = _load(args)
    probs = derive_probabilities(model)
    gamma = _resolve_gamma(args.gamma, instance, model, probs)
    prf = prf_solution(instance, model, probs, method=args.method)
    exf = exf_solution(instance, model, probs, method=args.method)
    rows = []
    for kind in _split_list(args.policy):
        pol = _build_policy(kind, instance, model, probs, gamma, prf, exf)
        st = simulate(instance, model, pol, SimConfig(args.paths, args.seed), probs)
        if st.capacity_violations:
            log.error("capacity violated on %d paths", st.capacity_violations)
        rows.append(
            {
                "policy": kind,
                "gamma": gamma,
                "n_paths": args.paths,
                "mean": st.mean,
                "stderr": st.stderr,
                "bound_prf": prf.value,
                "bound_exf": exf.value,
                "ratio_prf": st.mean / prf.value if prf.value > 0 else float("nan"),
            }
        )
    text = _write_csv(rows, SIM_COLUMNS, args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_cells(args) -> list[tuple[int, float]]:
    cells = []
    if args.cells:
        for item in _split_list(args.cells):
            try:
                k, r = item.split(":")
                cells.append((int(k), float(r)))
            except ValueError:
                raise UsageError(f"cells are written K:rho, got {item!r}") from None
    elif args.K and args.rho:
        cells = [(int(k), float(r)) for k in _split_list(args.K) for r in _split_list(args.rho)]
    return cells


def run_cell(K: int, rho: float, base_mean: float, spokes: int, n_paths: int, seed: int, gamma: float = 1.0,
             method: str = "simplex") -> dict:
    cfg = HubSpokeConfig(K=K, base_mean=base_mean, rho=rho, spoke_count=spokes, seed=seed)
    instance, model = generate_hub_spoke(cfg)
    probs = derive_probabilities(model)
    prf = prf_solution(instance, model, probs, method=method)
    exf = exf_solution(instance, model, probs, method=method)
    sim = SimConfig(n_paths, seed)
    a = simulate(instance, model, prf_policy(prf, instance, gamma), sim, probs)
    b = simulate(instance, model, exf_policy(exf, instance, probs, gamma), sim, probs)
    return {
        "K": K,
        "rho": rho,
        "T": model.T,
        "bound_prf": prf.value,
        "bound_exf": exf.value,
        "policy_prf": a.mean,
        "stderr_prf": a.stderr,
        "policy_exf": b.mean,
        "stderr_exf": b.stderr,
        "ratio_prf": a.mean / prf.value,
        "ratio_exf": b.mean / exf.value,
        "bound_gap_pct": (exf.value - prf.value) / exf.value * 100,
        "policy_gap_pct": (a.mean - b.mean) / b.mean * 100,
        "status": "ok",
        "violations": a.capacity_violations + b.capacity_violations,
    }


def cmd_experiment(args) -> int:
    cells = _parse_cells(args)
    if not cells:
        raise UsageError("experiment needs a nonempty cell list (--cells K:rho,... or --K and --rho)")
    if args.paths < 1:
        raise UsageError("--paths must be at least 1")
    rows = []
    for idx, (K, rho) in enumerate(cells):
        try:
            row = run_cell(K, rho, args.base_mean, args.spokes, args.paths, args.seed, args.gamma, args.method)
        except (CalrmError, ValueError) as exc:
            row = {"K": K, "rho": rho, "status": f"error: {exc}"}
        row["cell"] = idx
        rows.append(row)
        log.info("cell %d (K=%d, rho=%g): %s", idx, K, rho, row["status"])
    text = _write_csv(rows, EXPERIMENT_COLUMNS, args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep_gamma(args) -> int:
    instance, model = _load(args)
    probs = derive_probabilities(model)
    grid = []
    for g in _split_list(args.grid):
        v = float(g)
        if v in grid:
            warnings.warn(f"duplicate gamma {v} dropped", stacklevel=1)
            continue
        grid.append(v)
    prf = prf_solution(instance, model, probs, method=args.method)
    exf = exf_solution(instance, model, probs, method=args.method) if args.policy == "exf" else None
    rows = []
    for g in grid:
        pol = _build_policy(args.policy, instance, model, probs, g, prf, exf)
        st = simulate(instance, model, pol, SimConfig(args.paths, args.seed), probs)
        rows.append({"gamma": g, "mean": st.mean, "stderr": st.stderr})
    text = _write_csv(rows, ["gamma", "mean", "stderr"], args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = HubSpokeConfig(
        K=args.K, spoke_count=args.spokes, base_mean=args.base_mean, cv=args.cv, rho=args.rho,
        kappa=args.kappa, beta=args.beta, seed=args.seed,
    )
    instance, model = generate_hub_spoke(cfg)
    if not args.out:
        raise UsageError("generate needs --out PATH")
    save_instance(args.out, instance, model)
    print(f"wrote {args.out}: K={model.K} T={model.T} resources={instance.n_resources} products={instance.n_products}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from calrm.errors import ParseError

    try:
        doc = json.loads(Path(args.target).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(args.target, str(exc)) from exc
    target = CalibrationTarget.from_dict(doc)
    model = calibrate_total_demand(target, args.K or target.K, args.T or target.T)
    if not args.out:
        raise UsageError("calibrate needs --out PATH")
    model.save(args.out)
    print(f"wrote {args.out}: K={model.K} T={model.T}")
    return EXIT_OK


def cmd_dump_lp(args) -> int:
    instance, model = _load(args)
    if not args.out:
        raise UsageError("dump-lp needs --out PATH")
    kind = args.bound or "prf"
    if kind in ORACLES:
        raise UsageError(f"{kind} is not an LP")
    lp = build_bound_lp(kind, instance, model)
    write_mps(lp, args.out)
    print(f"wrote {args.out}: {lp.n_rows} rows, {lp.n_vars} columns, {lp.A.nnz} nonzeros")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", help="output file (CSV unless stated otherwise)")
    common.add_argument("--threads", type=int, default=1, help="worker count; results do not depend on it")
    common.add_argument("--method", choices=["simplex", "highs"], default="simplex", help="LP solver")
    common.add_argument("-v", "--verbose", action="store_true")

    src = argparse.ArgumentParser(add_help=False)
    src.add_argument("--instance", help="instance JSON file")
    src.add_argument("--fixture", choices=FIXTURE_NAMES, help="named small instance")
    src.add_argument("--param", action="append", metavar="NAME=VALUE", help="fixture parameter (C, K, alpha)")

    p = argparse.ArgumentParser(prog="calrm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common, src], help="compute LP bounds and exact oracles")
    b.add_argument("--bound", help=f"comma list from {', '.join(BOUND_CHOICES)}")
    b.add_argument("--oracle", help="comma list from dp, offline")
    b.add_argument("--offline-mode", choices=["exact", "mc"], default="exact")
    b.add_argument("--paths", type=int, default=10_000, help="paths for the Monte Carlo offline bound")
    b.add_argument("--dump-lp", help="also write the first LP bound as MPS")
    b.add_argument("--export-x", help="write the PRF solution as CSV of (k, t, q, j, x)")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", parents=[common, src], help="simulate admission policies")
    s.add_argument("--policy", default="prf", help="comma list from prf, indep, exf")
    s.add_argument("--gamma", default="1", help="number in [0,1], auto-asymptotic or auto-constant")
    s.add_argument("--paths", type=int, default=10_000)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", parents=[common], help="hub-and-spoke bound and policy comparison")
    e.add_argument("--cells", help="comma list of K:rho pairs")
    e.add_argument("--K", help="comma list of stage counts (crossed with --rho)")
    e.add_argument("--rho", help="comma list of correlation parameters")
    e.add_argument("--base-mean", type=float, default=10.0)
    e.add_argument("--spokes", type=int, default=3)
    e.add_argument("--paths", type=int, default=2000)
    e.add_argument("--gamma", type=float, default=1.0)
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("sweep-gamma", parents=[common, src], help="policy revenue across tuning parameters")
    g.add_argument("--grid", default="0,0.25,0.5,0.75,1")
    g.add_argument("--policy", choices=["prf", "indep", "exf"], default="prf")
    g.add_argument("--paths", type=int, default=10_000)
    g.set_defaults(func=cmd_sweep_gamma)

    n = sub.add_parser("generate", parents=[common], help="write a hub-and-spoke instance")
    n.add_argument("--K", type=int, required=True)
    n.add_argument("--spokes", type=int, default=3)
    n.add_argument("--base-mean", type=float, default=10.0)
    n.add_argument("--cv", type=float, default=0.3)
    n.add_argument("--rho", type=float, default=0.5)
    n.add_argument("--kappa", type=float, default=8.0)
    n.add_argument("--beta", type=float, default=1.6)
    n.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", parents=[common], help="fit a demand chain to a total-demand law")
    c.add_argument("--target", required=True, help="JSON with K, T and pmf")
    c.add_argument("--K", type=int)
    c.add_argument("--T", type=int)
    c.set_defaults(func=cmd_calibrate)

    d = sub.add_parser("dump-lp", parents=[common, src], help="write a bound LP in MPS format")
    d.add_argument("--bound", default="prf", choices=[k.value for k in BoundKind])
    d.set_defaults(func=cmd_dump_lp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalBreakdown as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, UsageError, StateSpaceTooLarge, EnumerationTooLarge, TooManyProducts) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalrmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
