"""Every bound and exact oracle on the named small instances, next to the known values.

    python3 scripts/fixture_bounds.py
"""

from __future__ import annotations

import argparse

from calrm.demand import derive_probabilities
from calrm.errors import CalrmError
from calrm.exact import offline_bound, solve_dp
from calrm.fluid import solve_bound
from calrm.instance import FIXTURE_NAMES, counterexample

KINDS = ("prf", "prf-full", "exf", "lagrangian", "vfa", "indep", "naive-cum", "naive-unw")


def evaluate(name: str, method: str = "simplex") -> dict:
    fx = counterexample(name)
    probs = derive_probabilities(fx.demand)
    out = {}
    for kind in KINDS:
        try:
            out[kind] = solve_bound(kind, fx.instance, fx.demand, probs, method=method).value
        except CalrmError:
            out[kind] = None  # not defined for this instance (e.g. dependent demand)
    out["dp"] = solve_dp(fx.instance, fx.demand, probs).opt
    out["offline"] = offline_bound(fx.instance, fx.demand).value
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--method", choices=["simplex", "highs"], default="simplex")
    a = p.parse_args()
    cols = KINDS + ("dp", "offline")
    print(f"{'fixture':<8}" + "".join(f"{c:>11}" for c in cols))
    for name in FIXTURE_NAMES:
        vals = evaluate(name, a.method)
        print(f"{name:<8}" + "".join(f"{'-':>11}" if vals[c] is None else f"{vals[c]:11.5f}" for c in cols))
        known = counterexample(name).known
        bad = {k: (vals[k], float(v)) for k, v in known.items() if abs(vals[k] - float(v)) > 1e-6}
        if bad:
            print(f"  mismatch against known values: {bad}")


if __name__ == "__main__":
    main()
