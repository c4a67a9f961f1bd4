"""Policy revenue as a function of the thinning parameter, with common random numbers.

    python3 scripts/gamma_sweep.py --K 3 --rho 0.5 --grid 0.5,0.75,0.9,1 --paths 5000
    python3 scripts/gamma_sweep.py --fixture appF --paths 100000
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from calrm.demand import derive_probabilities
from calrm.fluid import exf_solution, prf_solution
from calrm.instance import HubSpokeConfig, counterexample, generate_hub_spoke
from calrm.policy import SimConfig, exf_policy, indep_policy, prf_policy, recommended_gamma, simulate


@dataclass
class SweepConfig:
    grid: tuple[float, ...] = (0.25, 0.5, 0.75, 0.9, 1.0)
    paths: int = 5000
    seed: int = 0


def sweep(instance, model, cfg: SweepConfig, method="simplex"):
    probs = derive_probabilities(model)
    prf = prf_solution(instance, model, probs, method=method)
    exf = exf_solution(instance, model, probs, method=method)
    print(f"bounds: PRF={prf.value:.4f} EXF={exf.value:.4f}")
    print(f"constant-factor gamma = {recommended_gamma(instance, model, probs):.4f}")
    sim = SimConfig(cfg.paths, cfg.seed)
    print(f"{'gamma':>6} {'PRF':>12} {'INDEP':>12} {'EXF':>12}")
    for g in cfg.grid:
        out = []
        for pol in (
            prf_policy(prf, instance, g),
            indep_policy(prf, instance, probs, g),
            exf_policy(exf, instance, probs, g),
        ):
            st = simulate(instance, model, pol, sim, probs)
            out.append(f"{st.mean:8.3f}±{st.stderr:.2f}")
        print(f"{g:6.3f} " + " ".join(f"{s:>12}" for s in out))


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--fixture")
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--base-mean", type=float, default=10.0)
    p.add_argument("--grid", default="0.25,0.5,0.75,0.9,1")
    p.add_argument("--paths", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["simplex", "highs"], default="simplex")
    a = p.parse_args()
    grid = tuple(dict.fromkeys(float(g) for g in a.grid.split(",")))
    cfg = SweepConfig(grid=grid, paths=a.paths, seed=a.seed)
    if a.fixture:
        fx = counterexample(a.fixture)
        inst, model = fx.instance, fx.demand
    else:
        inst, model = generate_hub_spoke(HubSpokeConfig(K=a.K, rho=a.rho, base_mean=a.base_mean, seed=a.seed))
    np.set_printoptions(precision=4)
    sweep(inst, model, cfg, a.method)


if __name__ == "__main__":
    main()
