"""Sweep the BLASTS distortion budget on a Bernoulli bandit, with TS as reference.

Prints final regret, late-window per-period regret and mean channel rate for
each D. Small D behaves like Thompson sampling; large D commits early and
stops paying for information.

    python3 scripts/blasts_spectrum.py --T 500 --seeds 50 --D 0,0.0025,0.01,0.04,0.16,1
"""
import argparse
import time

import numpy as np

from rdtarget.harness import ExperimentConfig, parse_grid, run, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arms", type=int, default=10)
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--M", type=int, default=100)
    ap.add_argument("--D", default="0,0.0025,0.01,0.04,0.16,1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="summary CSV")
    args = ap.parse_args()

    common = dict(kind="bandit", n_arms=args.arms, T=args.T, n_seeds=args.seeds,
                  base_seed=args.seed, workers=args.workers)
    rows = []
    rep, _ = run(ExperimentConfig(agent="ts", **common))
    m, se = rep.total()
    print(f"TS          regret {m:8.2f} +/- {se:.2f}   bound {rep.bounds['ts']:.1f}")
    for D in parse_grid(args.D):
        t0 = time.perf_counter()
        rep, _ = run(ExperimentConfig(agent="blasts", D=D, M=args.M, **common))
        m, se = rep.total()
        w, _ = rep.window(0.1)
        r = float(np.mean(rep.rate_bits))
        rows.append((D, m, se, w, r, rep.bounds["blasts"]))
        print(f"BLASTS D={D:<6g} regret {m:8.2f} +/- {se:.2f}   late {w:.4f}/period   "
              f"rate {r:.3f} b   bound {rep.bounds['blasts']:.1f}   ({time.perf_counter() - t0:.0f}s)")
    if args.out:
        write_csv(args.out, ["D", "regret", "regret_se", "late_regret", "rate_bits", "bound"], rows)


if __name__ == "__main__":
    main()
