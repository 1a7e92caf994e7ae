"""Compare PSRL with compressed-target PSRL on a tabular MDP preset.

    python3 scripts/mdp_compare.py --env chain-6 --K 300 --seeds 20 --D 0,0.5,2,144
"""
import argparse

import numpy as np

from rdtarget.harness import ExperimentConfig, parse_grid, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default="chain-6")
    ap.add_argument("--K", type=int, default=300)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--M", type=int, default=20)
    ap.add_argument("--D", default="0,0.5,2")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    common = dict(kind="mdp", env=args.env, K=args.K, n_seeds=args.seeds, M=args.M,
                  base_seed=args.seed)
    rep, _ = run(ExperimentConfig(agent="psrl", **common))
    m, se = rep.total()
    print(f"psrl            regret {m:8.2f} +/- {se:.2f}")
    for D in parse_grid(args.D):
        rep, _ = run(ExperimentConfig(agent="rd_psrl", D=D, **common))
        m, se = rep.total()
        print(f"rd_psrl D={D:<6g} regret {m:8.2f} +/- {se:.2f}   "
              f"rate {np.mean(rep.rate_bits):.3f} b   "
              f"distortion term {rep.bounds['distortion_term']:.1f}")


if __name__ == "__main__":
    main()
