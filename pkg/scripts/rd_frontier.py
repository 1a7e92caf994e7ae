"""Trace a rate-distortion frontier and compare it with the binary closed form.

    python3 scripts/rd_frontier.py --betas log:-2:2:40 --out frontier.csv
"""
import argparse
import math

from rdtarget.harness import ExperimentConfig, run


def hb(x):
    return 0.0 if x <= 0 or x >= 1 else -(x * math.log2(x) + (1 - x) * math.log2(1 - x))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", default="0,log:-2:2:40")
    ap.add_argument("--problem", default=None, help="JSON with 'source' and 'distortion'")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = ExperimentConfig(kind="rd_curve", betas=args.betas, problem=args.problem, out=args.out)
    pts, _ = run(cfg)
    print(f"{'beta':>10} {'rate(b)':>9} {'D':>8} {'iters':>6}" + ("" if args.problem else "   1-h_b(D)"))
    for pt in pts:
        line = f"{pt.beta:10.4g} {pt.rate:9.5f} {pt.distortion:8.5f} {pt.iterations:6d}"
        if not args.problem:
            line += f"   {1 - hb(pt.distortion):9.5f}"
        print(line)


if __name__ == "__main__":
    main()
