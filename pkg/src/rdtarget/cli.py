"""Command-line entry point.

    rdtarget rd curve --preset bernoulli-hamming --betas log:-2:2:40 --out f.csv
    rdtarget bandit run --agent blasts --arms 10 --T 500 --D 0.01 --M 100 --seeds 20 --seed 0 --out f.csv
    rdtarget mdp run --agent rd_psrl --env chain-6 --K 300 --D 0 --M 20 --seeds 10 --seed 0 --out f.csv
    rdtarget bottleneck run --env grid-4 --betas 0,log:-1:3:20 --mode fixed_uniform --out f.csv

Every command takes ``--config path.json``; keys in the file override flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .harness import ExperimentConfig
from .info import ValidationError


def _common(p):
    p.add_argument("--config", help="JSON config; its keys override command-line flags")
    p.add_argument("--out", help="CSV output path (stdout summary only when omitted)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdtarget", description=__doc__.split("\n")[0])
    top = ap.add_subparsers(dest="group", required=True)

    g = top.add_parser("rd", help="rate-distortion frontiers").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("curve")
    p.add_argument("--preset", default="bernoulli-hamming")
    p.add_argument("--problem", help="JSON with 'source' and 'distortion'")
    p.add_argument("--betas", default="0,log:-2:2:40")
    _common(p)

    g = top.add_parser("bandit", help="Bernoulli bandit regret").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("run")
    p.add_argument("--agent", choices=harness.AGENTS["bandit"], required=True)
    p.add_argument("--arms", type=int, default=10, dest="n_arms")
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--D", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--M", type=int)
    p.add_argument("--seeds", type=int, default=1, dest="n_seeds")
    p.add_argument("--seed", type=int, default=0, dest="base_seed")
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    g = top.add_parser("mdp", help="tabular MDP regret").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("run")
    p.add_argument("--agent", choices=harness.AGENTS["mdp"], required=True)
    p.add_argument("--env", default="chain-6", help="MDP JSON path or preset name")
    p.add_argument("--K", type=int, default=300)
    p.add_argument("--D", type=float, default=0.0)
    p.add_argument("--M", type=int)
    p.add_argument("--seeds", type=int, default=1, dest="n_seeds")
    p.add_argument("--seed", type=int, default=0, dest="base_seed")
    p.add_argument("--prior", choices=["dirichlet", "point"], default="dirichlet", dest="mdp_prior")
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    g = top.add_parser("bottleneck", help="policy information bottleneck sweep").add_subparsers(
        dest="cmd", required=True)
    p = g.add_parser("run")
    p.add_argument("--env", default="grid-4")
    p.add_argument("--betas", default="0,log:-1:3:20")
    p.add_argument("--mode", choices=["fixed_uniform", "visitation"], default="fixed_uniform")
    p.add_argument("--stationary", action="store_true")
    _common(p)
    return ap


KIND = {"rd": "rd_curve", "bandit": "bandit", "mdp": "mdp", "bottleneck": "bottleneck"}
NOT_CONFIG = {"group", "cmd", "config", "verbose"}


def config_from_args(args) -> ExperimentConfig:
    doc = {k: v for k, v in vars(args).items() if k not in NOT_CONFIG and v is not None}
    doc["kind"] = KIND[args.group]
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            try:
                override = json.load(f)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{args.config}: invalid JSON ({e})") from None
        doc.update(override)
    if "betas" in doc:
        doc["betas"] = harness.parse_grid(doc["betas"])
    return ExperimentConfig.from_dict(doc)


def _summary(cfg, result) -> str:
    if cfg.kind in ("bandit", "mdp"):
        rep, _ = result
        mean, se = rep.total()
        horizon = cfg.T if cfg.kind == "bandit" else cfg.K
        lines = [f"{cfg.agent}: mean cumulative regret over {horizon} = {mean:.4f} "
                 f"+/- {se:.4f} (se, {rep.n_seeds} seeds)"]
        lines += [f"bound[{k}] = {v:.4f}" for k, v in rep.bounds.items()]
        return "\n".join(lines)
    _, text = result
    return f"{len(text.splitlines()) - 1} rows"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = config_from_args(args)
        result = harness.run(cfg)
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(_summary(cfg, result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
