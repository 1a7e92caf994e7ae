"""Experiment configs, Bayesian-regret simulation and CSV output.

Regret bounds are evaluated with information measured in nats. CSV rates are
in bits (``rate_bits`` columns).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bandit as bd
from . import mdp as md
from . import rd
from .info import ValidationError, entropy_nats
from .presets import bernoulli_hamming, load_mdp

log = logging.getLogger(__name__)

KINDS = ("rd_curve", "bandit", "mdp", "bottleneck")
AGENTS = {"bandit": ("ts", "sts", "blasts"), "mdp": ("psrl", "rd_psrl")}
MASK64 = (1 << 64) - 1
BOUND_STREAM = 0xB0B0


class ConfigError(ValidationError):
    pass


def splitmix64(i: int) -> int:
    z = (i + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, i: int) -> int:
    """Seed of replication ``i``; independent of how many replications run."""
    return (int(base_seed) ^ splitmix64(i)) & MASK64


def seed_rng(base_seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, i))


@dataclass
class ExperimentConfig:
    kind: str
    agent: str | None = None
    T: int = 500
    K: int = 300
    n_arms: int = 10
    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    env: str = "chain-6"
    mdp_prior: str = "dirichlet"
    prior_count: float = 1.0
    preset: str = "bernoulli-hamming"
    problem: str | None = None
    D: float = 0.0
    eps: float = 0.0
    betas: list = field(default_factory=lambda: [0.0, 1.0])
    mode: str = "fixed_uniform"
    stationary: bool = False
    M: int | None = None
    n_seeds: int = 1
    base_seed: int = 0
    out: str | None = None
    ba_tol: float = 1e-6
    ba_max_iter: int = 10_000
    workers: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def ensemble_size(self) -> int:
        if self.M is not None:
            return self.M
        return 100 if self.kind == "bandit" else 20

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind in AGENTS and self.agent not in AGENTS[self.kind]:
            raise ConfigError(
                f"agent for kind={self.kind} must be one of {AGENTS[self.kind]}, got {self.agent!r}"
            )
        for name in ("T", "K"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("n_seeds", "n_arms", "workers", "ba_max_iter"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.kind == "bandit" and self.n_arms < 2:
            raise ConfigError("n_arms must be >= 2")
        if self.M is not None and self.M < 1:
            raise ConfigError("M must be positive")
        if not self.D >= 0:
            raise ConfigError("D must be in [0, inf)")
        if not self.eps >= 0:
            raise ConfigError("eps must be >= 0")
        if len(self.betas) == 0:
            raise ConfigError("betas grid must be non-empty")
        if self.mdp_prior not in ("dirichlet", "point"):
            raise ConfigError("mdp_prior must be 'dirichlet' or 'point'")
        if self.mode not in ("fixed_uniform", "visitation"):
            raise ConfigError("mode must be 'fixed_uniform' or 'visitation'")
        if not 0 <= int(self.base_seed) <= MASK64:
            raise ConfigError("base_seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(path, header, rows) -> str:
    """Write rows with fixed float formatting; returns the text written."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


BANDIT_HEADER = ["seed", "t", "arm", "reward", "regret", "rate_bits", "distortion"]
MDP_HEADER = ["seed", "k", "expected_regret", "rate_bits", "distortion"]
RD_HEADER = ["beta", "rate_bits", "distortion", "iterations", "converged"]
BOTTLENECK_HEADER = ["beta", "I_bits", "expected_Q", "converged"]


@dataclass
class RegretReport:
    kind: str
    regret: np.ndarray                 # (n_seeds, T) per-period regret
    rate_bits: np.ndarray              # (n_seeds, T), nan when not applicable
    distortion: np.ndarray
    actions: np.ndarray | None = None  # bandit arms
    rewards: np.ndarray | None = None
    bounds: dict = field(default_factory=dict)

    @property
    def n_seeds(self) -> int:
        return self.regret.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret, axis=1)

    def mean_cumulative(self) -> np.ndarray:
        return self.cumulative.mean(axis=0)

    def se_cumulative(self) -> np.ndarray:
        if self.n_seeds < 2:
            return np.zeros(self.regret.shape[1])
        return self.cumulative.std(axis=0, ddof=1) / np.sqrt(self.n_seeds)

    def total(self) -> tuple[float, float]:
        """Mean and standard error of the final cumulative regret."""
        if self.regret.shape[1] == 0:
            return 0.0, 0.0
        return float(self.mean_cumulative()[-1]), float(self.se_cumulative()[-1])

    def window(self, frac: float = 0.1, values=None) -> tuple[float, float]:
        """Mean and standard error (over seeds) of a per-period series on the last ``frac``."""
        v = self.regret if values is None else values
        n = v.shape[1]
        k = max(1, int(round(n * frac)))
        per_seed = v[:, n - k:].mean(axis=1)
        se = per_seed.std(ddof=1) / np.sqrt(len(per_seed)) if len(per_seed) > 1 else 0.0
        return float(per_seed.mean()), float(se)

    def rows(self):
        S, T = self.regret.shape
        for s in range(S):
            for t in range(T):
                if self.kind == "bandit":
                    yield (s, t + 1, int(self.actions[s, t]), int(self.rewards[s, t]),
                           self.regret[s, t], self.rate_bits[s, t], self.distortion[s, t])
                else:
                    yield (s, t + 1, self.regret[s, t], self.rate_bits[s, t],
                           self.distortion[s, t])

    def to_csv(self, path=None) -> str:
        header = BANDIT_HEADER if self.kind == "bandit" else MDP_HEADER
        return write_csv(path, header, self.rows())


# ---------------------------------------------------------------------------
# bandits


def _bandit_prior(cfg) -> bd.BetaPosterior:
    return bd.BetaPosterior.uniform(cfg.n_arms, cfg.prior_alpha, cfg.prior_beta)


def _bandit_chunk(cfg: ExperimentConfig, seed_ids: list[int]):
    T, n = cfg.T, len(seed_ids)
    prior = _bandit_prior(cfg)
    rngs = [seed_rng(cfg.base_seed, i) for i in seed_ids]
    envs = [bd.sample_env(prior, r) for r in rngs]
    posts = [prior] * n
    arms = np.zeros((n, T), dtype=int)
    rewards = np.zeros((n, T), dtype=int)
    regret = np.zeros((n, T))
    rate = np.full((n, T), np.nan)
    dist = np.full((n, T), np.nan)
    states = [bd.SolverState() for _ in range(n)]
    for t in range(T):
        if cfg.agent == "blasts":
            chosen, diags = bd.blasts_select_batch(
                posts, cfg.D, cfg.ensemble_size, rngs, ba_tol=cfg.ba_tol,
                max_iter=cfg.ba_max_iter, states=states)
            for j, g in enumerate(diags):
                rate[j, t], dist[j, t] = g.rate_bits, g.distortion
        elif cfg.agent == "ts":
            chosen = [bd.ts_select(p, r) for p, r in zip(posts, rngs)]
        else:
            chosen = [bd.sts_select(p, cfg.eps, r) for p, r in zip(posts, rngs)]
        for j in range(n):
            a = chosen[j]
            r = bd.pull(envs[j], a, rngs[j])
            posts[j] = bd.update(posts[j], a, r)
            arms[j, t], rewards[j, t], regret[j, t] = a, r, envs[j].regret(a)
    return arms, rewards, regret, rate, dist


def _fan_out(fn, cfg, n):
    """Run ``fn(cfg, seed_ids)`` over chunks of seeds; merge in seed order."""
    ids = list(range(n))
    if cfg.workers <= 1 or n <= 1:
        return [fn(cfg, ids)]
    chunks = [ids[i::cfg.workers] for i in range(cfg.workers)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
        parts = list(ex.map(fn, [cfg] * len(chunks), chunks))
    order = np.argsort(np.concatenate(chunks))
    return [tuple(np.concatenate(p, axis=0)[order] for p in zip(*parts))]


def run_bandit_experiment(cfg: ExperimentConfig) -> RegretReport:
    """Bayesian regret of one bandit agent, environments drawn from the prior per seed."""
    if cfg.kind != "bandit":
        raise ConfigError("run_bandit_experiment needs kind='bandit'")
    (arms, rewards, regret, rate, dist), = _fan_out(_bandit_chunk, cfg, cfg.n_seeds)
    rep = RegretReport("bandit", regret, rate, dist, arms, rewards)
    rep.bounds["ts"] = ts_bound(cfg)
    if cfg.agent == "blasts":
        rep.bounds["blasts"] = blasts_bound(cfg)
    return rep


def prior_optimal_action_entropy(cfg, n_mc: int = 100_000) -> float:
    """H_1(A*) in nats. Exact (log |A|) for exchangeable priors, Monte Carlo otherwise."""
    prior = _bandit_prior(cfg)
    if np.all(prior.alpha == prior.alpha[0]) and np.all(prior.beta == prior.beta[0]):
        return math.log(cfg.n_arms)
    rng = seed_rng(cfg.base_seed, BOUND_STREAM + 1)
    counts = np.bincount(prior.sample(rng, n_mc).argmax(axis=1), minlength=cfg.n_arms)
    return entropy_nats(counts / n_mc)


def ts_bound(cfg) -> float:
    """sqrt(|A| H_1(A*) T / 2)."""
    return math.sqrt(0.5 * cfg.n_arms * prior_optimal_action_entropy(cfg) * cfg.T)


def prior_rate(cfg, D: float | None = None) -> rd.RDPoint:
    """R_1(D) on an M-sample ensemble from the prior (fixed stream per base_seed)."""
    D = cfg.D if D is None else D
    rng = seed_rng(cfg.base_seed, BOUND_STREAM)
    theta = _bandit_prior(cfg).sample(rng, cfg.ensemble_size)
    d = bd.squared_regret(theta)
    return rd.rate_at_distortion(np.full(len(d), 1.0 / len(d)), d, D)


def blasts_bound(cfg, D: float | None = None) -> float:
    """sqrt(2 |A| R_1(D) T) + 2 T sqrt(D), with R_1(D) in nats."""
    D = cfg.D if D is None else D
    r = prior_rate(cfg, D).rate_nats
    return math.sqrt(2 * cfg.n_arms * r * cfg.T) + 2 * cfg.T * math.sqrt(D)


# ---------------------------------------------------------------------------
# MDPs


def _mdp_posterior(cfg, env):
    if cfg.mdp_prior == "point":
        return md.FiniteMDPPosterior.point_mass(env)
    return md.DirichletMDPPosterior.uninformative(env, cfg.prior_count)


def _mdp_chunk(cfg: ExperimentConfig, seed_ids: list[int]):
    env = load_mdp(cfg.env)
    v_star = md.initial_value(env, md.value_iteration(env)[0])
    K, n = cfg.K, len(seed_ids)
    regret = np.zeros((n, K))
    rate = np.full((n, K), np.nan)
    dist = np.full((n, K), np.nan)
    for j, i in enumerate(seed_ids):
        rng = seed_rng(cfg.base_seed, i)
        post = _mdp_posterior(cfg, env)
        for k in range(K):
            if cfg.agent == "psrl":
                traj, post = md.psrl_episode(post, env, rng)
            else:
                traj, post, g = md.rd_psrl_episode(post, cfg.D, cfg.ensemble_size, env, rng,
                                                   ba_tol=cfg.ba_tol, max_iter=cfg.ba_max_iter)
                rate[j, k], dist[j, k] = g.rate_bits, g.distortion
            v_pi = md.initial_value(env, md.policy_eval(env, traj.policy))
            regret[j, k] = max(v_star - v_pi, 0.0)
    return regret, rate, dist


def run_mdp_experiment(cfg: ExperimentConfig) -> RegretReport:
    """Per-episode expected regret V*_1 - V^pi_1 under init_dist, computed exactly."""
    if cfg.kind != "mdp":
        raise ConfigError("run_mdp_experiment needs kind='mdp'")
    env = load_mdp(cfg.env)  # surface ingestion errors before fanning out
    (regret, rate, dist), = _fan_out(_mdp_chunk, cfg, cfg.n_seeds)
    rep = RegretReport("mdp", regret, rate, dist)
    if cfg.agent == "rd_psrl":
        # the information-ratio term is unknown; only the distortion term is computable
        rep.bounds["distortion_term"] = 2 * cfg.K * (env.horizon + 1) * math.sqrt(cfg.D)
    return rep


# ---------------------------------------------------------------------------
# frontiers


def parse_grid(grid) -> list[float]:
    """'0,0.5,1', 'log:-2:2:40' (log10 endpoints) or 'lin:0:1:11', comma-joined."""
    if isinstance(grid, (list, tuple, np.ndarray)):
        return [float(x) for x in grid]
    out: list[float] = []
    for part in str(grid).split(","):
        part = part.strip()
        if not part:
            continue
        if part.startswith(("log:", "lin:")):
            try:
                kind, a, b, n = part.split(":")
                a, b, n = float(a), float(b), int(n)
            except ValueError:
                raise ConfigError(f"bad grid term {part!r}; expected log:a:b:n or lin:a:b:n") from None
            vals = np.logspace(a, b, n) if kind == "log" else np.linspace(a, b, n)
            out.extend(float(v) for v in vals)
        else:
            try:
                out.append(float(part))
            except ValueError:
                raise ConfigError(f"bad grid value {part!r}") from None
    if not out:
        raise ConfigError("empty grid")
    return out


def rd_problem(cfg):
    if cfg.problem:
        doc = json.loads(Path(cfg.problem).read_text(encoding="utf-8"))
        return np.asarray(doc["source"], float), np.asarray(doc["distortion"], float)
    if cfg.preset == "bernoulli-hamming":
        return bernoulli_hamming()
    raise ConfigError(f"unknown rd preset {cfg.preset!r}")


def _check_monotone(xs, increasing, what, slack=1e-6):
    diffs = np.diff(np.asarray(xs, dtype=float))
    bad = diffs < -slack if increasing else diffs > slack
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise RuntimeError(f"{what} not monotone between grid points {i} and {i + 1}")


def run_rd_curve(cfg: ExperimentConfig, trace: bool = False):
    p, d = rd_problem(cfg)
    betas = sorted(parse_grid(cfg.betas))
    pts = rd.rd_curve(p, d, betas, trace=trace)
    ok = [pt for pt in pts if pt.converged]
    _check_monotone([pt.rate for pt in ok], True, "rate")
    _check_monotone([pt.distortion for pt in ok], False, "distortion")
    rows = [(pt.beta, pt.rate, pt.distortion, pt.iterations, pt.converged) for pt in pts]
    text = write_csv(cfg.out, RD_HEADER, rows)
    return pts, text


def run_bottleneck(cfg: ExperimentConfig):
    env = load_mdp(cfg.env)
    betas = sorted(parse_grid(cfg.betas))
    results = [md.policy_bottleneck(env, b, cfg.mode, stationary=cfg.stationary)
               for b in betas]
    diags = [g for _, g in results]
    ok = [g for g in diags if g.converged]
    _check_monotone([g.expected_Q for g in ok], True, "expected_Q")
    rows = [(b, g.I_bits, g.expected_Q, g.converged) for b, g in zip(betas, diags)]
    text = write_csv(cfg.out, BOTTLENECK_HEADER, rows)
    return results, text


def run(cfg: ExperimentConfig):
    """Dispatch on ``cfg.kind``; writes ``cfg.out`` when set."""
    if cfg.kind == "rd_curve":
        return run_rd_curve(cfg)
    if cfg.kind == "bottleneck":
        return run_bottleneck(cfg)
    rep = run_bandit_experiment(cfg) if cfg.kind == "bandit" else run_mdp_experiment(cfg)
    return rep, rep.to_csv(cfg.out)
