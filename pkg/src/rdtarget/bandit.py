"""Bernoulli bandits with Thompson, satisficing Thompson and BLASTS agents.

Selection functions never mutate the posterior; :func:`update` returns a new
one. Randomness is always an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rd
from .info import ValidationError, nats_to_bits


@dataclass(frozen=True)
class BanditEnv:
    means: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float)
        if m.ndim != 1 or m.size < 2:
            raise ValidationError("a bandit needs at least 2 arms")
        if np.any((m < 0) | (m > 1)):
            raise ValidationError("arm means must lie in [0, 1]")
        object.__setattr__(self, "means", m)

    @property
    def n_arms(self) -> int:
        return self.means.size

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    def regret(self, arm: int) -> float:
        return self.best_mean - float(self.means[arm])


@dataclass(frozen=True)
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValidationError("alpha and beta must be 1-d arrays of equal length")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValidationError("Beta pseudo-counts must be > 0")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, n_arms: int, alpha: float = 1.0, beta: float = 1.0) -> "BetaPosterior":
        return cls(np.full(n_arms, alpha), np.full(n_arms, beta))

    @property
    def n_arms(self) -> int:
        return self.alpha.size

    def sample(self, rng, size=None) -> np.ndarray:
        shape = (self.n_arms,) if size is None else (size, self.n_arms)
        return rng.beta(self.alpha, self.beta, size=shape)


def sample_env(prior: BetaPosterior, rng) -> BanditEnv:
    return BanditEnv(prior.sample(rng))


def _check_arm(n, arm):
    if not 0 <= arm < n:
        raise ValidationError(f"arm {arm} out of range for {n} arms")


def pull(env: BanditEnv, arm: int, rng) -> int:
    _check_arm(env.n_arms, arm)
    return int(rng.random() < env.means[arm])


def update(post: BetaPosterior, arm: int, reward: int) -> BetaPosterior:
    _check_arm(post.n_arms, arm)
    if reward not in (0, 1):
        raise ValidationError(f"Bernoulli reward must be 0 or 1, got {reward!r}")
    a = post.alpha.copy()
    b = post.beta.copy()
    if reward:
        a[arm] += 1
    else:
        b[arm] += 1
    return BetaPosterior(a, b)


def sample_index(rng, probs) -> int:
    """Inverse-CDF draw from a probability vector."""
    c = np.cumsum(probs)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(i, len(c) - 1)


def ts_select(post: BetaPosterior, rng) -> int:
    return int(np.argmax(post.sample(rng)))


def sts_select(post: BetaPosterior, eps: float, rng) -> int:
    """Uniform draw from the eps-optimal arms of one posterior sample."""
    if eps < 0:
        raise ValidationError("eps must be >= 0")
    theta = post.sample(rng)
    ok = np.flatnonzero(theta.max() - theta <= eps)
    if ok.size == 1:
        return int(ok[0])
    return int(ok[rng.integers(ok.size)])


@dataclass
class TargetDiagnostics:
    rate_bits: float
    distortion: float
    beta: float
    iterations: int
    converged: bool
    channel: np.ndarray = field(repr=False)
    row: int = -1


def squared_regret(theta: np.ndarray) -> np.ndarray:
    """Distortion between sampled environments (rows) and arms: (max - theta)^2."""
    return (theta.max(axis=-1, keepdims=True) - theta) ** 2


@dataclass
class SolverState:
    """Warm-start memory carried across periods by one BLASTS agent."""

    marginal: np.ndarray | None = None
    beta: float = 1.0


def solve_targets(
    d: np.ndarray,
    D: float,
    ba_tol: float = 1e-8,
    max_iter: int = 10_000,
    states: list[SolverState] | None = None,
) -> list[TargetDiagnostics]:
    """Target-action channels for a batch of ensembles.

    ``d`` has shape (B, M, A): one squared-regret matrix per ensemble, with a
    uniform source over its M rows.
    """
    B, M, A = d.shape
    src = np.full(M, 1.0 / M)
    out: list[TargetDiagnostics | None] = [None] * B
    col = d.mean(axis=1)
    dmax = col.min(axis=1)
    dmin = d.min(axis=2).mean(axis=1)
    pending = []
    for b in range(B):
        if D >= dmax[b]:
            pt = rd.zero_rate_point(src, d[b])
        elif D <= dmin[b] + rd.DIST_TOL:
            pt = rd.ba_restricted(src, d[b], tol=ba_tol, max_iter=max_iter)
        else:
            pending.append(b)
            continue
        out[b] = TargetDiagnostics(nats_to_bits(pt.rate_nats), pt.distortion, pt.beta,
                                   pt.iterations, pt.converged, pt.channel)
    if pending:
        idx = np.array(pending)
        q0 = beta0 = None
        if states is not None and all(states[b].marginal is not None for b in pending):
            q0 = np.stack([states[b].marginal for b in pending])
            beta0 = np.array([states[b].beta for b in pending])
        res = rd.constrained_ba_batch(np.broadcast_to(src, (idx.size, M)), d[idx],
                                      np.full(idx.size, float(D)), tol=ba_tol,
                                      max_iter=max_iter, q0=q0, beta0=beta0)
        for j, b in enumerate(pending):
            out[b] = TargetDiagnostics(nats_to_bits(res.rate_nats[j]), float(res.distortion[j]),
                                       float(res.beta[j]), int(res.iterations[j]),
                                       bool(res.converged[j]), res.channel[j])
            if states is not None:
                states[b].marginal = res.marginal[j]
                states[b].beta = max(float(res.beta[j]), 1e-8)
    return out


def blasts_select(
    post: BetaPosterior,
    D: float,
    M: int,
    rng,
    ba_tol: float = 1e-8,
    max_iter: int = 10_000,
    state: SolverState | None = None,
) -> tuple[int, TargetDiagnostics]:
    """Blahut-Arimoto satisficing Thompson sampling, one period.

    Draws M posterior samples, compresses them into a target-action channel at
    distortion ``D`` (squared regret), picks one sample uniformly and draws the
    arm from that sample's channel row.
    """
    if not D >= 0:
        raise ValidationError(f"D must be >= 0, got {D}")
    if M < 1:
        raise ValidationError("M must be >= 1")
    theta = post.sample(rng, size=M)
    diag = solve_targets(squared_regret(theta)[None], D, ba_tol, max_iter,
                         None if state is None else [state])[0]
    return _act(diag, M, rng), diag


def _act(diag: TargetDiagnostics, M: int, rng) -> int:
    row = int(rng.integers(M))
    diag.row = row
    return sample_index(rng, diag.channel[row])


def blasts_select_batch(posts, D, M, rngs, ba_tol=1e-8, max_iter=10_000, states=None):
    """``blasts_select`` for many independent agents at once.

    Each agent draws from its own generator in the same order as the single
    version, so results match it up to floating-point summation order.
    """
    theta = np.stack([p.sample(r, size=M) for p, r in zip(posts, rngs)])
    diags = solve_targets(squared_regret(theta), D, ba_tol, max_iter, states)
    return [_act(g, M, r) for g, r in zip(diags, rngs)], diags
