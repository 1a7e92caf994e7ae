"""Finite-horizon tabular MDPs: planning, posterior sampling and the policy bottleneck.

Timesteps are 0-based in arrays: index ``h`` holds timestep ``h + 1``.
Rewards are known to the agents; only transitions are learned.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rd
from .bandit import sample_index
from .info import ValidationError, mutual_information_nats, nats_to_bits

ROW_TOL = 1e-9


@dataclass(frozen=True)
class TabularMDP:
    rewards: np.ndarray      # (S, A) in [0, 1]
    transitions: np.ndarray  # (S, A, S)
    init_dist: np.ndarray    # (S,)
    horizon: int

    def __post_init__(self):
        r = np.array(self.rewards, dtype=float)
        t = np.array(self.transitions, dtype=float)
        mu = np.array(self.init_dist, dtype=float)
        if r.ndim != 2:
            raise ValidationError(f"rewards must be an (S, A) table, got shape {r.shape}")
        S, A = r.shape
        if S < 1 or A < 1:
            raise ValidationError("need at least one state and one action")
        if t.shape != (S, A, S):
            raise ValidationError(f"transitions must have shape {(S, A, S)}, got {t.shape}")
        if mu.shape != (S,):
            raise ValidationError(f"init_dist must have length {S}, got shape {mu.shape}")
        if not (isinstance(self.horizon, (int, np.integer)) and self.horizon >= 1):
            raise ValidationError(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if not np.all(np.isfinite(r)) or np.any((r < 0) | (r > 1)):
            raise ValidationError("rewards must lie in [0, 1]")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValidationError("transition probabilities must be finite and >= 0")
        rows = t.sum(axis=2)
        if np.any(np.abs(rows - 1) > ROW_TOL):
            s, a = np.argwhere(np.abs(rows - 1) > ROW_TOL)[0]
            raise ValidationError(
                f"transition row (s={s}, a={a}) sums to {rows[s, a]:.12g}, expected 1"
            )
        if np.any(mu < 0) or abs(mu.sum() - 1) > ROW_TOL:
            raise ValidationError(f"init_dist must be a distribution (sum={mu.sum():.12g})")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "init_dist", mu)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n_states, self.n_actions, self.horizon

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "horizon": self.horizon,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
            "init_dist": self.init_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDP":
        missing = {"n_states", "n_actions", "horizon", "rewards", "transitions",
                   "init_dist"} - set(doc)
        if missing:
            raise ValidationError(f"MDP document missing keys: {sorted(missing)}")
        mdp = cls(doc["rewards"], doc["transitions"], doc["init_dist"], doc["horizon"])
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise ValidationError(
                f"declared n_states/n_actions ({doc['n_states']}, {doc['n_actions']}) "
                f"disagree with rewards table {mdp.rewards.shape}"
            )
        return mdp

    @classmethod
    def load(cls, path) -> "TabularMDP":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


@dataclass
class QTable:
    q: np.ndarray  # (H, S, A)
    v: np.ndarray  # (H, S)


@dataclass
class PolicyTable:
    probs: np.ndarray  # (H, S, A)

    @classmethod
    def greedy(cls, q: np.ndarray) -> "PolicyTable":
        """Deterministic policy from a (H, S, A) table, ties to the lowest action."""
        H, S, A = q.shape
        probs = np.zeros_like(q)
        a = q.argmax(axis=-1)
        np.put_along_axis(probs, a[..., None], 1.0, axis=-1)
        return cls(probs)

    def actions(self) -> np.ndarray:
        return self.probs.argmax(axis=-1)


def q_star_batch(rewards, transitions, horizon: int) -> np.ndarray:
    """Optimal Q tables for a stack of MDPs.

    ``transitions`` is (..., S, A, S); ``rewards`` broadcasts against (..., S, A).
    Returns (..., H, S, A).
    """
    P = np.asarray(transitions, dtype=float)
    R = np.broadcast_to(np.asarray(rewards, dtype=float), P.shape[:-1])
    out = np.empty(P.shape[:-3] + (horizon,) + P.shape[-3:-1])
    v = np.zeros(P.shape[:-3] + P.shape[-1:])
    for h in range(horizon - 1, -1, -1):
        q = R + np.einsum("...sat,...t->...sa", P, v)
        out[..., h, :, :] = q
        v = q.max(axis=-1)
    return out


def value_iteration(mdp: TabularMDP) -> tuple[QTable, PolicyTable]:
    """Backward induction with V_{H+1} = 0."""
    q = q_star_batch(mdp.rewards, mdp.transitions, mdp.horizon)
    return QTable(q, q.max(axis=-1)), PolicyTable.greedy(q)


def policy_eval(mdp: TabularMDP, pi: PolicyTable) -> QTable:
    probs = np.asarray(pi.probs, dtype=float)
    if probs.shape != (mdp.horizon, mdp.n_states, mdp.n_actions):
        raise ValidationError(
            f"policy shape {probs.shape} does not match MDP "
            f"{(mdp.horizon, mdp.n_states, mdp.n_actions)}"
        )
    q = np.empty_like(probs)
    v = np.empty(probs.shape[:2])
    nxt = np.zeros(mdp.n_states)
    for h in range(mdp.horizon - 1, -1, -1):
        q[h] = mdp.rewards + mdp.transitions @ nxt
        v[h] = (probs[h] * q[h]).sum(axis=1)
        nxt = v[h]
    return QTable(q, v)


def initial_value(mdp: TabularMDP, table: QTable) -> float:
    return float(mdp.init_dist @ table.v[0])


def dq_star_matrix(q: np.ndarray) -> np.ndarray:
    """Pairwise max_h ||Q*_i,h - Q*_j,h||_inf^2 for a stack (M, H, S, A)."""
    flat = q.reshape(q.shape[0], -1)
    gap = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=-1)
    return gap**2


def dq_star_distortion(m1: TabularMDP, m2: TabularMDP) -> float:
    """Squared sup-norm gap between the two optimal Q functions, over all timesteps."""
    if m1.shape != m2.shape:
        raise ValidationError(f"MDP shapes differ: {m1.shape} vs {m2.shape}")
    q1, _ = value_iteration(m1)
    q2, _ = value_iteration(m2)
    return float(np.max(np.abs(q1.q - q2.q)) ** 2)


# ---------------------------------------------------------------------------
# posteriors


@dataclass
class Trajectory:
    states: np.ndarray   # (H + 1,)
    actions: np.ndarray  # (H,)
    rewards: np.ndarray  # (H,)
    policy: PolicyTable = field(repr=False)
    sample_index: int = -1

    @property
    def ret(self) -> float:
        return float(self.rewards.sum())

    def transitions(self):
        return zip(self.states[:-1], self.actions, self.states[1:])


@dataclass(frozen=True)
class DirichletMDPPosterior:
    """Known rewards, independent Dirichlet over each transition row."""

    counts: np.ndarray   # (S, A, S)
    rewards: np.ndarray  # (S, A)
    init_dist: np.ndarray
    horizon: int

    def __post_init__(self):
        c = np.array(self.counts, dtype=float)
        if np.any(c <= 0):
            raise ValidationError("Dirichlet pseudo-counts must be > 0")
        object.__setattr__(self, "counts", c)

    @classmethod
    def uninformative(cls, mdp: TabularMDP, prior_count: float = 1.0):
        S, A = mdp.n_states, mdp.n_actions
        return cls(np.full((S, A, S), prior_count), mdp.rewards, mdp.init_dist, mdp.horizon)

    def sample_transitions(self, rng, M: int) -> np.ndarray:
        g = rng.standard_gamma(self.counts, size=(M,) + self.counts.shape)
        return g / g.sum(axis=-1, keepdims=True)

    def sample_ensemble(self, rng, M: int):
        P = self.sample_transitions(rng, M)
        return np.broadcast_to(self.rewards, P.shape[:-1]), P

    def sample(self, rng) -> tuple[TabularMDP, int]:
        P = self.sample_transitions(rng, 1)[0]
        return TabularMDP(self.rewards, P, self.init_dist, self.horizon), -1

    def update(self, traj: Trajectory) -> "DirichletMDPPosterior":
        c = self.counts.copy()
        np.add.at(c, (traj.states[:-1], traj.actions, traj.states[1:]), 1.0)
        return DirichletMDPPosterior(c, self.rewards, self.init_dist, self.horizon)


@dataclass(frozen=True)
class FiniteMDPPosterior:
    """Posterior supported on a finite list of MDPs."""

    mdps: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if len(self.mdps) != w.size or w.size == 0:
            raise ValidationError("need one weight per MDP")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValidationError("weights must form a distribution")
        shapes = {m.shape for m in self.mdps}
        if len(shapes) != 1:
            raise ValidationError("all MDPs in the support must share a shape")
        object.__setattr__(self, "mdps", tuple(self.mdps))
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, mdp: TabularMDP) -> "FiniteMDPPosterior":
        return cls((mdp,), np.ones(1))

    @property
    def horizon(self) -> int:
        return self.mdps[0].horizon

    def sample(self, rng) -> tuple[TabularMDP, int]:
        i = sample_index(rng, self.weights)
        return self.mdps[i], i

    def sample_ensemble(self, rng, M: int):
        idx = [sample_index(rng, self.weights) for _ in range(M)]
        R = np.stack([self.mdps[i].rewards for i in idx])
        P = np.stack([self.mdps[i].transitions for i in idx])
        return R, P

    def update(self, traj: Trajectory) -> "FiniteMDPPosterior":
        lik = np.ones(len(self.mdps))
        for k, m in enumerate(self.mdps):
            for (s, a, s2), r in zip(traj.transitions(), traj.rewards):
                lik[k] *= m.transitions[s, a, s2] * float(m.rewards[s, a] == r)
        w = self.weights * lik
        if w.sum() <= 0:
            raise ValidationError("trajectory has zero likelihood under every supported MDP")
        return FiniteMDPPosterior(self.mdps, w / w.sum())


def rollout(env: TabularMDP, pi: PolicyTable, rng) -> Trajectory:
    H = env.horizon
    states = np.empty(H + 1, dtype=int)
    actions = np.empty(H, dtype=int)
    rewards = np.empty(H)
    s = sample_index(rng, env.init_dist)
    for h in range(H):
        a = sample_index(rng, pi.probs[h, s])
        states[h], actions[h], rewards[h] = s, a, env.rewards[s, a]
        s = sample_index(rng, env.transitions[s, a])
    states[H] = s
    return Trajectory(states, actions, rewards, pi)


def _check_env(post, env: TabularMDP):
    if post.horizon != env.horizon:
        raise ValidationError("posterior and environment horizons differ")


def psrl_episode(post, true_env: TabularMDP, rng):
    """Sample one MDP, act greedily for it in ``true_env``, update the posterior."""
    _check_env(post, true_env)
    m, idx = post.sample(rng)
    _, pi = value_iteration(m)
    traj = rollout(true_env, pi, rng)
    traj.sample_index = idx
    return traj, post.update(traj)


@dataclass
class EpisodeDiagnostics:
    rate_bits: float
    distortion: float
    beta: float
    iterations: int
    converged: bool
    row: int
    target: int


def rd_psrl_episode(post, D: float, M: int, true_env: TabularMDP, rng,
                    ba_tol: float = 1e-8, max_iter: int = 10_000,
                    method: str = "constrained"):
    """PSRL against a compressed target MDP.

    Draws M posterior MDPs, compresses them under the squared Q* gap at
    distortion ``D`` with the ensemble as codebook, picks one sample
    uniformly, draws its target from the channel and executes the target's
    optimal policy.
    """
    if not D >= 0:
        raise ValidationError(f"D must be >= 0, got {D}")
    if M < 1:
        raise ValidationError("M must be >= 1")
    _check_env(post, true_env)
    R, P = post.sample_ensemble(rng, M)
    qs = q_star_batch(R, P, true_env.horizon)
    d = dq_star_matrix(qs)
    pt = rd.rate_at_distortion(np.full(M, 1.0 / M), d, D, ba_tol=ba_tol,
                               max_iter=max_iter, method=method)
    row = int(rng.integers(M))
    j = sample_index(rng, pt.channel[row])
    pi = PolicyTable.greedy(qs[j])
    traj = rollout(true_env, pi, rng)
    traj.sample_index = j
    diag = EpisodeDiagnostics(pt.rate, pt.distortion, pt.beta, pt.iterations,
                              pt.converged, row, j)
    return traj, post.update(traj), diag


# ---------------------------------------------------------------------------
# policy information bottleneck


@dataclass
class BottleneckDiagnostics:
    I_bits: float
    expected_Q: float
    converged: bool
    oscillating: bool
    iterations: int
    state_weights: np.ndarray = field(repr=False)


def visitation(mdp: TabularMDP, pi: PolicyTable) -> np.ndarray:
    """State distribution at every timestep, (H, S), starting from init_dist."""
    out = np.empty((mdp.horizon, mdp.n_states))
    d = mdp.init_dist
    for h in range(mdp.horizon):
        out[h] = d
        d = np.einsum("s,sa,sat->t", d, pi.probs[h], mdp.transitions)
    return out


def _state_weights(mdp, pi, mode):
    """Weights over (timestep, state) pairs: a uniform timestep, then the state."""
    H, S = mdp.horizon, mdp.n_states
    if mode == "fixed_uniform":
        return np.full((H, S), 1.0 / (H * S))
    if mode == "visitation":
        return visitation(mdp, pi) / H
    raise ValidationError(f"unknown state distribution mode {mode!r}")


def policy_bottleneck(
    mdp: TabularMDP,
    beta_tradeoff: float,
    state_dist_mode: str = "fixed_uniform",
    outer_iters: int = 10_000,
    tol: float = 1e-10,
    stationary: bool = False,
    damping: float = 0.5,
    init: PolicyTable | None = None,
) -> tuple[PolicyTable, BottleneckDiagnostics]:
    """Maximize E[Q^pi(S, A)] - I(S; A) / beta by Blahut-Arimoto style sweeps.

    Each sweep sets pi(a|s) ~ rho(a) exp(beta Q^pi(s, a)) with rho the action
    marginal under the state weights, then re-evaluates Q^pi. The source is
    the (timestep, state) pair: a uniform timestep and the state under the
    chosen mode. Visitation weights are damped to keep the moving source from
    oscillating.
    """
    if not beta_tradeoff >= 0:
        raise ValidationError("beta_tradeoff must be >= 0")
    H, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    pi = PolicyTable(np.full((H, S, A), 1.0 / A)) if init is None else PolicyTable(
        np.array(init.probs, dtype=float))
    mu = _state_weights(mdp, pi, state_dist_mode)
    table = policy_eval(mdp, pi)
    changes: list[float] = []
    converged = False
    it = 0
    for it in range(1, outer_iters + 1):
        rho = np.einsum("hs,hsa->a", mu, pi.probs)
        with np.errstate(divide="ignore"):
            log_rho = np.log(rho)
        q = table.q
        if stationary:
            wsum = mu.sum(axis=0)
            qbar = np.einsum("hs,hsa->sa", mu, q) / np.where(wsum > 0, wsum, 1.0)[:, None]
            qbar = np.where(wsum[:, None] > 0, qbar, q.mean(axis=0))
            q = np.broadcast_to(qbar, (H, S, A))
        logits = log_rho + beta_tradeoff * q
        logits = logits - rd.logsumexp(logits, axis=-1, keepdims=True)
        new = np.exp(logits)
        change = float(np.max(np.abs(new - pi.probs)))
        changes.append(change)
        pi = PolicyTable(new)
        table = policy_eval(mdp, pi)
        if state_dist_mode == "visitation":
            mu = damping * mu + (1 - damping) * _state_weights(mdp, pi, state_dist_mode)
        if change < tol:
            converged = True
            break
    oscillating = (not converged and len(changes) > 50
                   and min(changes[-50:]) > 0.5 * max(changes[-50:]))
    src = mu.ravel()
    info = mutual_information_nats(src, pi.probs.reshape(H * S, A))
    eq = float(np.einsum("hs,hsa,hsa->", mu, pi.probs, table.q))
    return pi, BottleneckDiagnostics(nats_to_bits(info), eq, converged, oscillating, it, mu)
