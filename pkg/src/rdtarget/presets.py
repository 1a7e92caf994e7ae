"""Bundled problem instances, so experiments run without external data."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .bandit import BetaPosterior
from .info import ValidationError
from .mdp import TabularMDP


def bernoulli_hamming():
    """Uniform binary source with Hamming distortion; R(D) = 1 - h_b(D) bits."""
    return np.array([0.5, 0.5]), np.array([[0.0, 1.0], [1.0, 0.0]])


def beta_bandit(n_arms: int = 10) -> BetaPosterior:
    return BetaPosterior.uniform(n_arms)


def chain(n_states: int = 6, horizon: int = 12, forward: float = 0.6,
          stay: float = 0.35) -> TabularMDP:
    """A river-swim style chain.

    Action 0 moves left deterministically; action 1 pushes right and succeeds
    with probability ``forward``. A small reward sits at the left end, the
    large one at the right end, so the optimal policy has to commit to the
    slow rightward swim.
    """
    S, A = n_states, 2
    back = 1.0 - forward - stay
    T = np.zeros((S, A, S))
    for s in range(S):
        T[s, 0, max(s - 1, 0)] = 1.0
        if s == 0:
            T[s, 1, 1] += forward
            T[s, 1, 0] += stay + back
        elif s == S - 1:
            T[s, 1, s] += forward + stay
            T[s, 1, s - 1] += back
        else:
            T[s, 1, s + 1] += forward
            T[s, 1, s] += stay
            T[s, 1, s - 1] += back
    R = np.zeros((S, A))
    R[0, 0] = 0.05
    R[S - 1, 1] = 1.0
    mu = np.zeros(S)
    mu[0] = 1.0
    return TabularMDP(R, T, mu, horizon)


def grid4(horizon: int = 5) -> TabularMDP:
    """2x2 grid with a rewarding corner.

    States 0..3 are (row, col) = (0,0), (0,1), (1,0), (1,1). Actions are
    right, down, left, up; bumping a wall stays put. Each action slips to a
    uniformly random other state with its own probability, which breaks the
    symmetric ties a deterministic grid would have.
    """
    S, A = 4, 4
    moves = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    slip = [0.10, 0.15, 0.20, 0.25]
    T = np.zeros((S, A, S))
    for s in range(S):
        r, c = divmod(s, 2)
        for a, (dr, dc) in enumerate(moves):
            nr, nc = r + dr, c + dc
            tgt = nr * 2 + nc if 0 <= nr < 2 and 0 <= nc < 2 else s
            T[s, a, tgt] += 1 - slip[a]
            for o in range(S):
                if o != s:
                    T[s, a, o] += slip[a] / (S - 1)
    R = np.zeros((S, A))
    R[3, :] = [0.9, 1.0, 0.6, 0.5]
    R[1, 1] = 0.2
    R[2, 0] = 0.1
    mu = np.full(S, 0.25)
    return TabularMDP(R, T, mu, horizon)


MDP_PRESETS = {"chain-6": chain, "grid-4": grid4}


def load_mdp(name_or_path) -> TabularMDP:
    """A preset name (``chain-6``, ``grid-4``) or a path to an MDP JSON file."""
    key = str(name_or_path)
    if key in MDP_PRESETS:
        return MDP_PRESETS[key]()
    path = Path(key)
    if not path.exists():
        raise ValidationError(
            f"unknown MDP {key!r}: not a preset ({', '.join(MDP_PRESETS)}) or an existing file"
        )
    return TabularMDP.load(path)
