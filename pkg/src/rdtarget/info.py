"""Information-theoretic primitives over finite distributions.

Everything is computed in nats internally; the public ``entropy``,
``kl_divergence`` and ``mutual_information`` report bits. The ``*_nats``
variants are what the solvers use.
"""
from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)

SUM_TOL = 1e-9
REJECT_TOL = 1e-6


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


def nats_to_bits(x):
    return x / LN2


def bits_to_nats(x):
    return x * LN2


def as_distribution(p, name: str = "distribution") -> np.ndarray:
    """Validate ``p`` as a probability vector and return a float copy.

    Sums within ``SUM_TOL`` of one are accepted as-is, sums off by at most
    ``REJECT_TOL`` are renormalized, anything else is rejected.
    """
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name}: expected a non-empty 1-d array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name}: entries must be finite")
    if np.any(p < 0):
        raise ValidationError(f"{name}: entries must be >= 0 (min={p.min():.3g})")
    s = p.sum()
    if abs(s - 1.0) > REJECT_TOL:
        raise ValidationError(f"{name}: entries must sum to 1 (sum={s:.12g})")
    if abs(s - 1.0) > SUM_TOL:
        p /= s
    return p


def as_channel(w, name: str = "channel") -> np.ndarray:
    """Validate a row-stochastic matrix; rows are renormalized like ``as_distribution``."""
    w = np.array(w, dtype=float)
    if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
        raise ValidationError(f"{name}: expected a non-empty 2-d array, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"{name}: entries must be finite")
    if np.any(w < 0):
        raise ValidationError(f"{name}: entries must be >= 0")
    s = w.sum(axis=1)
    bad = np.abs(s - 1.0) > REJECT_TOL
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"{name}: row {row} sums to {s[row]:.12g}, expected 1")
    fix = np.abs(s - 1.0) > SUM_TOL
    if np.any(fix):
        w[fix] /= s[fix, None]
    return w


def xlogy(x, y):
    """x * log(y) with 0 * log(anything) = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(y)
    return np.where(x > 0, out, 0.0)


def entropy_nats(p) -> float:
    p = np.asarray(p, dtype=float)
    return float(max(-xlogy(p, p).sum(), 0.0))


def kl_nats(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p > 0) & (q <= 0)):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.where(q > 0, q, 1.0))), 0.0)
    return float(max(terms.sum(), 0.0))


def mutual_information_nats(source, channel) -> float:
    """Sum over x of p(x) KL(channel[x] || output marginal)."""
    p = np.asarray(source, dtype=float)
    w = np.asarray(channel, dtype=float)
    marginal = p @ w
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(w) - np.log(np.where(marginal > 0, marginal, 1.0))
        terms = np.where(w > 0, w * log_ratio, 0.0)
    return float(max(p @ terms.sum(axis=1), 0.0))


def entropy(p) -> float:
    """Shannon entropy of ``p`` in bits."""
    return nats_to_bits(entropy_nats(as_distribution(p)))


def kl_divergence(p, q) -> float:
    """KL(p || q) in bits; ``inf`` when p puts mass where q has none."""
    p = as_distribution(p, "p")
    q = as_distribution(q, "q")
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    return nats_to_bits(kl_nats(p, q))


def mutual_information(source, channel) -> float:
    """I(X; Z) in bits for X ~ ``source`` and Z | X ~ ``channel[X]``."""
    p = as_distribution(source, "source")
    w = as_channel(channel)
    if w.shape[0] != p.size:
        raise ValidationError(
            f"channel has {w.shape[0]} rows but source has {p.size} symbols"
        )
    return nats_to_bits(mutual_information_nats(p, w))


def joint(source, channel) -> np.ndarray:
    """Joint table P(x, z) = p(x) W(z|x)."""
    p = as_distribution(source, "source")
    w = as_channel(channel)
    if w.shape[0] != p.size:
        raise ValidationError("channel/source dimension mismatch")
    return p[:, None] * w


def conditional_entropy_nats(pxy: np.ndarray, given: int) -> float:
    """H(other | given) from a joint table; ``given`` is the axis conditioned on."""
    pxy = np.asarray(pxy, dtype=float)
    return entropy_nats(pxy.ravel()) - entropy_nats(pxy.sum(axis=1 - given))
