"""Blahut-Arimoto solvers for rate-distortion and distortion-rate problems.

All solvers work on a finite source ``p`` over symbols x and a caller-supplied
finite codebook z, with a nonnegative distortion matrix ``d[x, z]``.
Iterations are done in the log domain, so large multipliers do not underflow.

Two ways of hitting a distortion target are provided by
:func:`rate_at_distortion`:

* ``"bisection"``: bisect on the Lagrange multiplier, running Blahut-Arimoto
  to convergence at every trial multiplier.
* ``"constrained"``: a single Blahut-Arimoto run in which the multiplier is
  re-solved at every iteration so that the channel meets the target exactly.
  Each iteration minimizes the rate bound over the feasible set, so the rate
  is non-increasing. Much cheaper, and batched over problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .info import (
    ValidationError,
    as_distribution,
    entropy_nats,
    mutual_information_nats,
    nats_to_bits,
)

BA_TOL = 1e-10
BA_MAX_ITER = 100_000
DIST_TOL = 1e-9
BISECT_STEPS = 80
PRUNE_MASS = 1e-12
WARM_MIX = 1e-3
BETA_CAP = 1e12


@dataclass
class RDPoint:
    """One solved point on a rate-distortion frontier."""

    beta: float
    rate_nats: float
    distortion: float
    channel: np.ndarray
    iterations: int = 0
    converged: bool = True
    objective_trace: list[float] | None = field(default=None, repr=False)
    # one objective trace per Blahut-Arimoto run that produced this point
    run_traces: list[list[float]] | None = field(default=None, repr=False)

    @property
    def rate(self) -> float:
        """Rate in bits."""
        return nats_to_bits(self.rate_nats)


def as_distortion(d, name: str = "distortion matrix") -> np.ndarray:
    d = np.array(d, dtype=float)
    if d.ndim != 2 or d.shape[0] == 0 or d.shape[1] == 0:
        raise ValidationError(f"{name}: expected a non-empty 2-d array, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValidationError(f"{name}: entries must be finite")
    if np.any(d < 0):
        raise ValidationError(f"{name}: entries must be >= 0")
    return d


def _check(source, d):
    p = as_distribution(source, "source")
    d = as_distortion(d)
    if d.shape[0] != p.size:
        raise ValidationError(
            f"distortion matrix has {d.shape[0]} rows but source has {p.size} symbols"
        )
    return p, d


def min_distortion(source, d) -> float:
    """Smallest achievable distortion: every x mapped to its cheapest z."""
    p, d = _check(source, d)
    return float(p @ d.min(axis=1))


def max_distortion(source, d) -> tuple[float, int]:
    """Distortion of the best single-letter codebook and its (lowest) column index."""
    p, d = _check(source, d)
    col = p @ d
    z = int(np.argmin(col))
    return float(col[z]), z


def zero_rate_point(source, d) -> RDPoint:
    """Rate-0 channel sending every x to the best single output."""
    p, d = _check(source, d)
    dmax, z = max_distortion(p, d)
    w = np.zeros_like(d)
    w[:, z] = 1.0
    return RDPoint(beta=0.0, rate_nats=0.0, distortion=dmax, channel=w)


def _objective(p, log_w, w, d, beta, log_q):
    """I(Q) + beta * E[d] in nats, with log_q the true output marginal of w."""
    with np.errstate(invalid="ignore"):
        kl = np.where(w > 0, w * (log_w - log_q), 0.0).sum(axis=1)
    rate = max(float(p @ kl), 0.0)
    dist = float(p @ (w * d).sum(axis=1))
    return rate, dist


def logsumexp(x, axis, keepdims=False):
    """log(sum(exp(x))) along ``axis``; rows that are all -inf give -inf."""
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def _log(q):
    with np.errstate(divide="ignore"):
        return np.log(q)


def _init_q(n, init):
    if init is None:
        return np.full(n, 1.0 / n)
    q = np.asarray(init, dtype=float)
    q = (1 - WARM_MIX) * q / q.sum() + WARM_MIX / n
    return q


def ba_iterate(
    source,
    d,
    beta: float,
    tol: float = BA_TOL,
    max_iter: int = BA_MAX_ITER,
    init=None,
    trace: bool = False,
    prune: float = PRUNE_MASS,
) -> RDPoint:
    """Blahut-Arimoto at a fixed multiplier ``beta``.

    Alternates Q(z|x) ~ q(z) exp(-beta d(x,z)) and q(z) = sum_x p(x) Q(z|x)
    until the Lagrangian rate + beta * distortion (nats) changes by less than
    ``tol``. ``init`` optionally warm-starts the output marginal.

    ``beta == 0`` returns the best rate-0 channel (the limit as beta -> 0+).
    Non-convergence is reported through ``converged``, not raised.
    """
    p, d = _check(source, d)
    if not beta >= 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    if beta == 0:
        pt = zero_rate_point(p, d)
        if trace:
            pt.objective_trace = [pt.distortion * 0.0]
        return pt

    # the rate-0 corner q = delta(z*) is a fixed point and optimal iff
    # sum_x p(x) exp(-beta (d(x,z) - d(x,z*))) <= 1 for every z
    corner = zero_rate_point(p, d)
    z_star = int(np.argmax(corner.channel[0]))
    with np.errstate(over="ignore"):
        c = p @ np.exp(-beta * (d - d[:, [z_star]]))
    if np.all(c <= 1.0):
        corner.beta = float(beta)
        corner.iterations = 1
        if trace:
            corner.objective_trace = [beta * corner.distortion]
        return corner

    nz = d.shape[1]
    q = _init_q(nz, init)
    log_q = _log(q)
    neg_bd = -beta * d
    hist = [] if trace else None
    prev = np.inf
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        logits = log_q + neg_bd
        m = logits.max(axis=1)
        e = np.exp(logits - m[:, None])
        z = e.sum(axis=1)
        w = e / z[:, None]
        q = p @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            log_q_new = np.log(q)
            shift = np.where(q > 0, q * (log_q_new - log_q), 0.0).sum()
        # I(w) + beta E[d] = -sum_x p(x) log Z_x - KL(q_new || q_old), where Z_x
        # normalizes row x against the previous marginal
        obj = -float(p @ (m + np.log(z))) - float(shift)
        log_q = log_q_new
        if not np.isfinite(obj):
            raise FloatingPointError(f"non-finite Blahut-Arimoto objective at beta={beta}")
        if hist is not None:
            hist.append(obj)
        if abs(prev - obj) < tol:
            converged = True
            break
        prev = obj
        if prune > 0:
            dead = q < prune
            if np.any(dead) and not np.all(dead):
                q = np.where(dead, 0.0, q)
                q /= q.sum()
                log_q = _log(q)
    rate = mutual_information_nats(p, w)
    dist = float(p @ (w * d).sum(axis=1))
    # at small beta the iteration creeps towards the rate-0 corner and can stop
    # on the absolute tolerance first; keep whichever candidate is better
    zr = zero_rate_point(p, d)
    if beta * zr.distortion < obj:
        if hist is not None:
            hist.append(beta * zr.distortion)
        zr.beta, zr.iterations, zr.converged, zr.objective_trace = float(beta), it, converged, hist
        return zr
    return RDPoint(
        beta=float(beta),
        rate_nats=rate,
        distortion=dist,
        channel=w,
        iterations=it,
        converged=converged,
        objective_trace=hist,
    )


def ba_restricted(source, d, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
                  init=None, trace: bool = False) -> RDPoint:
    """The beta -> infinity limit: minimum rate among minimum-distortion channels.

    Each row may only use its cheapest outputs; Blahut-Arimoto over that
    restricted support then minimizes the rate.
    """
    p, d = _check(source, d)
    allowed = d <= d.min(axis=1, keepdims=True)
    log_mask = np.where(allowed, 0.0, -np.inf)
    nz = d.shape[1]
    q = _init_q(nz, init)
    log_q = _log(q)
    log_p = _log(p)
    hist = [] if trace else None
    prev = np.inf
    converged = False
    it = 0
    # rows with a single allowed output are fixed; skip iterating when all are
    trivial = bool(np.all(allowed.sum(axis=1) == 1))
    while it < max_iter:
        it += 1
        logits = log_q[None, :] + log_mask
        log_w = logits - logsumexp(logits, axis=1, keepdims=True)
        w = np.exp(log_w)
        log_q = logsumexp(log_p[:, None] + log_w, axis=0)
        rate, dist = _objective(p, log_w, w, d, 0.0, log_q)
        if hist is not None:
            hist.append(rate)
        if trivial or abs(prev - rate) < tol:
            converged = True
            break
        prev = rate
    return RDPoint(beta=float("inf"), rate_nats=rate, distortion=dist, channel=w,
                   iterations=it, converged=converged, objective_trace=hist)


def _bisect_beta(p, d, target, key, increasing, dtol, ba_tol, max_iter, trace, traces):
    """Shared bracket-and-bisect driver.

    ``key(point)`` is the monitored quantity (distortion or rate) and
    ``increasing`` its direction in beta. Returns (feasible_point, infeasible_point).
    A point is feasible when key <= target.
    """
    scale = float(np.ptp(d)) or 1.0
    beta_hi = 1.0 / scale
    q_warm = None
    ok_pt, bad_pt = None, None

    def solve(beta):
        nonlocal q_warm
        pt = ba_iterate(p, d, beta, tol=ba_tol, max_iter=max_iter, init=q_warm, trace=trace)
        q_warm = p @ pt.channel
        if trace:
            traces.append(pt.objective_trace)
        return pt

    # walk beta until the target is bracketed
    pt = solve(beta_hi)
    feasible = lambda pt: key(pt) <= target  # noqa: E731
    if increasing:
        # rate grows with beta: shrink until feasible, grow until infeasible
        lo_pt = None
        while feasible(pt):
            lo_pt = pt
            if pt.beta > BETA_CAP:
                return pt, None
            pt = solve(pt.beta * 2)
        hi_pt = pt
        if lo_pt is None:
            b = pt.beta
            while True:
                b /= 2
                cand = solve(b)
                if feasible(cand):
                    lo_pt = cand
                    break
                hi_pt = cand
                if b < 1e-300:
                    return None, hi_pt
        ok_pt, bad_pt = lo_pt, hi_pt
    else:
        # distortion falls with beta: grow until feasible
        hi_pt = None
        lo_pt = None
        while not feasible(pt):
            lo_pt = pt
            if pt.beta > BETA_CAP:
                return None, pt
            pt = solve(pt.beta * 2)
        hi_pt = pt
        if lo_pt is None:
            b = pt.beta
            while True:
                b /= 2
                cand = solve(b)
                if not feasible(cand):
                    lo_pt = cand
                    break
                hi_pt = cand
                if b < 1e-300:
                    return hi_pt, None
        ok_pt, bad_pt = hi_pt, lo_pt

    for _ in range(BISECT_STEPS):
        if target - key(ok_pt) <= dtol:
            break
        mid = np.sqrt(ok_pt.beta * bad_pt.beta)
        if not (min(ok_pt.beta, bad_pt.beta) < mid < max(ok_pt.beta, bad_pt.beta)):
            break
        pt = solve(mid)
        if feasible(pt):
            ok_pt = pt
        else:
            bad_pt = pt
    return ok_pt, bad_pt


def rate_at_distortion(
    source,
    d,
    D: float,
    tol: float = DIST_TOL,
    ba_tol: float = BA_TOL,
    max_iter: int = BA_MAX_ITER,
    method: str = "bisection",
    trace: bool = False,
) -> RDPoint:
    """Minimum rate subject to expected distortion <= ``D``.

    The returned point is feasible (distortion <= D + tol). ``D >= D_max``
    short-circuits to the rate-0 channel on the best single output; ``D`` at
    (or within ``tol`` of) ``D_min`` uses :func:`ba_restricted`.

    Raises ValidationError when ``D`` is below the minimum achievable distortion.
    """
    p, d = _check(source, d)
    if not D >= 0:
        raise ValidationError(f"D must be >= 0, got {D}")
    dmin = float(p @ d.min(axis=1))
    dmax, _ = max_distortion(p, d)
    if D < dmin - 1e-12 * max(1.0, abs(dmin)):
        raise ValidationError(f"infeasible distortion {D!r} < minimum achievable {dmin!r}")
    if D >= dmax:
        pt = zero_rate_point(p, d)
        if trace:
            pt.objective_trace = [0.0]
        return pt
    if D <= dmin + tol:
        return ba_restricted(p, d, tol=ba_tol, max_iter=max_iter, trace=trace)

    if method == "constrained":
        res = constrained_ba_batch(p[None], d[None], np.array([D]), tol=ba_tol,
                                   max_iter=max_iter, trace=trace)
        return res.point(0)
    if method != "bisection":
        raise ValidationError(f"unknown method {method!r}")

    traces: list = []
    ok, bad = _bisect_beta(p, d, D, lambda pt: pt.distortion, False, tol, ba_tol,
                           max_iter, trace, traces)
    if ok is None:
        # only reachable when D sits within rounding of dmin
        return ba_restricted(p, d, tol=ba_tol, max_iter=max_iter, trace=trace)
    ok.converged = ok.converged and (D - ok.distortion <= tol or bad is None
                                     or abs(bad.beta - ok.beta) <= 1e-12 * ok.beta)
    if trace:
        ok.run_traces = traces
    return ok


def distortion_at_rate(
    source,
    d,
    R: float,
    tol: float = DIST_TOL,
    ba_tol: float = BA_TOL,
    max_iter: int = BA_MAX_ITER,
) -> RDPoint:
    """Minimum expected distortion subject to rate <= ``R`` bits."""
    p, d = _check(source, d)
    if not R >= 0:
        raise ValidationError(f"R must be >= 0, got {R}")
    if R == 0:
        return zero_rate_point(p, d)
    R_nats = R * np.log(2.0)
    top = ba_restricted(p, d, tol=ba_tol, max_iter=max_iter)
    if R_nats >= entropy_nats(p) or top.rate_nats <= R_nats + tol:
        return top
    ok, _ = _bisect_beta(p, d, R_nats, lambda pt: pt.rate_nats, True, tol, ba_tol,
                         max_iter, False, [])
    if ok is None:
        return zero_rate_point(p, d)
    return ok


def rd_curve(source, d, beta_grid, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
             trace: bool = False) -> list[RDPoint]:
    """Blahut-Arimoto on every multiplier of an ascending grid, warm-started."""
    p, d = _check(source, d)
    betas = np.asarray(beta_grid, dtype=float)
    if betas.ndim != 1 or betas.size == 0:
        raise ValidationError("beta_grid must be a non-empty 1-d array")
    if np.any(np.diff(betas) < 0):
        raise ValidationError("beta_grid must be sorted ascending")
    out = []
    q = None
    for b in betas:
        pt = ba_iterate(p, d, float(b), tol=tol, max_iter=max_iter, init=q, trace=trace)
        if b > 0:
            q = p @ pt.channel
        out.append(pt)
    return out


# ---------------------------------------------------------------------------
# batched constrained Blahut-Arimoto


@dataclass
class BatchResult:
    channel: np.ndarray      # (B, X, Z)
    beta: np.ndarray         # (B,)
    rate_nats: np.ndarray    # (B,)
    distortion: np.ndarray   # (B,)
    iterations: np.ndarray   # (B,)
    converged: np.ndarray    # (B,)
    marginal: np.ndarray     # (B, Z)
    traces: list | None = None

    def point(self, i: int) -> RDPoint:
        return RDPoint(
            beta=float(self.beta[i]),
            rate_nats=float(self.rate_nats[i]),
            distortion=float(self.distortion[i]),
            channel=self.channel[i],
            iterations=int(self.iterations[i]),
            converged=bool(self.converged[i]),
            objective_trace=None if self.traces is None else self.traces[i],
        )


def _softmax_rows(logits):
    log_w = logits - logsumexp(logits, axis=-1, keepdims=True)
    return log_w, np.exp(log_w)


def _solve_multiplier(p, d, log_q, D, beta0, inner_tol=1e-13, steps=200):
    """Per problem, the beta >= 0 with E[d] under softmax(log_q - beta d) equal to D.

    Safeguarded Newton in log(beta). Returns beta and the induced channel; the
    channel is feasible up to ``inner_tol``.
    """
    B = D.shape[0]
    lo = np.zeros(B)
    hi = np.full(B, np.inf)
    # beta = 0 feasible means the constraint is slack
    q = np.exp(log_q)
    d0 = np.einsum("bx,bz,bxz->b", p, q, d)
    slack = d0 <= D
    beta = np.where(slack, 0.0, np.maximum(beta0, 1e-8))
    active = ~slack
    solved = slack.copy()
    for _ in range(steps):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        b = beta[idx]
        dd = d[idx]
        _, w = _softmax_rows(log_q[idx, None, :] - b[:, None, None] * dd)
        m1 = (w * dd).sum(-1)
        m2 = (w * dd * dd).sum(-1)
        px = p[idx]
        g = (px * m1).sum(-1) - D[idx]
        dg = -(px * (m2 - m1 * m1)).sum(-1)  # d E[d] / d beta <= 0
        feas = g <= 0
        hi[idx] = np.where(feas, np.minimum(hi[idx], b), hi[idx])
        lo[idx] = np.where(~feas, np.maximum(lo[idx], b), lo[idx])
        done = (np.abs(g) <= inner_tol) | (np.isfinite(hi[idx]) & (hi[idx] - lo[idx] <= 1e-15 * hi[idx]))
        # newton in u = log beta: du = -g / (beta * dg)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = np.clip(-g / (b * dg), -30, 30)
            # without an upper bracket, grow by at most 1e3 per step
            step = np.where(np.isfinite(hi[idx]), step, np.minimum(step, np.log(1e3)))
            cand = b * np.exp(step)
        bad = ~np.isfinite(cand) | (cand <= lo[idx]) | (cand >= hi[idx])
        fallback = np.where(np.isfinite(hi[idx]),
                            np.where(lo[idx] > 0, np.sqrt(lo[idx] * hi[idx]), hi[idx] / 8),
                            b * 8)
        nb = np.where(bad, fallback, cand)
        nb = np.minimum(nb, BETA_CAP)
        beta[idx] = np.where(done, b, nb)
        solved[idx] = done
        active[idx] = ~done & ~((b >= BETA_CAP) & ~feas)
    # out of steps: fall back to the feasible end of the bracket
    beta = np.where(~solved & np.isfinite(hi), hi, beta)
    log_w, w = _softmax_rows(log_q[:, None, :] - beta[:, None, None] * d)
    return beta, log_w, w


def constrained_ba_batch(P, d, D, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
                         q0=None, beta0=None, trace: bool = False) -> BatchResult:
    """Constrained Blahut-Arimoto on a batch of problems.

    ``P`` is (B, X), ``d`` is (B, X, Z) and ``D`` is (B,). Each iteration picks
    the multiplier making the channel meet ``D`` exactly, then refreshes the
    output marginal, so the rate is non-increasing and every iterate is
    feasible. Callers are expected to have handled ``D >= D_max`` and
    ``D <= D_min`` already.
    """
    P = np.asarray(P, dtype=float)
    d = np.asarray(d, dtype=float)
    D = np.asarray(D, dtype=float)
    B, _, Z = d.shape
    q = np.full((B, Z), 1.0 / Z) if q0 is None else (
        (1 - WARM_MIX) * q0 / q0.sum(-1, keepdims=True) + WARM_MIX / Z)
    log_q = np.log(q)
    beta = np.ones(B) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    rate = np.full(B, np.inf)
    iters = np.zeros(B, dtype=int)
    conv = np.zeros(B, dtype=bool)
    W = np.empty_like(d)
    dist = np.zeros(B)
    traces = [[] for _ in range(B)] if trace else None
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        b, log_w, w = _solve_multiplier(P[idx], d[idx], log_q[idx], D[idx], beta[idx])
        with np.errstate(divide="ignore"):
            lqn = logsumexp(np.log(P[idx])[:, :, None] + log_w, axis=1)
        with np.errstate(invalid="ignore"):
            kl = np.where(w > 0, w * (log_w - lqn[:, None, :]), 0.0).sum(-1)
        r = np.maximum((P[idx] * kl).sum(-1), 0.0)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite rate in constrained Blahut-Arimoto")
        W[idx] = w
        beta[idx] = b
        dist[idx] = (P[idx] * (w * d[idx]).sum(-1)).sum(-1)
        iters[idx] += 1
        if traces is not None:
            for j, i in enumerate(idx):
                traces[i].append(float(r[j]))
        done = np.abs(rate[idx] - r) < tol
        rate[idx] = r
        log_q[idx] = lqn
        conv[idx] = done
        active[idx] = ~done
    marg = np.einsum("bx,bxz->bz", P, W)
    return BatchResult(channel=W, beta=beta, rate_nats=rate, distortion=dist,
                       iterations=iters, converged=conv, marginal=marg, traces=traces)
