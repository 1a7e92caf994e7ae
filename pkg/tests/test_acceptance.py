"""End-to-end acceptance checks; one verdict per criterion in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -s``. The bandit and MDP
criteria take several minutes on one core.
"""
import hashlib
import itertools
import math
import time

import numpy as np
import pytest

from rdtarget import bandit as bd
from rdtarget import mdp as md
from rdtarget.harness import (
    ExperimentConfig,
    parse_grid,
    run,
    run_bandit_experiment,
    run_mdp_experiment,
    run_rd_curve,
    seed_rng,
    write_csv,
)
from rdtarget.info import entropy_nats
from rdtarget.presets import chain, grid4
from rdtarget.rd import max_distortion, rate_at_distortion, rd_curve

BASE_SEED = 20240601
D_GRID = [0.0, 0.0025, 0.01, 0.04, 0.16, 1.0]
LN2 = math.log(2)


def hb(x):
    return 0.0 if x <= 0 or x >= 1 else -(x * math.log2(x) + (1 - x) * math.log2(1 - x))


def digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# criteria 1-3: frontiers

@pytest.fixture(scope="module")
def traces():
    """Objective traces of every Blahut-Arimoto run made by criteria 1 and 2."""
    return []


def test_criterion_1_closed_form(record, traces):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(kind="rd_curve", preset="bernoulli-hamming",
                           betas=parse_grid("log:-2:2:40"))
    pts, _ = run_rd_curve(cfg, trace=True)
    elapsed = time.perf_counter() - t0
    traces.extend(pt.objective_trace for pt in pts)
    err = max(abs(pt.rate - (1 - hb(pt.distortion))) for pt in pts)
    ok = len(pts) == 40 and err < 1e-3 and elapsed < 1.0
    record(1, ok, f"max |rate - (1 - h_b(D))| = {err:.2e} bits over {len(pts)} points, "
                  f"{elapsed:.2f}s")
    assert ok


def _convex_violation(D, R):
    order = np.argsort(D, kind="stable")
    D, R = D[order], R[order]
    keep = np.concatenate([[True], np.diff(D) > 1e-9])
    D, R = D[keep], R[keep]
    worst = 0.0
    for i in range(1, len(D) - 1):
        t = (D[i] - D[i - 1]) / (D[i + 1] - D[i - 1])
        worst = max(worst, R[i] - ((1 - t) * R[i - 1] + t * R[i + 1]))
    return worst


def test_criterion_2_frontier_shape(record, traces):
    rng = np.random.default_rng(BASE_SEED)
    betas = np.concatenate([[0.0], np.logspace(-1, 3, 20)])
    t0 = time.perf_counter()
    worst_convex = worst_mono = worst_r0 = worst_rmax = -np.inf
    for _ in range(100):
        p = rng.dirichlet(np.ones(8))
        d = rng.random((8, 8))
        # shift each row so its cheapest output is free: D_min = 0
        d -= d.min(axis=1, keepdims=True)
        pts = rd_curve(p, d, betas, trace=True)
        r0 = rate_at_distortion(p, d, 0.0, trace=True)
        rmax = rate_at_distortion(p, d, max_distortion(p, d)[0])
        traces.extend(pt.objective_trace for pt in pts)
        traces.append(r0.objective_trace)
        D = np.array([pt.distortion for pt in pts] + [0.0])
        R = np.array([pt.rate for pt in pts] + [r0.rate])
        # along the beta grid, distortion falls and rate rises
        mono = max(np.max(np.diff(D[:-1])), -np.min(np.diff(R[:-1])))
        # as a function of distortion, rate is non-increasing
        order = np.argsort(D, kind="stable")
        mono = max(mono, np.max(np.diff(R[order])))
        worst_mono = max(worst_mono, mono)
        worst_convex = max(worst_convex, _convex_violation(D, R))
        worst_r0 = max(worst_r0, r0.rate_nats - entropy_nats(p))
        worst_rmax = max(worst_rmax, rmax.rate_nats)
    elapsed = time.perf_counter() - t0
    ok = (worst_mono <= 1e-6 and worst_convex <= 1e-6 and worst_r0 <= 1e-12
          and worst_rmax == 0.0 and elapsed < 30)
    record(2, ok, f"monotonicity slack {worst_mono:.1e}, convexity slack {worst_convex:.1e}, "
                  f"max R(0) - H = {worst_r0:.1e} nats, max R(D_max) = {worst_rmax}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_3_monotone_objective(record, traces):
    # relies on criteria 1 and 2 having filled the traces
    runs = [t for t in traces if t is not None]
    worst = max((np.max(np.diff(t)) for t in runs if len(t) > 1), default=-np.inf)
    ok = len(runs) >= 40 + 100 * 22 and worst <= 1e-12
    record(3, ok, f"{len(runs)} runs, {sum(map(len, runs))} iterations, "
                  f"largest per-iteration increase {worst:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# criterion 4: planning oracle

def _forward_value(mdp, plan):
    dist = mdp.init_dist
    total = 0.0
    for h, acts in enumerate(plan):
        idx = np.arange(mdp.n_states)
        total += float(dist @ mdp.rewards[idx, list(acts)])
        dist = dist @ mdp.transitions[idx, list(acts)]
    return total


def test_criterion_4_planning_oracle(record):
    rng = np.random.default_rng(BASE_SEED + 4)
    t0 = time.perf_counter()
    worst = 0.0
    per_step = list(itertools.product(range(2), repeat=2))
    for _ in range(50):
        m = md.TabularMDP(rng.random((2, 2)), rng.dirichlet(np.ones(2), size=(2, 2)),
                          rng.dirichlet(np.ones(2)), 2)
        q, _ = md.value_iteration(m)
        brute = max(_forward_value(m, plan) for plan in itertools.product(per_step, repeat=2))
        worst = max(worst, abs(md.initial_value(m, q) - brute))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5
    record(4, ok, f"max |V*_1 - brute force over 16 policies| = {worst:.1e}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# criteria 5-11 produce CSV text so criterion 12 can rerun them

def bandit_cfg(agent, **kw):
    return ExperimentConfig(kind="bandit", agent=agent, n_arms=10, T=500, n_seeds=200,
                            base_seed=BASE_SEED, **kw)


def run_c5():
    t0 = time.perf_counter()
    rep, text = run(bandit_cfg("ts"))
    return rep, text, time.perf_counter() - t0


def run_c6():
    t0 = time.perf_counter()
    reps, texts = {}, {}
    for D in D_GRID:
        reps[D], texts[D] = run(bandit_cfg("blasts", D=D, M=100))
    return reps, texts, time.perf_counter() - t0


def summarize_c7(reps):
    rows = []
    for D in D_GRID:
        rep = reps[D]
        w_mean, w_se = rep.window(0.1)
        r_mean, r_se = rep.window(1.0, rep.rate_bits)
        rows.append((D, w_mean, w_se, r_mean, r_se))
    text = write_csv(None, ["D", "window_regret", "window_se", "rate_bits", "rate_se"], rows)
    return rows, text


def frozen_posterior():
    """Posterior of a TS agent after 50 periods on a prior-drawn 10-arm bandit."""
    rng = seed_rng(BASE_SEED, 8_000)
    prior = bd.BetaPosterior.uniform(10)
    env = bd.sample_env(prior, rng)
    post = prior
    for _ in range(50):
        a = bd.ts_select(post, rng)
        post = bd.update(post, a, bd.pull(env, a, rng))
    return post


def run_c8(n=10_000):
    post = frozen_posterior()
    r_ts, r_bl = seed_rng(BASE_SEED, 8_001), seed_rng(BASE_SEED, 8_002)
    ts = np.bincount([bd.ts_select(post, r_ts) for _ in range(n)], minlength=10) / n
    bl = np.bincount([bd.blasts_select(post, 0.0, 100, r_bl, ba_tol=1e-6)[0]
                      for _ in range(n)], minlength=10) / n
    text = write_csv(None, ["arm", "ts_freq", "blasts_freq"],
                     [(a, ts[a], bl[a]) for a in range(10)])
    return ts, bl, text


def two_mdps():
    # same chain, different reliability of the rightward action: the optimal
    # policies differ
    a = chain(n_states=4, horizon=6, forward=0.9, stay=0.05)
    b = chain(n_states=4, horizon=6, forward=0.05, stay=0.05)
    return a, b


def run_c9(n=10_000):
    a, b = two_mdps()
    post = md.FiniteMDPPosterior((a, b), [0.3, 0.7])
    pis = [md.value_iteration(m)[1].probs for m in (a, b)]
    rng = seed_rng(BASE_SEED, 9_000)
    hits = np.zeros(2)
    for _ in range(n):
        traj, _ = md.psrl_episode(post, a, rng)
        hits += [np.array_equal(traj.policy.probs, p) for p in pis]
    freq = hits / n
    text = write_csv(None, ["mdp", "weight", "frequency"],
                     [(i, w, f) for i, (w, f) in enumerate(zip([0.3, 0.7], freq))])
    return freq, text


def mdp_cfg(agent, D=0.0):
    return ExperimentConfig(kind="mdp", agent=agent, env="chain-6", K=300, n_seeds=100, D=D,
                            M=20, base_seed=BASE_SEED)


def run_c10():
    t0 = time.perf_counter()
    H = chain().horizon
    out = {}
    for key, cfg in [("psrl", mdp_cfg("psrl")), ("rd0", mdp_cfg("rd_psrl", 0.0)),
                     ("rdH2", mdp_cfg("rd_psrl", float(H * H)))]:
        out[key] = run(cfg)
    return out, time.perf_counter() - t0


def run_c11():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(kind="bottleneck", env="grid-4", betas=parse_grid("0,log:-1:3:20"),
                           mode="fixed_uniform")
    results, text = run(cfg)
    return results, text, time.perf_counter() - t0


@pytest.fixture(scope="module")
def first_pass():
    """CSV digests of the first run of each of criteria 5-11."""
    return {}


def test_criterion_5_ts_bound(record, first_pass):
    rep, text, elapsed = run_c5()
    first_pass[5] = digest(text)
    mean, se = rep.total()
    bound = rep.bounds["ts"]
    ok = 5 <= mean <= bound and elapsed < 60
    record(5, ok, f"TS regret {mean:.2f} +/- {se:.2f} (se) <= bound {bound:.2f}, "
                  f"{elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def blasts_runs(first_pass):
    reps, texts, elapsed = run_c6()
    first_pass[6] = {D: digest(t) for D, t in texts.items()}
    return reps, elapsed


def test_criterion_6_blasts_bound(record, blasts_runs):
    reps, elapsed = blasts_runs
    parts, ok = [], elapsed < 600
    for D in D_GRID:
        mean, _ = reps[D].total()
        bound = reps[D].bounds["blasts"]
        ok &= mean <= bound
        parts.append(f"D={D}: {mean:.1f}<={bound:.1f}")
    record(6, ok, ", ".join(parts) + f", {elapsed:.0f}s")
    assert ok


def test_criterion_7_satisficing_spectrum(record, blasts_runs, first_pass):
    reps, _ = blasts_runs
    rows, text = summarize_c7(reps)
    first_pass[7] = digest(text)
    ok = True
    for (_, w0, s0, r0, q0), (_, w1, s1, r1, q1) in zip(rows, rows[1:]):
        # consecutive grid points compared with the standard error of the difference
        ok &= w1 >= w0 - 2 * math.hypot(s0, s1)
        ok &= r1 <= r0 + 2 * math.hypot(q0, q1)
    rate_at_one = rows[-1][3]
    ok &= rate_at_one < 0.01
    detail = "; ".join(f"D={D}: regret {w:.4f}, rate {r:.3f}b" for D, w, _, r, _ in rows)
    record(7, ok, detail)
    assert ok


def test_criterion_8_blasts_ts_coincidence(record, first_pass):
    ts, bl, text = run_c8()
    first_pass[8] = digest(text)
    tv = 0.5 * np.abs(ts - bl).sum()
    ok = tv < 0.02
    record(8, ok, f"total variation {tv:.4f} over 10^4 periods")
    assert ok


def test_criterion_9_probability_matching(record, first_pass):
    freq, text = run_c9()
    first_pass[9] = digest(text)
    err = np.abs(freq - [0.3, 0.7]).max()
    ok = err < 0.02 and abs(freq.sum() - 1) < 1e-12
    record(9, ok, f"frequencies {freq[0]:.4f}/{freq[1]:.4f} vs 0.3/0.7")
    assert ok


def test_criterion_10_rd_psrl_degeneracy(record, first_pass):
    out, elapsed = run_c10()
    first_pass[10] = {k: digest(t) for k, (_, t) in out.items()}
    (m_ps, s_ps), (m_rd, s_rd) = out["psrl"][0].total(), out["rd0"][0].total()
    gap, tol = abs(m_ps - m_rd), 2 * math.hypot(s_ps, s_rd)
    rate_h2 = float(np.mean(out["rdH2"][0].rate_bits))
    ok = gap <= tol and rate_h2 < 0.01 and elapsed < 600
    record(10, ok, f"psrl {m_ps:.2f}+/-{s_ps:.2f} vs rd_psrl(D=0) {m_rd:.2f}+/-{s_rd:.2f} "
                   f"(gap {gap:.2f} <= {tol:.2f}); rate at D=H^2 {rate_h2:.4f}b, {elapsed:.0f}s")
    assert ok


def test_criterion_11_bottleneck_limits(record, first_pass):
    results, text, elapsed = run_c11()
    first_pass[11] = digest(text)
    m = grid4()
    betas = parse_grid("0,log:-1:3:20")
    pi0, g0 = results[0]
    rows = pi0.probs.reshape(-1, m.n_actions)
    flat = bool(np.all(rows == rows[0]))
    q, _ = md.value_iteration(m)
    srt = np.sort(q.q, axis=-1)
    unique = srt[..., -1] - srt[..., -2] > 1e-9
    pi_hi, _ = results[betas.index(1e3)]
    agree = (pi_hi.probs.argmax(axis=-1) == q.q.argmax(axis=-1))[unique].mean()
    I = np.array([g.I_bits for _, g in results])
    EQ = np.array([g.expected_Q for _, g in results])
    mono = np.all(np.diff(I) >= -1e-6) and np.all(np.diff(EQ) >= -1e-6)
    ok = g0.I_bits < 1e-9 and flat and agree == 1.0 and mono and elapsed < 30
    record(11, ok, f"I(beta=0) = {g0.I_bits:.1e}b, argmax agreement at beta=1e3 "
                   f"{agree:.0%} of {int(unique.sum())} unique-greedy (h,s), "
                   f"I and E[Q] monotone: {bool(mono)}, {elapsed:.1f}s")
    assert ok


def test_criterion_12_determinism(record, first_pass, blasts_runs):
    missing = [n for n in range(5, 12) if n not in first_pass]
    again = {5: digest(run_c5()[1])}
    reps, texts, _ = run_c6()
    again[6] = {D: digest(t) for D, t in texts.items()}
    again[7] = digest(summarize_c7(reps)[1])
    again[8] = digest(run_c8()[2])
    again[9] = digest(run_c9()[1])
    again[10] = {k: digest(t) for k, (_, t) in run_c10()[0].items()}
    again[11] = digest(run_c11()[1])
    differ = [n for n in range(5, 12) if n in first_pass and first_pass[n] != again[n]]
    ok = not missing and not differ
    record(12, ok, f"criteria 5-11 rerun: identical CSV bytes for {7 - len(differ) - len(missing)}"
                   f"/7" + (f", differ: {differ}" if differ else "")
                   + (f", no first run: {missing}" if missing else ""))
    assert ok
