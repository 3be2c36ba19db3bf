"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion with the measured values.
"""

import math
import random
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from asap.analysis import (
    classify,
    convergence_grid,
    fixed_point_bisect,
    fixed_point_iterate,
    lsq_slope,
    sign_changes,
)
from asap.cli import main
from asap.gamma import GammaParams, compute_gamma, update_gamma_hat
from asap.packager import (
    PackagerParams,
    build_taylor_table,
    calibrate,
    inflection_point,
    phi,
    phi_taylor,
    target_size,
)
from asap.pipeline import run
from asap.rate import RateBounds, update_bounds
from asap.scenarios import (
    GRID_BETAS,
    GRID_BOUNDS,
    PRESETS,
    SWEEP_SEQUENCE,
    SWEEP_SEGMENT_S,
    complexity_sweep,
    rate_ramp,
    sinusoid_cost,
    static_comparison,
    step_complexity,
)

# Frozen from tests/oracle/mp_oracle.py (mpmath, 50 digits).
ORACLE = {
    "phi_1e-6": -1.5563208552094911928,
    "phi_0.1": -1.4841548816453665572,
    "A": 13843.089071781411742,
    "B": 21545.288222936008337,
    "s_0.01": 401.43492788624988315,
    "t_flex_1": 0.3678794411714423216,
    "t_flex_5": 0.13809742051683540912,
    "wide_A_k10": 6395.029,
    "rmin_decay": 101.0101010101010101,
}
REL = 1e-9


def _close(got, want, rel=REL):
    return math.isclose(got, want, rel_tol=rel, abs_tol=0.0 if want else 1e-15)


def _seconds(t0):
    return time.perf_counter() - t0


# 1 ---------------------------------------------------------------------------


@pytest.mark.criterion(1, "equation unit suite")
def test_equation_units(note):
    t0 = time.perf_counter()
    checks = []
    checks.append(phi(1.0, 5) == 0.0)
    checks.append(_close(phi(1e-6, 5), ORACLE["phi_1e-6"]))
    checks.append(_close(phi(0.1, 5), ORACLE["phi_0.1"]))
    a, b = calibrate(1, 1000, 1e-6, 0.1, 5)
    checks += [_close(a, ORACLE["A"]), _close(b, ORACLE["B"])]
    a3, b3 = calibrate(1, 10_000, 1e-6, 1.0, 10)
    checks += [b3 == 10_000.0, _close(a3, ORACLE["wide_A_k10"], 1e-6), abs(a3 / 6395 - 1) < 1e-3]
    checks.append(_close(inflection_point(1.0), ORACLE["t_flex_1"]))
    checks.append(_close(inflection_point(5.0), ORACLE["t_flex_5"]))
    p = PackagerParams()
    checks.append(_close(p.size_real(0.01), ORACLE["s_0.01"]))
    checks += [target_size(1e-6, p) == 1, target_size(0.1, p) == 1000, target_size(0.01, p) == 401]

    gp = GammaParams()
    checks.append(_close(update_gamma_hat(gp, gp.t_min), 1.0))
    checks.append(_close(update_gamma_hat(gp, gp.t_max), 0.2))
    checks.append(_close(update_gamma_hat(gp, (gp.t_min + gp.t_max) / 2), 0.6))
    checks.append(_close(compute_gamma(0.8, gp, 10.0, 10.0, 50.0), 0.8))
    checks.append(_close(compute_gamma(0.8, gp, 50.0, 10.0, 50.0), 0.2))
    checks.append(_close(compute_gamma(0.8, gp, 30.0, 10.0, 50.0), 0.5))

    def seeded():
        return RateBounds(0.99, initial=(100.0, 1000.0))

    checks.append(_close(update_bounds(seeded(), 500.0)[1], 990.0))
    checks.append(update_bounds(seeded(), 1500.0)[1] == 1500.0)
    checks.append(_close(update_bounds(seeded(), 200.0)[0], ORACLE["rmin_decay"]))
    elapsed = _seconds(t0)
    note(f"{sum(checks)}/{len(checks)} examples at rel 1e-9, {elapsed * 1e3:.1f} ms")
    assert all(checks)
    assert elapsed < 1.0


# 2 ---------------------------------------------------------------------------


@pytest.mark.criterion(2, "calibration boundaries")
def test_calibration_boundaries(note):
    t0 = time.perf_counter()
    rng = random.Random(2)
    misses = 0
    for _ in range(100):
        s_min = rng.randint(1, 500)
        s_max = s_min + rng.randint(1, 20_000)
        t_min = 10 ** rng.uniform(-8, -2)
        t_max = t_min * 10 ** rng.uniform(0.1, 6)
        p = PackagerParams(s_min, s_max, t_min, t_max, rng.uniform(1, 11))
        misses += target_size(t_min, p) != s_min
        misses += target_size(t_max, p) != s_max
    elapsed = _seconds(t0)
    note(f"{misses} boundary misses over 100 sets, {elapsed * 1e3:.1f} ms")
    assert misses == 0
    assert elapsed < 1.0


# 3 ---------------------------------------------------------------------------


@pytest.mark.criterion(3, "Taylor accuracy")
def test_taylor_accuracy(note):
    t0 = time.perf_counter()
    p = PackagerParams()
    ts = np.exp(np.linspace(math.log(p.t_min), math.log(p.t_max), 100_000))
    ts = np.clip(ts, p.t_min, p.t_max).tolist()
    exact = [phi(t, p.kappa) for t in ts]
    errs = {}
    for order in (3, 5):
        table = build_taylor_table(p, order=order, num_points=64)
        errs[order] = max(abs(phi_taylor(t, table) - e) for t, e in zip(ts, exact))
    elapsed = _seconds(t0)
    note(f"max err N=3 {errs[3]:.3g}, N=5 {errs[5]:.3g}, {elapsed:.2f} s")
    assert errs[3] <= 1e-5
    assert errs[5] <= 1e-7
    assert elapsed < 5.0


# 4 ---------------------------------------------------------------------------


@pytest.mark.criterion(4, "trichotomy and convergence")
def test_trichotomy_and_convergence(note):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    labels: dict[str, int] = {}
    worst = 0.0
    unique = 0
    for _ in range(100):
        s_min = rng.randint(1, 20)
        s_max = s_min + rng.randint(100, 5000)
        t_min = 10 ** rng.uniform(-7, -4)
        p = PackagerParams(s_min, s_max, t_min, t_min * 10 ** rng.uniform(2, 6), rng.uniform(1, 11))
        b0, b1 = 10 ** rng.uniform(-8, -1), 10 ** rng.uniform(-10, -3)

        def g(s, b0=b0, b1=b1):
            return b0 + b1 * s

        s0 = rng.uniform(p.s_min, p.s_max)
        trace = fixed_point_iterate(p, g, s0)
        labels[trace.classification] = labels.get(trace.classification, 0) + 1
        assert trace.converged
        unique += sign_changes(p, g) == 1
        worst = max(worst, abs(trace.limit - fixed_point_bisect(p, g)) / p.s_max)

    # the unclamped law stays strictly inside (B - A*pi/2, B + A*pi/2)
    p = PackagerParams()
    lo, hi = p.f_bounds
    ts = np.exp(np.random.default_rng(4).uniform(math.log(1e-12), math.log(1e6), 10_000))
    inside = sum(lo < p.size_real(float(t), clamp=False) < hi for t in ts)
    elapsed = _seconds(t0)
    note(f"labels {labels}, unique roots {unique}/100, max |iterate-bisect|/s_max {worst:.2g}, "
         f"f-bounds {inside}/10000, {elapsed:.2f} s")
    assert "mixed" not in labels
    assert unique == 100
    assert worst <= 1e-6
    assert inside == 10_000
    assert elapsed < 10.0


# 5 ---------------------------------------------------------------------------


@pytest.mark.criterion(5, "convergence grid")
def test_convergence_grid(note):
    t0 = time.perf_counter()
    p = PackagerParams(**GRID_BOUNDS)
    rows = convergence_grid(p, GRID_BETAS, GRID_BETAS)
    surface = np.array([s for _, _, s in rows]).reshape(10, 10)  # [beta0, beta1]
    unique = sum(sign_changes(p, lambda s, b0=b0, b1=b1: b0 + b1 * s) == 1 for b0, b1, _ in rows)
    tol = 1e-6
    non_inc_b0 = bool(np.all(np.diff(surface, axis=0) <= tol))
    non_inc_b1 = bool(np.all(np.diff(surface, axis=1) <= tol))
    elapsed = _seconds(t0)
    note(f"{len(rows)} fixed points, unique {unique}/100, s* in [{surface.min():.6g}, {surface.max():.6g}], "
         f"non-increasing b0={non_inc_b0} b1={non_inc_b1}, {elapsed:.2f} s")
    assert len(rows) == 100
    assert all(p.s_min - 0.5 <= s <= p.s_max + 0.5 for s in surface.flat)
    assert unique == 100
    assert non_inc_b0 and non_inc_b1
    assert elapsed < 30.0


# 6 ---------------------------------------------------------------------------


@pytest.mark.criterion(6, "step adaptation")
def test_step_adaptation(note):
    t0 = time.perf_counter()
    res = run(step_complexity(seed=0))
    elapsed = _seconds(t0)
    steady = [m for m in res.metrics if not m.flushed]
    d = res.summary.disturbances[0]
    nu = res.summary.nu[0]
    post = [m.s_k for m in steady[d:]]
    q = max(1, len(post) // 4)
    s_steady = sum(post[-q:]) / q
    overshoot = max(abs(s - s_steady) for s in post[nu:]) / s_steady if nu is not None else math.inf
    above = max(post) / s_steady - 1
    taus = [m.tau_k for m in steady[d + (nu or 0):]]
    med, mx = statistics.median(taus), max(taus)
    note(f"nu={nu}, steady s={s_steady:.1f}, peak above steady {above:.1%}, "
         f"post-settling band {overshoot:.1%}, tau max {mx:.3g} median {med:.3g}, {elapsed:.2f} s")
    assert res.summary.conserved
    assert nu is not None and nu <= 10
    assert above <= 0.20
    assert mx <= 2 * med
    assert elapsed < 30.0


# 7 ---------------------------------------------------------------------------


def _segment_means(res) -> list[float]:
    means = []
    steady = [(d, m) for d, m in zip(res.deliveries, res.metrics) if not m.flushed]
    for i in range(len(SWEEP_SEQUENCE)):
        lo, hi = i * SWEEP_SEGMENT_S * 1e6, (i + 1) * SWEEP_SEGMENT_S * 1e6
        sizes = [m.s_k for d, m in steady if lo <= d.start_us < hi]
        means.append(sum(sizes) / len(sizes))
    return means


@pytest.mark.criterion(7, "complexity sweep")
def test_complexity_sweep(note):
    t0 = time.perf_counter()
    ok = True
    for sc in complexity_sweep(seed=0):
        res = run(sc)
        nus = res.summary.nu
        means = _segment_means(res)
        # every pair of segments with different cost orders their mean sizes the same way
        ordered = all(
            means[i] < means[j]
            for i in range(len(SWEEP_SEQUENCE))
            for j in range(len(SWEEP_SEQUENCE))
            if SWEEP_SEQUENCE[i] < SWEEP_SEQUENCE[j]
        )
        defined = len(nus) == len(SWEEP_SEQUENCE) - 1 and all(n is not None and n <= 12 for n in nus)
        note(f"{sc.name.rsplit('-', 1)[1]}: nu={nus} means={[round(m, 1) for m in means]}")
        ok = ok and ordered and defined and res.summary.conserved
    elapsed = _seconds(t0)
    note(f"{elapsed:.1f} s")
    assert ok
    assert elapsed < 120.0


# 8 ---------------------------------------------------------------------------


@pytest.mark.criterion(8, "gamma filter behaviour")
def test_gamma_filter_ramp(note):
    t0 = time.perf_counter()
    res = run(rate_ramp(seed=0))
    tr = res.gamma_trace
    window = 1001
    kernel = np.ones(window) / window
    smooth = np.convolve(tr.rate, kernel, mode="valid")
    gamma = tr.gamma[window // 2: window // 2 + len(smooth)]
    rho = spearmanr(smooth, gamma).statistic
    elapsed = _seconds(t0)
    note(f"ramp: {len(tr)} events, Spearman(smoothed r, gamma)={rho:.4f}, {elapsed:.1f} s")
    assert rho <= -0.9
    assert res.summary.conserved
    assert elapsed < 60.0


@pytest.mark.criterion(8, "gamma filter behaviour")
def test_gamma_filter_sinusoid(note):
    t0 = time.perf_counter()
    sc = sinusoid_cost(seed=0)
    res = run(sc)
    g_hat = np.array([g for _, g in res.gamma_trace.gamma_hat])
    lo, hi = float(g_hat.min()), float(g_hat.max())
    gmin, gmax = sc.config.gamma_min, sc.config.gamma_max
    # count swings: crossings of the mid level
    mid = (gmin + gmax) / 2
    crossings = int(np.count_nonzero(np.diff(np.sign(g_hat - mid))))
    elapsed = _seconds(t0)
    note(f"sinusoid: gamma_hat in [{lo:.5f}, {hi:.5f}], {crossings} mid-level crossings, {elapsed:.1f} s")
    assert abs(lo - gmin) <= 0.01 * gmin
    assert abs(hi - gmax) <= 0.01 * gmax
    assert crossings >= 3
    assert elapsed < 60.0


# 9 ---------------------------------------------------------------------------


@pytest.mark.criterion(9, "overflow contrast")
def test_overflow_contrast(note):
    t0 = time.perf_counter()
    runs = {sc.policy.label: sc for sc in static_comparison(seed=0)}
    fixed = run(runs["fixed_size_10"])
    asap = run(runs["asap"])
    elapsed = _seconds(t0)

    fixed_slope = lsq_slope(fixed.tau_series)
    taus = asap.tau_series
    half = len(taus) // 2
    late = taus[half:]
    slope = lsq_slope(late)
    med = statistics.median(late)
    settle_us = asap.deliveries[half].enqueue_us
    depth = max((d for t, d in asap.summary.queue_depth if t >= settle_us), default=0)
    note(f"fixed_size_10 slope {fixed_slope:.3g} s/pkg, depth {fixed.summary.max_queue_depth}; "
         f"asap final-half slope {slope:.3g} s/pkg, median tau {med:.3g} s, depth {depth}; {elapsed:.1f} s")
    assert fixed_slope > 0
    # an exactly flat series with zero median passes; otherwise the strict bound applies
    assert slope == 0.0 or abs(slope) * 100 < 0.01 * med
    assert depth <= 2
    assert elapsed < 60.0


# 10 --------------------------------------------------------------------------


@pytest.mark.criterion(10, "determinism and conservation")
@pytest.mark.parametrize("preset", PRESETS)
def test_determinism_and_conservation(preset, tmp_path, note):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["preset", preset, "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    identical = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    summaries = [outs[0] / f for f in files if f.endswith("summary.txt")]
    conserved = all("conserved: True" in Path(s).read_text() for s in summaries)
    note(f"{preset}: {len(files)} files identical={identical} conserved={conserved}")
    assert identical
    assert conserved
