"""Acceptance checks, one test per criterion, each reporting a pass/fail line."""

import math
import subprocess
import sys
import time

import numpy as np

from oseledets import oracles
from oseledets.experiments import approximant_statistics, conditional_masses, joint_statistics
from oseledets.maps import chirikov_taylor, fixed_point_spectrum, jacobian_product, REFLECTION, reflect
from oseledets.mobius import general_series
from oseledets.splitting import backward_slope_sweep, split_blocks, splitting_angle
from oseledets.stats import HistogramGrid, ensemble_decay
from oseledets.tangent import (
    TangentState,
    default_seed,
    ftle_along,
    full_ftle,
    slope_step,
    tangent_series,
)

START = (1e-3, 2e-3)
TWO_PI = 2.0 * math.pi


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_c01_full_ftle_identity(report):
    m = chirikov_taylor(TWO_PI)
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        seed = default_seed(rng)
        s = tangent_series(START, m, 1000, seed)
        full = full_ftle(s.accumulator(), seed.alpha, s.end_state.alpha)
        ref = oracles.benettin_ftle(START, m, 1000, seed.vector())
        worst = max(worst, _rel(full, ref))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 1.0
    report(1, "full FTLE equals Benettin", ok, f"max rel diff {worst:.2e}, {dt:.2f}s for 5 seeds")
    assert ok


def test_c02_ftle_values(report):
    seed = TangentState.from_angle(0.7)
    lam_hi, _ = ftle_along(START, chirikov_taylor(TWO_PI), 10**7, seed, transient=100)
    lam_lo, _ = ftle_along(START, chirikov_taylor(math.pi / 2), 10**7, seed, transient=100)
    ok = abs(lam_hi - 1.172) <= 0.01 and abs(lam_lo - 0.298) <= 0.02
    report(2, "FTLE at 1e7 steps", ok, f"K=2pi {lam_hi:.5f} (1.172+-0.01), K=pi/2 {lam_lo:.5f} (0.298+-0.02)")
    assert ok


def test_c03_convergence_rates(report):
    t0 = time.perf_counter()
    m = chirikov_taylor(TWO_PI)
    lead, steps, restarts = 100, 40, 256
    orbit = tangent_series(START, m, lead + restarts * steps, TangentState(1.0))
    lam = orbit.accumulator(lead).value
    psi = ensemble_decay(orbit.fprime, orbit.fsecond, 10_000, "psi", steps, seed=1, restarts=restarts, lead=lead)
    eta = ensemble_decay(orbit.fprime, orbit.fsecond, 10_000, "eta", steps, seed=2, restarts=restarts, lead=lead)
    r_psi, r_eta = psi.rate / lam, eta.rate / lam
    reg = tangent_series((2.0, 0.0), chirikov_taylor(math.pi / 4), 10_100, TangentState(1.0))
    power = ensemble_decay(reg.fprime, reg.fsecond, 10_000, "psi", 10_000, seed=3, lead=100,
                           model="power", fit_points=200)
    dt = time.perf_counter() - t0
    ok = (abs(r_psi + 2.0) <= 0.2 and abs(r_eta + 3.0) <= 0.3
          and abs(power.rate + 2.0) <= 0.3 and dt < 60.0)
    report(3, "ensemble decay rates", ok,
           f"psi {r_psi:.3f} lam (-2+-10%), eta {r_eta:.3f} lam (-3+-10%), "
           f"regular power {power.rate:.3f} (-2+-15%), {dt:.1f}s")
    assert ok


def test_c04_boundary_term_decay(report):
    m = chirikov_taylor(math.pi / 4)
    k = np.unique(np.geomspace(100, 10**6, 300).astype(int))
    rng = np.random.default_rng(4)
    slopes = []
    for _ in range(4):
        seed = default_seed(rng)
        s = tangent_series(START, m, 10**6 + 1, seed)
        # ln|sin a_k / sin a_0| = ln hypot(1, psi_0) - ln hypot(1, psi_k)
        term = np.abs((np.log(np.hypot(1.0, s.psi[0])) - np.log(np.hypot(1.0, s.psi[k]))) / k)
        slopes.append(np.polyfit(np.log(k), np.log(term), 1)[0])
    ok = all(abs(v + 1.0) <= 0.15 for v in slopes)
    report(4, "boundary term decays as 1/k", ok, "log-log slopes " + ", ".join(f"{v:.3f}" for v in slopes))
    assert ok


def _order(z):
    return (-round(abs(z), 9), z.imag)


def test_c05_fixed_point_spectra(report):
    worst_eig = worst_fix = 0.0
    kinds = {}
    for fp in (4.0, -4.0, 3.0, -3.0, 2.0, 1.0):
        kind, cp, cm = fixed_point_spectrum(fp)
        kinds[fp] = kind
        disc = complex(fp * fp - 4.0) ** 0.5
        exact = sorted([(fp + disc) / 2, (fp - disc) / 2], key=_order)
        got = sorted([complex(cp), complex(cm)], key=_order)
        worst_eig = max(worst_eig, *(abs(a - b) for a, b in zip(got, exact)))
        if kind == "hyperbolic":
            for chi in (cp, cm):
                worst_fix = max(worst_fix, abs(slope_step(chi, fp) - chi))
    theta = splitting_angle(2.0 + math.sqrt(3.0), 2.0 - math.sqrt(3.0))
    ok = (worst_eig <= 1e-12 and worst_fix <= 1e-12 and abs(theta - math.pi / 3) <= 1e-10
          and kinds[2.0] == "parabolic" and kinds[1.0] == "elliptic")
    report(5, "fixed-point spectra", ok,
           f"eig err {worst_eig:.1e}, slope fixed-point err {worst_fix:.1e}, theta(4)-pi/3 {theta - math.pi / 3:.1e}")
    assert ok


def test_c06_general_engine_reduction(report):
    t0 = time.perf_counter()
    worst = 0.0
    seed = TangentState.from_angle(-0.4)
    for K in (math.pi / 2, TWO_PI):
        m = chirikov_taylor(K)
        s = tangent_series(START, m, 10_000, seed)
        g = general_series(START, m, 10_000, seed)
        for a, b in ((s.psi, g.psi), (s.eta, g.eta), (s.sigma.astype(float), g.sigma.astype(float))):
            den = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
            worst = max(worst, float(np.max(np.abs(a - b) / den)))
        csum_s = np.cumsum(s.lam1) / np.arange(1, 10_001)
        csum_g = np.cumsum(g.lam1) / np.arange(1, 10_001)
        worst = max(worst, float(np.max(np.abs(csum_s - csum_g) / np.abs(csum_s))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    report(6, "general engine matches scalar", ok, f"max rel diff {worst:.1e} over psi, sigma, eta, FTLE, {dt:.2f}s")
    assert ok


def test_c07_clv_oracle(report):
    t0 = time.perf_counter()
    m = chirikov_taylor(TWO_PI)
    warm, n_points = 200, 1000
    n = 2 * warm + n_points
    s = tangent_series(START, m, n, TangentState(0.5))
    back = backward_slope_sweep(s, m, 0.0, warm)
    dp = dm = 0.0
    for i in range(warm, warm + n_points):
        cp, cm = oracles.clv_directions((s.x[i], s.y[i]), m, warm)
        dp = max(dp, abs(cp - s.psi[i]) / max(1.0, abs(cp)))
        dm = max(dm, abs(cm - back.psi_minus[i]) / max(1.0, abs(cm)))
    dt = time.perf_counter() - t0
    ok = dp <= 1e-8 and dm <= 1e-8 and dt < 10.0
    report(7, "CLV oracle agreement", ok, f"psi+ {dp:.1e}, psi- {dm:.1e} at {n_points} points, {dt:.1f}s")
    assert ok


def _theta_l1(K, samples):
    m = chirikov_taylor(K)
    xs, ys, pp, th = [], [], [], []
    for b in split_blocks(START, m, samples + 200, TangentState(0.3), transient=200):
        v = b.valid
        xs.append(b.x[v]); ys.append(b.y[v]); pp.append(b.psi_plus[v]); th.append(b.theta[v])
    x, y, psi, theta = (np.concatenate(a) for a in (xs, ys, pp, th))
    stats, _ = approximant_statistics(m, x, y, psi, theta, 2, 1000)
    return stats[2]["l1_theta"], x.shape[0]


def test_c08_approximant_ordering(report):
    t0 = time.perf_counter()
    hi, n = _theta_l1(TWO_PI, 10**6)
    lo, _ = _theta_l1(math.pi / 2, 10**6)
    dt = time.perf_counter() - t0
    ok = hi < 0.1 and hi < lo and dt < 120.0
    report(8, "second approximant theta L1", ok, f"K=2pi {hi:.4f} (<0.1), K=pi/2 {lo:.4f}, {n} samples, {dt:.1f}s")
    assert ok


def test_c09_conditional_signature(report):
    t0 = time.perf_counter()
    m = chirikov_taylor(TWO_PI)
    blocks = split_blocks(START, m, 10**7 + 100, TangentState(0.3), transient=100)
    _, cond, samples = joint_statistics(blocks, 1000)
    mass = conditional_masses(cond)
    lk, th = mass["log_kappa_below_-1"], mass["abs_theta_above_pi/4"]
    dt = time.perf_counter() - t0
    ok = lk["positive"] > lk["negative"] and th["positive"] > th["negative"] and dt < 300.0
    report(9, "conditional statistics", ok,
           f"P(lnk<-1) {lk['positive']:.3f} vs {lk['negative']:.3f}, "
           f"P(|theta|>pi/4) {th['positive']:.3f} vs {th['negative']:.3f}, {samples} samples, {dt:.0f}s")
    assert ok


def _determinism_bytes(out):
    cmd = [sys.executable, "-m", "oseledets.cli", "orbit", "--steps", "2000", "--seed", "7", "--out", str(out)]
    subprocess.run(cmd, check=True, capture_output=True)
    return (out / "orbit.csv").read_bytes(), (out / "orbit.json").read_bytes()


def test_c10_structural_invariants(report, tmp_path):
    t0 = time.perf_counter()
    m = chirikov_taylor(TWO_PI)
    rng = np.random.default_rng(5)
    # cocycle: restarting from the saved state reproduces the slopes bitwise,
    # and merged accumulators add sums and counts exactly
    j, k = 700, 300
    whole = tangent_series(START, m, j + k, TangentState(0.9))
    head = tangent_series(START, m, k, TangentState(0.9))
    tail = tangent_series(head.end_point, m, j, head.end_state)
    restart_ok = np.array_equal(whole.psi, np.concatenate([head.psi, tail.psi]))
    a, b = head.accumulator(), tail.accumulator()
    merged = a.merge(b)
    merge_ok = merged.sum_log == a.sum_log + b.sum_log and merged.steps == j + k
    merge_ok &= np.array_equal(merged.sum_log, (b + a).sum_log)
    # reversibility of the Jacobian cocycle
    rev = 0.0
    for _ in range(50):
        p = rng.uniform(0, TWO_PI, 2)
        for n in range(1, 11):
            lhs = jacobian_product(p, m, n)
            rhs = REFLECTION @ jacobian_product(reflect(p), m, -n) @ REFLECTION
            rev = max(rev, float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(lhs))))))
    # histogram merge associativity
    parts = [HistogramGrid.one(-1.0, 1.0, 50).add(rng.normal(0, 0.7, 1000)) for _ in range(3)]
    h1 = (parts[0] + parts[1]) + parts[2]
    h2 = parts[0] + (parts[1] + parts[2])
    hist_ok = np.array_equal(h1.counts, h2.counts) and np.array_equal(h1.buckets, h2.buckets) and h1.total == h2.total
    tb = time.perf_counter() - t0
    det_ok = _determinism_bytes(tmp_path / "run") == _determinism_bytes(tmp_path / "run")
    ok = restart_ok and merge_ok and rev <= 1e-9 and hist_ok and det_ok and tb < 1.0
    report(10, "structural invariants", ok,
           f"cocycle restart {restart_ok}, merge exact {bool(merge_ok)}, reversibility {rev:.1e}, "
           f"histogram assoc {hist_ok}, byte determinism {det_ok}, {tb:.2f}s in-process")
    assert ok
