"""Acceptance suite: one PASS/FAIL line per criterion.

Criteria 6 and 7 keep their literal assertions as strict xfails; the
corrected sign (6) and the amplitude part (7) are asserted separately.
"""

import math
import time

import numpy as np
import pytest

from tdho import builtin_profiles, integrate_angle_action, integrate_qp
from tdho.adiabatic import asymptotic_residual, fit_slope, scaling_experiment
from tdho.angle_action import (approx_hat, approx_tilde, match_discontinuity,
                               picard_grid, picard_I, picard_psi, to_angle_action, to_phase)
from tdho.floquet import (beat_analysis, monodromy, stability_map, tongue_half_width,
                          trace_via_angle_action)
from tdho.linear_systems import ermakov_check, fundamental_matrix
from tdho.oracle import PhaseState
from tdho.riccati import find_zero_sequence


def mathieu(eta, alpha, omega_bar=1.0):
    return builtin_profiles("mathieu", omega_bar=omega_bar, eta=eta, alpha=alpha)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def slope_of_log_I(psi_star, eta=0.1, wb=1.0, t_end=30.0):
    tr = integrate_angle_action(mathieu(eta, 2 * wb, wb), psi_star, 1.0, 0.0, t_end, 1e-10)
    t = np.linspace(0.0, t_end, 601)
    return float(np.polyfit(t, np.log(tr.I(t)), 1)[0])


def test_criterion_01_picard_bound_soundness(capsys):
    start = time.perf_counter()
    prof = mathieu(0.5, 0.5)
    tol = 1e-13
    tr = integrate_angle_action(prof, 0.0, 1.0, 0.0, 20.0, tol)
    grid = picard_grid(prof, 0.0, 20.0)
    psi_ref, logI_ref = tr.psi(grid), np.log(tr.I(grid))
    ok = True
    for h in range(6):
        s = picard_psi(prof, 0.0, 0.0, grid, h)
        e_psi = np.abs(psi_ref - s.psi())
        e_I = np.abs(logI_ref - np.log(picard_I(prof, s, 1.0)))
        ok &= bool(np.all(e_psi <= s.psi_bound() + 10 * tol))
        ok &= bool(np.all(e_I <= s.log_I_bound() + 10 * tol))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    report(capsys, 1, ok, f"h=0..5 within certified bounds on [0,20], {elapsed:.1f}s")
    assert ok


def test_criterion_02_hat_beats_tilde(capsys):
    start = time.perf_counter()
    t = np.linspace(0.0, 30.0, 3001)
    ratios = []
    for eta, alpha in [(0.5, 0.5), (0.2, 2.0)]:
        prof = mathieu(eta, alpha)
        w0 = float(prof.value(0.0))
        # q1: q=1, p=0 and q2: q=0, p=1
        for q0, p0, psi0, I0 in [(1.0, 0.0, math.pi / 2, 0.5 * w0), (0.0, 1.0, 0.0, 0.5 / w0)]:
            q = integrate_qp(prof, q0, p0, 0.0, 30.0, 1e-11).q(t)
            e_hat = np.max(np.abs(approx_hat(prof, psi0, I0, 0.0, t) - q))
            e_tilde = np.max(np.abs(approx_tilde(prof, psi0, I0, 0.0, t).q - q))
            ratios.append(e_tilde / e_hat)
    elapsed = time.perf_counter() - start
    ok = min(ratios) >= 2 and elapsed < 10
    report(capsys, 2, ok, "error ratios tilde/hat " + ", ".join(f"{r:.1f}" for r in ratios)
           + f", {elapsed:.1f}s")
    assert ok


def test_criterion_03_zero_interlacing(capsys):
    prof = mathieu(0.5, 0.5)
    seq = find_zero_sequence(prof, 1.0, 0.0, 0.0, 65.0)
    n = 40
    idx, ts = seq.indices[:n], seq.instants[:n]
    certs = seq.certificates()
    consecutive = bool(np.all(np.diff(idx) == 1))
    alternating = bool(np.all(seq.parity[:n][:-1] != seq.parity[:n][1:]))
    gaps_ok = bool(np.all(seq.gap_bounds_ok()[:n - 1]))
    refined = ~np.isnan(seq.refined[:n - 1, 1])
    refined_ok = bool(np.all(seq.refined_ok()[:n - 1]))
    tr = integrate_qp(prof, 1.0, 0.0, 0.0, 65.0, 1e-12)
    located = all(abs(tr.qp(t)[h % 2]) < 1e-9 for h, t in zip(idx, ts))
    widths = np.diff(seq.brackets[:n], axis=1).ravel()
    ok = (len(seq.instants) >= n and consecutive and alternating and gaps_ok and refined_ok
          and located and bool(np.all(widths <= 1e-10)) and all(certs.values()))
    report(capsys, 3, ok, f"{len(seq.instants)} zeros on [0,65], gap bounds ok, "
           f"refined bounds on {int(refined.sum())} monotone gaps, brackets <= {widths.max():.1e}")
    assert ok


def test_criterion_04_monodromy_cross_validation(capsys):
    d_mu, d_det = 0.0, 0.0
    for wb in np.linspace(0.8, 1.2, 5):
        for eta in np.linspace(0.0, 0.3, 5):
            prof = mathieu(eta, 2.0, wb)
            rep = monodromy(prof)
            d_mu = max(d_mu, abs(trace_via_angle_action(prof) - rep.mu))
            d_det = max(d_det, abs(rep.det - 1))
    ok = d_mu < 1e-7 and d_det < 1e-9
    report(capsys, 4, ok, f"5x5 grid, max |mu diff| {d_mu:.1e}, max |det - 1| {d_det:.1e}")
    assert ok


def test_criterion_05_first_tongue(capsys):
    alpha = 2.0
    rel = []
    for eta in (0.05, 0.1, 0.2):
        hw, _ = tongue_half_width(alpha, eta)
        rel.append(abs(hw / (eta * alpha / 8) - 1))
    start = time.perf_counter()
    stability_map(alpha, (0.0, 0.3), (0.7, 1.3), grid_n=64)
    elapsed = time.perf_counter() - start
    ok = max(rel) < 0.15 and elapsed < 60
    report(capsys, 5, ok, "half-width rel. errors " + ", ".join(f"{r:.1%}" for r in rel)
           + f"; 64x64 map {elapsed:.1f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="stated growth/damping signs are reversed; "
                                       "see decisions ledger")
def test_criterion_06_resonant_growth_literal(capsys):
    eta, wb = 0.1, 1.0
    r0, r1 = slope_of_log_I(0.0), slope_of_log_I(0.5 * math.pi)
    ok = (r0 == pytest.approx(eta * wb / 2, rel=0.1)
          and r1 == pytest.approx(-eta * wb / 2, rel=0.1))
    report(capsys, 6, ok, f"rates {r0:+.4f} (psi*=0), {r1:+.4f} (psi*=pi/2) "
           f"vs stated {+eta * wb / 2:+.3f}, {-eta * wb / 2:+.3f}")
    assert ok


def test_criterion_06_corrected():
    eta, wb = 0.1, 1.0
    assert slope_of_log_I(0.0) == pytest.approx(-eta * wb / 2, rel=0.1)
    assert slope_of_log_I(0.5 * math.pi) == pytest.approx(eta * wb / 2, rel=0.1)


@pytest.fixture(scope="module")
def beat():
    return beat_analysis(0.1, 1.9, 1.0, t_max=10 * 20 * math.pi)


@pytest.mark.xfail(strict=True, reason="first-order beat period ignores phase pulling; "
                                       "see decisions ledger")
def test_criterion_07_beat_literal(capsys, beat):
    amp_ok = beat.amplitude == pytest.approx(0.475, rel=0.15)
    per_ok = beat.period == pytest.approx(2 * math.pi / 0.1, rel=0.10)
    report(capsys, 7, amp_ok and per_ok,
           f"amplitude {beat.amplitude:.3f} vs 0.475 ({'ok' if amp_ok else 'off'}), "
           f"period {beat.period:.2f} vs {2 * math.pi / 0.1:.2f} ({'ok' if per_ok else 'off'})")
    assert amp_ok and per_ok


def test_criterion_07_amplitude(beat):
    assert beat.amplitude == pytest.approx(0.475, rel=0.15)


def test_criterion_08_adiabatic_scaling(capsys):
    start = time.perf_counter()
    eps = (0.2, 0.1, 0.05, 0.025)
    spline = scaling_experiment(builtin_profiles("spline_ramp", a=1.5, b=0.5, k=2,
                                                 center=0.0, width=1.0), epsilons=eps)
    bump = scaling_experiment(builtin_profiles("bump_ramp", a=1.5, b=0.5,
                                               center=0.0, width=1.0), epsilons=eps)
    elapsed = time.perf_counter() - start
    ok = (spline.fitted_slope >= 1.7 and bump.fitted_slope > spline.fitted_slope
          and elapsed < 120)
    report(capsys, 8, ok, f"slopes k=2 {spline.fitted_slope:.2f}, bump {bump.fitted_slope:.2f}, "
           f"{elapsed:.1f}s")
    assert ok


def test_criterion_09_asymptotic_order(capsys):
    prof = builtin_profiles("tanh_ramp", a=1.5, b=0.5, center=0.0, width=1.0)
    eps = (0.1, 0.05, 0.025)
    ps, I = asymptotic_residual(prof, eps, 2.0)
    _, I40 = asymptotic_residual(prof, eps, 40.0)
    slopes = [fit_slope(eps, r)[0] for r in (ps, I, I40)]
    ok = all(abs(s - 2) < 0.2 for s in slopes)
    report(capsys, 9, ok, f"slopes psi {slopes[0]:.2f}, I {slopes[1]:.2f} on [0,2]; "
           f"I {slopes[2]:.2f} on [0,40]")
    assert ok


def test_criterion_10_invariant_suites(capsys):
    rng = np.random.default_rng(10)
    t = np.linspace(0.0, 30.0, 3001)
    det_dev, drift = 0.0, 0.0
    for eta, alpha in [(0.5, 0.5), (0.2, 2.0)]:
        fm = fundamental_matrix(mathieu(eta, alpha), t, tol=1e-12)
        det_dev = max(det_dev, float(np.max(np.abs(np.linalg.det(fm.V(t)) - 1))))
        drift = max(drift, ermakov_check(fm).invariant_drift)

    n = 10_000
    q, p = rng.uniform(-3, 3, n), rng.uniform(-3, 3, n)
    w = rng.uniform(0.2, 5, n)
    back = to_phase(to_angle_action(PhaseState(0.0, q, p), w), w)
    rt_phase = float(np.max(np.abs(back.q - q) + np.abs(back.p - p)))

    rt_match = 0.0
    for psi, I, wm, wp in zip(rng.uniform(-math.pi, math.pi, 200), rng.uniform(0.1, 5, 200),
                              rng.uniform(0.2, 5, 200), rng.uniform(0.2, 5, 200)):
        psi_p, I_p = match_discontinuity(psi, I, wm, wp)
        psi_b, I_b = match_discontinuity(psi_p, I_p, wp, wm)
        rt_match = max(rt_match, abs(psi_b - psi), abs(I_b - I) / I)

    a, d = rng.uniform(-50, 50, n), rng.uniform(-10, 10, n)
    mid = np.sqrt(2 * (1 - np.cos(d)))
    lemma = bool(np.all(np.abs(np.sin(a + d) - np.sin(a)) <= mid + 1e-12)
                 and np.all(mid <= np.abs(d) + 1e-12))

    ok = det_dev < 1e-9 and drift < 1e-8 and rt_phase < 1e-12 and rt_match < 1e-12 and lemma
    report(capsys, 10, ok, f"|det V - 1| {det_dev:.1e}, Ermakov drift {drift:.1e}, "
           f"round trips {rt_phase:.1e} / {rt_match:.1e}, Lipschitz lemma on {n} samples")
    assert ok


def test_criterion_11_discontinuity_matching(capsys):
    wm, wp, td = 1.0, 2.0, 2.0
    step = builtin_profiles("step", omega_minus=wm, omega_plus=wp, t_d=td)
    exact = 0.0
    for psi_m, relation in [(0.0, lambda Im, Ip: Ip * wp - Im * wm),
                            (math.pi / 2, lambda Im, Ip: Ip * wm - Im * wp)]:
        _, I_p = match_discontinuity(psi_m, 1.0, wm, wp)
        exact = max(exact, abs(relation(1.0, I_p)))
        # same relation along the oracle with psi(t_d^-) = psi_m
        tr = integrate_angle_action(step, psi_m - wm * td, 1.0, 0.0, td + 1.0, 1e-12)
        Im, Ip = tr.I(td, side=-1), tr.I(td, side=+1)
        exact = max(exact, abs(relation(Im, Ip)) / Im)

    errs = {}
    for width in (0.02, 0.01):
        smooth = builtin_profiles("tanh_ramp", a=1.5, b=0.5, center=0.0, width=width)
        for psi_m in (0.0, math.pi / 2):
            _, I_p = match_discontinuity(psi_m, 1.0, wm, wp)
            tr = integrate_angle_action(smooth, psi_m - 1.0, 1.0, -1.0, 1.0, 1e-12)
            errs[width, psi_m] = abs(tr.I(1.0) - I_p)
    order_ok = all(errs[0.02, s] <= 0.02 and errs[0.01, s] <= 0.6 * errs[0.02, s]
                   for s in (0.0, math.pi / 2))
    ok = exact < 1e-12 and order_ok
    report(capsys, 11, ok, f"jump relations to {exact:.1e}; smooth step I error "
           + ", ".join(f"w={w:g} psi={s:.2f}: {e:.1e}" for (w, s), e in errs.items()))
    assert ok
