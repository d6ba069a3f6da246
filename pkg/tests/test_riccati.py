import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdho import DomainError, ParameterError, builtin_profiles, integrate_qp
from tdho.io import read_csv
from tdho.riccati import (BLOWUP, check_monotonicity_in_ti, find_zero_sequence,
                          reconstruct_q, riccati_integrate, riccati_picard, riccati_rhs)

SIGNS = {1: (1, 1), 2: (1, -1), 3: (-1, -1), 4: (-1, 1)}


def mathieu(eta, alpha, omega_bar=1.0):
    return builtin_profiles("mathieu", omega_bar=omega_bar, eta=eta, alpha=alpha)


def arccot(x):
    return math.pi / 2 - np.arctan(x)


def test_rhs_examples():
    assert riccati_rhs("r", 0.0, 1.0) == -1.0
    assert riccati_rhs("s", 0.0, 3.0) == 1.0
    assert riccati_rhs("r", 2.0, 1.0) == -5.0
    assert riccati_rhs("s", 2.0, 0.5) == 2.0
    with pytest.raises(ParameterError):
        riccati_rhs("x", 0.0, 1.0)


def test_integrate_matches_tangent_and_stops():
    prof = builtin_profiles("constant", omega=1.0)
    sol = riccati_integrate("r", prof, 0.0, 0.0, 1.5, tol=1e-12)
    t = np.linspace(0, 1.5, 31)
    assert np.max(np.abs(sol(t)[:, 0] + np.tan(t))) < 1e-9
    sol = riccati_integrate("r", prof, 0.0, 0.0, 3.0, tol=1e-12)
    assert sol.ts[-1] < math.pi / 2 and abs(sol.ys[-1, 0]) > BLOWUP


def test_r_times_s_is_one():
    prof = mathieu(0.5, 0.5)
    qp = integrate_qp(prof, 0.8, 0.3, 0.0, 0.25, 1e-12)
    r = riccati_integrate("r", prof, 0.3 / 0.8, 0.0, 0.25, tol=1e-12)
    s = riccati_integrate("s", prof, 0.8 / 0.3, 0.0, 0.25, tol=1e-12)
    t = np.linspace(0, 0.25, 41)
    assert np.max(np.abs(r(t)[:, 0] * s(t)[:, 0] - 1.0)) < 1e-9
    q, p = qp.qp(t).T
    assert np.max(np.abs(r(t)[:, 0] - p / q)) < 1e-9


def test_picard_r_converges_to_minus_tangent():
    prof = builtin_profiles("constant", omega=1.0)
    grid = np.linspace(-1.0, 1.0, 201)
    it = riccati_picard("r", prof, 0.0, 0.0, grid, 40)
    assert not it.truncated
    assert np.max(np.abs(it.values[-1] + np.tan(grid))) < 1e-10
    assert np.max(np.abs(it.values[1] + grid)) < 1e-14
    assert np.max(np.abs(it.first_order_closed + grid)) < 1e-14


def test_picard_truncation_report():
    prof = builtin_profiles("constant", omega=1.0)
    it = riccati_picard("r", prof, 0.0, 0.0, np.linspace(0, 3.0, 301), 30)
    assert it.truncated
    assert it.valid_until[0] == 3.0
    assert it.valid_until[-1] < 3.0
    assert np.isnan(it.values[-1][-1])


def test_picard_bad_order():
    with pytest.raises(ParameterError):
        riccati_picard("r", builtin_profiles("constant"), 0.0, 0.0, np.linspace(0, 1, 5), -1)


def test_first_order_q_closed_form_small_t():
    prof = mathieu(0.5, 0.5)
    grid = np.linspace(0, 0.4, 41)
    it = riccati_picard("r", prof, 0.0, 0.0, grid, 1)
    # q1 = exp{-int_0^t (t - z) omega^2 dz} by direct quadrature
    from scipy.integrate import quad
    direct = np.array([math.exp(-quad(lambda z, t=t: (t - z) * float(prof.value(z)) ** 2, 0, t,
                                      epsabs=1e-14)[0]) for t in grid])
    assert np.max(np.abs(it.q1_closed - direct)) < 1e-12
    q = integrate_qp(prof, 1.0, 0.0, 0.0, 0.4, 1e-12).q(grid)
    err = np.abs(it.q1_closed - q)
    # error is fourth order in t
    assert err[10] < 1e-4 and err[20] / err[10] > 8
    assert np.max(err[:6]) < 1e-5


def test_zero_start_q_is_t_small_t():
    prof = mathieu(0.5, 0.5)
    grid = np.linspace(0, 0.2, 21)
    it = riccati_picard("s", prof, 0.0, 0.0, grid, 1)
    assert np.max(np.abs(it.values[1] - grid)) < 1e-15
    q = integrate_qp(prof, 0.0, 1.0, 0.0, 0.2, 1e-12).q(grid)
    rel = np.abs(q[1:] - grid[1:]) / grid[1:]
    assert np.max(rel) < 0.02 and rel[-1] / rel[len(rel) // 2] > 3.0


def test_reconstruct_q_examples():
    prof = builtin_profiles("constant", omega=1.0)
    grid = np.linspace(-1.2, 1.2, 241)
    q = reconstruct_q("r", (grid, np.zeros_like(grid)), 2.0, t_star=0.0)
    assert np.all(q == 2.0)
    q = reconstruct_q("r", (grid, -np.tan(grid)), 1.5, t_star=0.0)
    assert np.max(np.abs(q - 1.5 * np.cos(grid))) < 1e-7
    it = riccati_picard("r", prof, 0.0, 0.0, grid, 40)
    q = reconstruct_q("r", it, 1.5)
    assert np.max(np.abs(q - 1.5 * np.cos(grid))) < 1e-10


def test_reconstruct_q_s_route_through_zero():
    prof = builtin_profiles("constant", omega=1.0)
    grid = np.linspace(0, 1.2, 121)
    it = riccati_picard("s", prof, 0.0, 0.0, grid, 40)
    q = reconstruct_q("s", it, 0.0, profile=prof, p_star=1.0)
    assert np.max(np.abs(q - np.sin(grid))) < 1e-10
    with pytest.raises(DomainError):
        reconstruct_q("s", it, 0.0)


def test_reconstruct_q_mathieu_between_zeros():
    prof = mathieu(0.2, 2.0)
    seq = find_zero_sequence(prof, 1.0, 0.0, 0.0, 10.0)
    q_zeros = seq.instants[seq.indices % 2 == 0]
    a, b = q_zeros[1], q_zeros[2]
    t_star, t_end = a + 0.02 * (b - a), b - 0.02 * (b - a)
    tr = integrate_qp(prof, 1.0, 0.0, 0.0, 10.0, 1e-12)
    q_star, p_star = tr.qp(t_star)
    sol = riccati_integrate("r", prof, p_star / q_star, t_star, t_end, tol=1e-12)
    grid = np.linspace(t_star, t_end, 801)
    q = reconstruct_q("r", (grid, sol(grid)[:, 0]), q_star, t_star=t_star)
    assert np.max(np.abs(q - tr.q(grid))) < 1e-6


# special points

def test_zero_sequence_constant():
    w = 1.3
    seq = find_zero_sequence(builtin_profiles("constant", omega=w), 0.0, 1.0, 0.0, 10.0)
    expect = seq.indices * math.pi / (2 * w)
    assert seq.indices[0] == 0
    assert np.max(np.abs(seq.instants - expect)) < 1e-10
    assert all(seq.certificates().values())


def test_zero_sequence_mathieu_gap_bounds():
    seq = find_zero_sequence(mathieu(0.2, 2.0), 1.0, 0.0, 0.0, 30.0)
    assert seq.indices[0] == 1 and len(seq.instants) > 15
    assert np.all(seq.gap_bounds_ok())
    assert seq.interlaced()
    tr = integrate_qp(mathieu(0.2, 2.0), 1.0, 0.0, 0.0, 30.0, 1e-12)
    for h, t in zip(seq.indices, seq.instants):
        assert abs(tr.qp(t)[h % 2]) < 1e-9


def test_refined_gap_bounds_on_monotone_ramp():
    prof = builtin_profiles("tanh_ramp", a=1.5, b=0.5, center=3.0, width=2.0)
    seq = find_zero_sequence(prof, 0.3, 1.0, 0.0, 8.0)
    assert not np.all(np.isnan(seq.refined[:, 1]))
    assert np.all(seq.refined_ok())
    seq = find_zero_sequence(builtin_profiles("tanh_ramp", a=1.5, b=-0.5, center=3.0, width=2.0),
                             0.3, 1.0, 0.0, 8.0)
    assert np.all(seq.refined_ok())


@pytest.mark.parametrize("q0,p0", [(1.0, 0.0), (0.3, -0.8), (-1.0, 0.2), (0.0, -1.0)])
def test_quadrant_sign_pattern(q0, p0):
    prof = mathieu(0.5, 0.5)
    seq = find_zero_sequence(prof, q0, p0, 0.0, 20.0)
    tr = integrate_qp(prof, q0, p0, 0.0, 20.0, 1e-12)
    mids = 0.5 * (seq.instants[:-1] + seq.instants[1:])
    for quad, t in zip(seq.quadrants, mids):
        q, p = tr.qp(t)
        assert (np.sign(q), np.sign(p)) == SIGNS[quad]


def test_interlacing_of_q_and_p_zeros():
    seq = find_zero_sequence(mathieu(0.5, 0.5), 0.4, 0.9, 0.0, 25.0)
    qz = seq.instants[seq.indices % 2 == 0]
    pz = seq.instants[seq.indices % 2 == 1]
    for a, b in zip(qz[:-1], qz[1:]):
        assert np.sum((pz > a) & (pz < b)) == 1
    for a, b in zip(pz[:-1], pz[1:]):
        assert np.sum((qz > a) & (qz < b)) == 1


def test_cotangent_inequality_between_zeros():
    prof = mathieu(0.5, 0.5)
    seq = find_zero_sequence(prof, 1.0, 0.3, 0.0, 20.0)
    tr = integrate_qp(prof, 1.0, 0.3, 0.0, 20.0, 1e-12)
    qz = seq.instants[seq.indices % 2 == 0]
    for a, b in zip(qz[:-1], qz[1:]):
        w_l = prof.sup_inf(a, b)[1]
        t_star = a + 0.1 * (b - a)
        t = np.linspace(t_star, b - 1e-3 * (b - a), 200)
        q, p = tr.qp(t).T
        r = p / q
        lhs = arccot(r / w_l) - arccot(r[0] / w_l)
        assert np.all(lhs >= w_l * (t - t_star) - 1e-9)


def test_zero_sequence_errors_and_csv(tmp_path):
    prof = builtin_profiles("constant")
    with pytest.raises(DomainError):
        find_zero_sequence(prof, 1.0, 0.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        find_zero_sequence(prof, 0.0, 0.0, 0.0, 5.0)
    seq = find_zero_sequence(prof, 1.0, 0.0, 0.0, 5.0)
    seq.to_csv(tmp_path / "z.csv")
    schema, _, cols = read_csv(tmp_path / "z.csv")
    assert schema == "zero-sequence/1"
    assert list(cols)[:6] == ["h", "t_h", "parity", "gap", "bound_low", "bound_high"]
    assert np.array_equal(cols["t_h"], seq.instants)


def test_zero_sequence_across_jump():
    prof = builtin_profiles("step", omega_minus=1.0, omega_plus=2.0, t_d=1.0)
    seq = find_zero_sequence(prof, 0.0, 1.0, 0.0, 4.0)
    assert all(seq.certificates().values())
    tail = seq.instants[seq.instants > 1.0 + math.pi / 2]
    assert np.max(np.abs(np.diff(tail) - math.pi / 4)) < 1e-9


# monotonicity in the initial instant

def test_monotonicity_constant_shift():
    prof = builtin_profiles("constant", omega=1.0)
    ti = np.linspace(0, 2, 5)
    rep = check_monotonicity_in_ti(prof, 1.0, 0.0, ti, (1, 4))
    assert rep.ok
    shift = rep.table - ti[:, None]
    assert np.max(np.abs(shift - shift[0])) < 1e-9


def test_monotonicity_mathieu_and_scaling():
    prof = mathieu(0.5, 0.5)
    ti = np.linspace(0, 6, 16)
    rep = check_monotonicity_in_ti(prof, 0.7, -0.4, ti, (0, 8))
    assert rep.ok and np.isfinite(rep.table[:, 2:]).all()
    scaled = check_monotonicity_in_ti(prof, 1.4, -0.8, ti, (0, 8))
    both = np.isfinite(rep.table)
    assert np.array_equal(both, np.isfinite(scaled.table))
    assert np.max(np.abs(rep.table[both] - scaled.table[both])) < 1e-10


@settings(max_examples=15)
@given(q0=st.floats(-2, 2), p0=st.floats(-2, 2), eta=st.floats(0, 0.6), alpha=st.floats(0.3, 3))
def test_zero_sequence_properties(q0, p0, eta, alpha):
    if math.hypot(q0, p0) < 1e-3:
        return
    seq = find_zero_sequence(mathieu(eta, alpha), q0, p0, 0.0, 12.0)
    cert = seq.certificates()
    assert cert["strictly_increasing"] and cert["interlaced"] and cert["gap_bounds"]
