"""Adiabatic invariance in the slow-time family ``omega(t) = w(eps t)``.

Windowed deviations of the action with the a priori bound ``M(eps)``,
scaling experiments ``Delta I = O(eps^k)`` across smoothness classes, the
first-order asymptotic expansions of ``psi`` and ``I``, and the order of
the Picard corrections in ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._stepper import dopri5
from .angle_action import compute_phi, picard_grid, picard_psi, to_angle_action
from .errors import DomainError, ParameterError
from .frequency import FrequencyProfile, SlowTimeFamily
from .oracle import PhaseState, integrate_angle_action, integrate_qp

__all__ = [
    "WindowReport",
    "ScalingReport",
    "OrderReport",
    "phi_domain_constants",
    "window_bound",
    "adiabatic_window",
    "truncation_horizon",
    "scaling_experiment",
    "asymptotic_psi_I",
    "asymptotic_residual",
    "order_check_sigma",
    "phi_domain_solution",
    "energy_monotonicity",
    "fit_slope",
]

N_SUP = 4096
TAIL_REL = 1e-12


def fit_slope(eps, values):
    """Least-squares slope of ``log values`` against ``log eps`` and the max residual."""
    x, y = np.log(np.asarray(eps, float)), np.log(np.asarray(values, float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(coef[0]), float(np.max(np.abs(A @ coef - y)))


def _pairwise(eps, values):
    x, y = np.log(np.asarray(eps, float)), np.log(np.asarray(values, float))
    return np.diff(y) / np.diff(x)


def _check_eps_set(epsilons):
    eps = np.asarray(sorted(map(float, epsilons), reverse=True))
    if len(eps) < 4 or eps[0] / eps[-1] < 8 - 1e-12:
        raise ParameterError("need at least 4 epsilons spanning a factor >= 8")
    if np.any(eps <= 0):
        raise ParameterError("epsilons must be positive")
    return eps


# ---------------------------------------------------------------------------
# a priori window bound

def phi_domain_constants(base: FrequencyProfile, tau0: float, tau1: float, n: int = N_SUP):
    """``c0 = sup|v|``, ``c1 = sup|dv/dphi|`` and ``sup w`` on ``[tau0, tau1]``.

    ``v = (dw/dtau)/w^2`` is sampled at ``n`` points uniform in the phase
    ``phi = int w dtau``; this is a numerical sup, not a proof.
    """
    fine = np.linspace(tau0, tau1, 16 * n + 1)
    w = np.asarray(base.value(fine), float) * np.ones_like(fine)
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
    ph = np.linspace(0.0, phi[-1], n)
    tau = np.interp(ph, phi, fine)
    v = np.asarray(base.zeta(tau), float) * np.ones_like(tau)
    dv = np.gradient(v, ph) if phi[-1] > 0 else np.zeros_like(v)
    return float(np.max(np.abs(v))), float(np.max(np.abs(dv))), float(np.max(w))


def window_bound(eps, c0, c1, T, omega_u):
    """``M(eps)``; infinite when ``eps c0 >= 1`` (the bound does not apply)."""
    if eps * c0 >= 1:
        return math.inf
    d = 1 - eps * c0 / 2
    return eps * (c0 + T * omega_u / (2 - eps * c0) * (c1 / d + c0 * c0))


@dataclass(frozen=True)
class WindowReport:
    epsilon: float
    T: float
    I0: float
    max_deviation: float
    M: float
    bound: float
    c0: float
    c1: float

    @property
    def ok(self):
        return self.max_deviation <= self.bound


def adiabatic_window(family: SlowTimeFamily, T: float, q0: float, p0: float,
                     tol: float = 1e-11, samples_per_unit: int = 32) -> WindowReport:
    """``sup_t |I(t) - I(0)|`` over ``t in [0, T/eps]`` with the bound ``I0 (e^M - 1)``."""
    if T <= 0:
        raise ParameterError("the slow-time horizon must be positive")
    eps = family.epsilon
    prof = family.profile()
    t1 = T / eps
    w0 = float(prof.value(0.0))
    st = to_angle_action(PhaseState(0.0, q0, p0), w0)
    tr = integrate_angle_action(prof, st.psi, st.I, 0.0, t1, tol)
    ts = np.union1d(np.linspace(0.0, t1, int(t1 * samples_per_unit) + 2), tr.times)
    dev = float(np.max(np.abs(tr.I(ts) - st.I)))
    c0, c1, wu = phi_domain_constants(family.base, 0.0, T)
    M = window_bound(eps, c0, c1, T, wu)
    return WindowReport(eps, T, st.I, dev, M, st.I * math.expm1(M), c0, c1)


# ---------------------------------------------------------------------------
# scaling experiment

def truncation_horizon(base: FrequencyProfile, rel: float = TAIL_REL, span: float = 200.0,
                       n: int = 400_001):
    """Slow-time window outside which ``|dw/dtau| < rel * max|dw/dtau|``.

    Returns ``(tau_lo, tau_hi, tail)`` where ``tail`` estimates the integral
    of ``|w'/w|`` beyond the window (the largest change of ``log I`` the
    discarded tails can cause).
    """
    centre = float(base.params.get("center", 0.0))
    tau = np.linspace(centre - span, centre + span, n)
    d = np.abs(np.asarray(base.derivative(tau), float) * np.ones_like(tau))
    big = np.flatnonzero(d >= rel * d.max())
    if d.max() == 0:
        return centre, centre, 0.0
    lo, hi = tau[big[0]], tau[big[-1]]
    if big[0] == 0 or big[-1] == n - 1:
        raise DomainError("derivative does not decay inside the search span")
    w = np.asarray(base.value(tau), float)
    g = d / w
    dt = tau[1] - tau[0]
    tail = float(np.sum(g[:big[0]]) * dt + np.sum(g[big[-1] + 1:]) * dt)
    return float(lo), float(hi), tail


@dataclass(frozen=True)
class ScalingReport:
    epsilons: np.ndarray
    deltas: np.ndarray
    fitted_slope: float
    smoothness_class: object
    fit_residual: float
    pairwise_slopes: np.ndarray
    window: tuple
    tail_estimate: float
    bounds: np.ndarray = field(repr=False)

    @property
    def tail_ok(self):
        if not np.any(self.deltas):
            return True
        return bool(self.tail_estimate < 0.01 * float(np.min(self.deltas)))

    def columns(self):
        n = len(self.epsilons)
        return {"epsilon": self.epsilons, "delta_I": self.deltas, "bound": self.bounds,
                "slope": np.full(n, self.fitted_slope)}

    def meta(self):
        return {"k": self.smoothness_class, "fit_residual": self.fit_residual,
                "tau_lo": self.window[0], "tau_hi": self.window[1],
                "tail_estimate": self.tail_estimate, "tail_ok": self.tail_ok}

    def to_csv(self, path):
        from .io import write_csv
        return write_csv(path, self.columns(), schema="scaling-report/1", meta=self.meta())

    def to_json(self, path):
        from .io import write_json
        return write_json(path, {**self.meta(), **{k: list(map(float, v)) for k, v in
                                                   self.columns().items()}},
                          schema="scaling-report/1")


def scaling_experiment(base: FrequencyProfile | SlowTimeFamily, k=None,
                       epsilons=(0.2, 0.1, 0.05, 0.025), n_phases: int = 16,
                       tol: float = 1e-12, window=None) -> ScalingReport:
    """``Delta I(eps)`` across the whole ramp and its log-log slope.

    ``Delta I`` is the largest ``|I(end)/I(start) - 1|`` over ``n_phases``
    initial angles in ``[0, pi)``, which removes the dependence of a single
    run on where the oscillation happens to be when the ramp starts.
    """
    if isinstance(base, SlowTimeFamily):
        base = base.base
    eps = _check_eps_set(epsilons)
    if window is None:
        lo, hi, tail = truncation_horizon(base)
    else:
        lo, hi = map(float, window)
        tail = float("nan")
    k = base.smoothness if k is None else k
    if hi <= lo:
        # no variation at all: the action is exactly conserved
        z = np.zeros(len(eps))
        return ScalingReport(eps, z, math.nan, k, 0.0, np.full(len(eps) - 1, math.nan),
                             (lo, hi), 0.0, z)
    psi0 = np.linspace(0.0, math.pi, n_phases, endpoint=False)
    c0, c1, wu = phi_domain_constants(base, lo, hi)
    deltas, bounds = [], []
    for e in eps:
        prof = SlowTimeFamily(base, e).profile()
        tr = integrate_angle_action(prof, psi0, np.ones(n_phases), lo / e, hi / e, tol)
        logI = tr.pieces[-1].ys[-1][1]
        deltas.append(float(np.max(np.abs(np.expm1(logI)))))
        bounds.append(math.expm1(window_bound(e, c0, c1, hi - lo, wu)))
    deltas = np.array(deltas)
    if np.any(deltas <= 0):
        raise DomainError("Delta I vanished; the slope is undefined")
    slope, res = fit_slope(eps, deltas)
    return ScalingReport(eps, deltas, slope, k, res,
                         _pairwise(eps, deltas), (lo, hi), tail, np.array(bounds))


# ---------------------------------------------------------------------------
# first-order expansion

def asymptotic_psi_I(family: SlowTimeFamily, psi0: float, I0: float, t):
    """First-order ``(psi, I)`` from ``t = 0``.

    ``psi = phi - (eps/4)[cos 2phi z(eps t) - cos 2psi0 z(0)]``,
    ``I = I0 {1 - (eps/2)[sin 2phi z(eps t) - sin 2psi0 z(0)]}`` with
    ``z = (dw/dtau)/w^2``.
    """
    eps = family.epsilon
    t = np.asarray(t, dtype=float)
    phi = compute_phi(family.profile(), psi0, 0.0, t)
    z = np.asarray(family.zeta_tilde(eps * t), float)
    z0 = float(family.zeta_tilde(0.0))
    psi = phi - eps / 4 * (np.cos(2 * phi) * z - math.cos(2 * psi0) * z0)
    I = I0 * (1 - eps / 2 * (np.sin(2 * phi) * z - math.sin(2 * psi0) * z0))  # noqa: E741
    return psi, I


def asymptotic_residual(base: FrequencyProfile, epsilons, t_end: float, psi0: float = 0.3,
                        n: int = 2001, tol: float = 1e-13):
    """Sup residuals of :func:`asymptotic_psi_I` against the oracle on ``[0, t_end]``.

    Returns ``(psi_residuals, I_residuals)``, one entry per epsilon.
    """
    out_psi, out_I = [], []
    t = np.linspace(0.0, t_end, n)
    for e in epsilons:
        fam = SlowTimeFamily(base, e)
        tr = integrate_angle_action(fam.profile(), psi0, 1.0, 0.0, t_end, tol)
        pa, Ia = asymptotic_psi_I(fam, psi0, 1.0, t)
        out_psi.append(float(np.max(np.abs(tr.psi(t) - pa))))
        out_I.append(float(np.max(np.abs(tr.I(t) - Ia))))
    return np.array(out_psi), np.array(out_I)


@dataclass(frozen=True)
class OrderReport:
    order: int
    epsilons: np.ndarray
    sigma: np.ndarray        # sup |psi - psi^(h-1)|
    chi: np.ndarray          # sup |psi^(h) - psi^(h-1)|
    slope_sigma: float
    slope_chi: float


def order_check_sigma(base: FrequencyProfile | SlowTimeFamily, epsilons, h: int,
                      t_end: float = 2.0, psi0: float = 0.3, tol: float = 1e-13) -> OrderReport:
    """Slopes in ``eps`` of ``psi - psi^(h-1)`` and ``psi^(h) - psi^(h-1)`` on ``[0, t_end]``.

    The orders hold at fixed ``t``; ``t_end`` should keep ``eps t_end``
    small, otherwise secular terms of order ``eps^2 t`` dominate.
    """
    if isinstance(base, SlowTimeFamily):
        base = base.base
    if h < 1:
        raise ParameterError("h must be >= 1")
    eps = np.asarray(sorted(map(float, epsilons), reverse=True))
    sig, chi = [], []
    for e in eps:
        prof = SlowTimeFamily(base, e).profile()
        g = picard_grid(prof, 0.0, t_end, 0.0)
        s = picard_psi(prof, psi0, 0.0, g, h, bounds=False)
        ref = integrate_angle_action(prof, psi0, 1.0, 0.0, t_end, tol).psi(s.grid)
        sig.append(float(np.max(np.abs(ref - s.psi(h - 1)))))
        chi.append(float(np.max(np.abs(s.psi(h) - s.psi(h - 1)))))
    sig, chi = np.array(sig), np.array(chi)
    def slope(v):
        return fit_slope(eps, v)[0] if np.all(v > 0) else math.nan

    return OrderReport(h, eps, sig, chi, slope(sig), slope(chi))


# ---------------------------------------------------------------------------
# phase-domain form and energy monotonicity

def phi_domain_solution(family: SlowTimeFamily, psi0: float, I0: float, phi_end: float,
                        tol: float = 1e-12):
    """Solve ``dpsi/dphi = f/eps``, ``dlog I/dphi = -v cos 2psi`` with ``f = 1 + eps v sin(2psi)/2``.

    The slow time ``tau`` rides along through ``dtau/dphi = 1/w``; the
    phase origin is ``phi = psi0`` at ``tau = 0``.  Returns the dense
    solution with state ``(psi, log I, tau)``.
    """
    eps = family.epsilon
    base = family.base

    def rhs(p, y):
        w = float(base.value(y[2]))
        v = float(base.derivative(y[2])) / (w * w)
        return np.array([(1 + eps * v / 2 * math.sin(2 * y[0])) / eps,
                         -v * math.cos(2 * y[0]), 1.0 / w])

    return dopri5(rhs, psi0, np.array([psi0, math.log(I0), 0.0]), phi_end, rtol=tol, atol=tol)


def energy_monotonicity(profile: FrequencyProfile, q0, p0, a: float, b: float,
                        n: int = 4001, tol: float = 1e-12):
    """On ``[a, b]`` with ``omega`` monotone, return ``(omega_sign, worst)``.

    ``worst`` is the largest step of ``H`` against the direction of
    ``omega``; it should not exceed the oracle noise.
    """
    ts = np.linspace(a, b, n)
    dw = np.asarray(profile.derivative(ts), float) * np.ones_like(ts)
    sgn = np.sign(dw[np.abs(dw) > 0])
    if sgn.size == 0 or not (np.all(sgn > 0) or np.all(sgn < 0)):
        raise DomainError("omega is not monotone on the segment")
    tr = integrate_qp(profile, q0, p0, a, b, tol)
    q, p = tr.q(ts), tr.p(ts)
    w = np.asarray(profile.value(ts), float)
    H = 0.5 * (p * p + w * w * q * q)
    worst = float(np.max(-sgn[0] * np.diff(H)))
    return int(sgn[0]), max(worst, 0.0)
