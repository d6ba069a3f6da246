"""Periodic frequencies: monodromy, stability, trace formula, Mathieu tongues.

For a T-periodic omega the monodromy matrix ``M = V(T)`` has unit
determinant, so its eigenvalues are ``mu +- sqrt(mu^2 - 1)`` with
``mu = Tr M / 2``; the zero solution is stable for ``|mu| < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ._stepper import dopri5
from .errors import DomainError, ParameterError
from .frequency import FrequencyProfile, builtin_profiles
from .linear_systems import FundamentalMatrix, fundamental_matrix
from .oracle import integrate_angle_action, quadrature

__all__ = [
    "MonodromyReport",
    "StabilityMap",
    "BeatReport",
    "monodromy",
    "floquet_extend",
    "trace_via_angle_action",
    "mu_leading_order",
    "mathieu_chi",
    "resonance_points",
    "stability_map",
    "mathieu_mu_batch",
    "tongue_half_width",
    "beat_analysis",
    "classify",
    "MARGINAL_BAND",
]

MARGINAL_BAND = 1e-7
RESONANT_SWITCH = 1e-9
TOL = 1e-11


def classify(mu, band=MARGINAL_BAND):
    a = abs(mu) - 1.0
    if abs(a) < band:
        return "marginal"
    return "stable" if a < 0 else "unstable"


@dataclass(frozen=True)
class MonodromyReport:
    M: np.ndarray
    mu: float
    eigenvalues: tuple
    classification: str
    period: float

    @property
    def det(self):
        return float(np.linalg.det(self.M))


def _period(profile):
    if profile.period is None:
        raise DomainError("the profile has no period")
    return float(profile.period)


def monodromy(profile: FrequencyProfile, tol: float = TOL, fund: FundamentalMatrix | None = None
              ) -> MonodromyReport:
    T = _period(profile)
    fund = fundamental_matrix(profile, [0.0, T], tol=tol) if fund is None else fund
    M = fund.V(T)
    mu = 0.5 * float(np.trace(M))
    root = np.sqrt(complex(mu * mu - 1.0))
    eig = (mu + root, mu - root)
    return MonodromyReport(M, mu, eig, classify(mu), T)


def floquet_extend(report: MonodromyReport, fund: FundamentalMatrix, t, n: int):
    """``V(t + nT) = V(t) M^n`` for ``t`` in the integrated window."""
    Mn = np.linalg.matrix_power(report.M, int(n)) if n >= 0 else \
        np.linalg.matrix_power(np.linalg.inv(report.M), -int(n))
    return fund.V(t) @ Mn


def trace_via_angle_action(profile: FrequencyProfile, tol: float = TOL, details: bool = False):
    """``2 mu = e^{-Psi1} sin psi1(T) + e^{-Psi2} cos psi2(T)``.

    ``psi1(0) = pi/2``, ``psi2(0) = 0`` and ``Psi_a = int (omega'/2omega)
    cos 2psi_a``, which equals ``-log(I_a(T)/I_a(0)) / 2``.
    """
    T = _period(profile)
    w0 = float(profile.value(0.0))
    wT = profile.one_sided(T, -1)[0] if profile.is_discontinuity(T) else float(profile.value(T))
    tr = integrate_angle_action(profile, [0.5 * math.pi, 0.0], [0.5 * w0, 0.5 / w0], 0.0, T, tol)
    psi, logI = tr.pieces[-1].ys[-1]
    Psi = -0.5 * (logI - np.log([0.5 * w0, 0.5 / w0]))
    q1 = math.sqrt(w0 / wT) * math.sin(psi[0]) * math.exp(-Psi[0])
    dq2 = math.sqrt(wT / w0) * math.cos(psi[1]) * math.exp(-Psi[1])
    mu = 0.5 * (q1 + dq2)
    if details:
        return mu, {"psi": psi, "Psi": Psi, "trajectory": tr}
    return mu


def mu_leading_order(profile: FrequencyProfile, tol: float = 1e-12):
    """``cos(w_bar T) cosh chi(T)`` with ``w_bar = phi(T)/T`` and
    ``chi(T) = int_0^T (omega'/2omega) cos(2 w_bar z) dz``."""
    T = _period(profile)
    breaks = profile.discontinuities
    phiT = quadrature(lambda z: float(profile.value(z)), 0.0, T, tol, breakpoints=breaks)
    wbar = phiT / T
    chi = quadrature(lambda z: 0.5 * float(profile.log_derivative(z)) * math.cos(2 * wbar * z),
                     0.0, T, tol, breakpoints=breaks)
    return math.cos(wbar * T) * math.cosh(chi)


def mathieu_chi(psi_star, eta, alpha, omega_bar, t):
    """Leading-order ``chi(t)`` for ``omega = w_bar sqrt(1 + eta sin(alpha t))``.

    Up to O(eta^2), ``log(I*/I(t)) = 2 chi(t)``.  The resonant branch is
    used when ``|alpha - 2 w_bar| < 1e-9 w_bar``.
    """
    t = np.asarray(t, dtype=float)
    b = 2 * psi_star
    if abs(alpha - 2 * omega_bar) < RESONANT_SWITCH * omega_bar:
        w = omega_bar
        return eta / 4 * w * (math.cos(b) * t + (np.sin(b + 4 * w * t) - math.sin(b)) / (4 * w))
    dm, dp = 2 * omega_bar - alpha, 2 * omega_bar + alpha
    return eta * alpha / 8 * (np.sin(b + dm * t) / dm + np.sin(b + dp * t) / dp
                              - 4 * omega_bar * math.sin(b) / (4 * omega_bar ** 2 - alpha ** 2))


def resonance_points(T, j_max, omega_bar=None):
    """``w_bar = j pi / T`` for j = 1..j_max (``omega_bar`` is accepted for
    symmetry with the analytic formulas and ignored)."""
    if T <= 0 or j_max < 1:
        raise ParameterError("need T > 0 and j_max >= 1")
    return [j * math.pi / T for j in range(1, int(j_max) + 1)]


# ---------------------------------------------------------------------------
# batched Mathieu monodromy

def mathieu_mu_batch(alpha, omega_bar, eta, tol=1e-10):
    """Half-traces of the Mathieu monodromy for arrays of (w_bar, eta).

    All members share the period ``2pi/alpha`` and are integrated as one
    batch (one step sequence).
    """
    wb = np.atleast_1d(np.asarray(omega_bar, dtype=float)).ravel()
    et = np.atleast_1d(np.asarray(eta, dtype=float)).ravel()
    wb, et = np.broadcast_arrays(wb, et)
    if np.any(np.abs(et) >= 1):
        raise ParameterError("|eta| must be < 1")
    n = wb.size
    w2 = wb ** 2
    T = 2 * math.pi / alpha
    # state: [q1, q2, p1, p2] x n
    y0 = np.zeros((4, n))
    y0[0] = 1.0
    y0[3] = 1.0

    def rhs(t, y):
        om2 = w2 * (1.0 + et * math.sin(alpha * t))
        return np.stack([y[2], y[3], -om2 * y[0], -om2 * y[1]])

    sol = dopri5(rhs, 0.0, y0, T, rtol=tol, atol=tol)
    yT = sol.ys[-1]
    mu = 0.5 * (yT[0] + yT[3])
    det = yT[0] * yT[3] - yT[1] * yT[2]
    return mu, det


@dataclass(frozen=True)
class StabilityMap:
    alpha: float
    omega_bar: np.ndarray
    eta: np.ndarray
    mu: np.ndarray              # shape (len(eta), len(omega_bar))
    det: np.ndarray

    @property
    def classes(self):
        return np.vectorize(classify)(self.mu)

    def boundary(self):
        """First-tongue boundary ``|eta| = 4 |2 w_bar/alpha - 1|`` for each w_bar."""
        return 4 * np.abs(2 * self.omega_bar / self.alpha - 1)

    def analytic_unstable(self):
        W, E = np.meshgrid(self.omega_bar, self.eta)
        return np.abs(E) > 4 * np.abs(2 * W / self.alpha - 1)

    def resonance_markers(self, j_max=3):
        return resonance_points(2 * math.pi / self.alpha, j_max)

    def to_csv(self, path):
        from .io import write_csv
        W, E = np.meshgrid(self.omega_bar, self.eta)
        return write_csv(path, {"omega_bar": W.ravel(), "eta": E.ravel(), "mu": self.mu.ravel(),
                                "class": self.classes.ravel(),
                                "analytic_unstable": self.analytic_unstable().ravel()},
                         schema="stability-map/1", meta={"alpha": self.alpha})

    def boundary_csv(self, path):
        from .io import write_csv
        return write_csv(path, {"omega_bar": self.omega_bar, "eta_boundary": self.boundary()},
                         schema="stability-boundary/1", meta={"alpha": self.alpha})


def stability_map(alpha, eta_range, omega_bar_range, grid_n=64, tol=1e-10,
                  progress=None) -> StabilityMap:
    """Classify a ``(w_bar, eta)`` grid by the Mathieu monodromy.

    ``grid_n`` is an int or a pair ``(n_omega, n_eta)``.  ``progress``, if
    given, is called with the fraction done after each eta row block.
    """
    n_w, n_e = (grid_n, grid_n) if np.isscalar(grid_n) else grid_n
    wb = np.linspace(omega_bar_range[0], omega_bar_range[1], int(n_w))
    et = np.linspace(eta_range[0], eta_range[1], int(n_e))
    mu = np.empty((len(et), len(wb)))
    det = np.empty_like(mu)
    block = max(1, 4096 // len(wb))
    for i0 in range(0, len(et), block):
        rows = et[i0:i0 + block]
        W, E = np.meshgrid(wb, rows)
        m, d = mathieu_mu_batch(alpha, W, E, tol)
        mu[i0:i0 + len(rows)] = m.reshape(W.shape)
        det[i0:i0 + len(rows)] = d.reshape(W.shape)
        if progress is not None:
            progress(min(1.0, (i0 + len(rows)) / len(et)))
    return StabilityMap(float(alpha), wb, et, mu, det)


def tongue_half_width(alpha, eta, tol=1e-11, xtol=1e-12):
    """Half-width in ``w_bar`` of the first instability tongue at fixed ``eta``.

    The edges are the roots of ``|mu(w_bar)| - 1`` on either side of
    ``alpha/2``, bracketed by outward search and refined by brentq.
    """
    if eta == 0:
        return 0.0, (alpha / 2, alpha / 2)

    def f(w):
        return abs(float(mathieu_mu_batch(alpha, w, eta, tol)[0][0])) - 1.0

    c = alpha / 2
    if f(c) <= 0:
        raise DomainError("alpha/2 is not inside the tongue for this eta")
    step = abs(eta) * alpha / 16
    edges = []
    for sgn in (-1, 1):
        inner, outer = c, c + sgn * step
        while f(outer) > 0:
            inner, outer = outer, outer + sgn * step
            if abs(outer - c) > alpha:
                raise DomainError("tongue edge not found")
        a, b = sorted((inner, outer))
        edges.append(optimize.brentq(f, a, b, xtol=xtol))
    return 0.5 * (edges[1] - edges[0]), tuple(edges)


# ---------------------------------------------------------------------------
# beats

@dataclass(frozen=True)
class BeatReport:
    amplitude: float
    amplitude_predicted: float
    period: float
    period_predicted: float
    max_abs_log: float
    within_bound: bool
    t: np.ndarray
    log_I: np.ndarray


def beat_analysis(eta, alpha, omega_bar, psi_star=0.0, t_max=None, rel_tol=0.15,
                  tol=1e-10, samples_per_unit=20) -> BeatReport:
    """Measure the slow oscillation of ``log(I/I*)`` near (not at) resonance.

    Amplitude is half the peak-to-peak of the slow component; period is the
    mean spacing of its upward zero crossings.  The slow component is the
    running mean over one fast period ``2pi/(2w_bar + alpha)``.
    """
    detune = 2 * omega_bar - alpha
    if abs(detune) < RESONANT_SWITCH * omega_bar:
        raise DomainError("beat analysis needs alpha != 2 w_bar")
    P = 2 * math.pi / abs(detune)
    t_max = 3 * P if t_max is None else t_max
    prof = builtin_profiles("mathieu", omega_bar=omega_bar, eta=eta, alpha=alpha)
    tr = integrate_angle_action(prof, psi_star, 1.0, 0.0, t_max, tol)
    n = int(t_max * samples_per_unit) + 1
    ts = np.linspace(0.0, t_max, n)
    logI = np.log(tr.I(ts))
    dt = ts[1] - ts[0]
    win = max(1, int(round(2 * math.pi / (2 * omega_bar + alpha) / dt)))
    slow = np.convolve(logI, np.ones(win) / win, mode="valid")
    ts_slow = ts[(win - 1) // 2:(win - 1) // 2 + len(slow)]
    amp = 0.5 * (slow.max() - slow.min())
    centred = slow - 0.5 * (slow.max() + slow.min())
    up = np.flatnonzero((centred[:-1] < 0) & (centred[1:] >= 0))
    if len(up) >= 2:
        # linear interpolation of the crossing instants
        tc = ts_slow[up] - centred[up] * dt / (centred[up + 1] - centred[up])
        period = float(np.mean(np.diff(tc)))
    else:
        period = float("nan")
    pred = abs(eta) * alpha / (4 * abs(detune))
    max_abs = float(np.max(np.abs(logI)))
    return BeatReport(float(amp), pred, period, P, max_abs, max_abs <= 2 * pred * (1 + rel_tol),
                      ts, logI)
