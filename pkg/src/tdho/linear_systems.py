"""Fundamental matrices, propagators, inhomogeneous solutions and the
reduction of a general 2x2 linear system to oscillator form.

Also the Ermakov construction rho = sqrt(q1^2 + q2^2) with its exact
invariant, used as an independent consistency check of the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._grid import NodeGrid
from .errors import DomainError, ParameterError
from .frequency import FrequencyProfile
from .oracle import DEFAULT_TOL, Trajectory, integrate_qp, quadrature

__all__ = [
    "FundamentalMatrix",
    "GeneralSystem",
    "Reduction",
    "ErmakovReport",
    "fundamental_matrix",
    "propagator",
    "nu_lambda",
    "solve_inhomogeneous",
    "reduce_general_system",
    "ermakov_invariant",
    "ermakov_check",
]


@dataclass(frozen=True)
class FundamentalMatrix:
    """q1, q2 with q1(t0)=q2'(t0)=1, q2(t0)=q1'(t0)=0, as dense trajectories.

    ``forward`` covers ``[t0, t_hi]``, ``backward`` (possibly None) covers
    ``[t_lo, t0]``.
    """

    profile: FrequencyProfile
    t0: float
    forward: Trajectory | None
    backward: Trajectory | None
    tolerance: float
    wronskian_drift: float = 0.0

    def _states(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), 2, 2))
        fw = t >= self.t0
        if fw.any():
            if self.forward is None:
                raise ValueError("evaluation outside the integrated interval")
            out[fw] = self.forward(t[fw])
        if (~fw).any():
            if self.backward is None:
                raise ValueError("evaluation outside the integrated interval")
            out[~fw] = self.backward(t[~fw])
        return out          # [:, row (q or p), column (solution 1 or 2)]

    def V(self, t):
        v = self._states(t)
        return v[0] if np.ndim(t) == 0 else v

    def V_inv(self, t):
        v = self._states(t)
        inv = np.empty_like(v)
        inv[:, 0, 0] = v[:, 1, 1]
        inv[:, 0, 1] = -v[:, 0, 1]
        inv[:, 1, 0] = -v[:, 1, 0]
        inv[:, 1, 1] = v[:, 0, 0]
        return inv[0] if np.ndim(t) == 0 else inv

    def q1(self, t):
        return self._pick(t, 0, 0)

    def q2(self, t):
        return self._pick(t, 0, 1)

    def dq1(self, t):
        return self._pick(t, 1, 0)

    def dq2(self, t):
        return self._pick(t, 1, 1)

    def _pick(self, t, i, j):
        v = self._states(t)[:, i, j]
        return float(v[0]) if np.ndim(t) == 0 else v

    def wronskian(self, t):
        v = self._states(t)
        w = v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] * v[:, 1, 0]
        return float(w[0]) if np.ndim(t) == 0 else w

    def to_csv(self, path, t):
        from .io import write_csv
        v = self._states(t)
        return write_csv(path, {"t": np.asarray(t, float), "q1": v[:, 0, 0], "q2": v[:, 0, 1],
                                "dq1": v[:, 1, 0], "dq2": v[:, 1, 1],
                                "det": v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] * v[:, 1, 0]},
                         schema="fundamental-matrix/1")


def fundamental_matrix(profile: FrequencyProfile, t_grid, t0: float = 0.0,
                       tol: float = DEFAULT_TOL) -> FundamentalMatrix:
    """Integrate both fundamental solutions over the hull of ``t_grid`` (and ``t0``)."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    lo, hi = min(t_grid.min(), t0), max(t_grid.max(), t0)
    fw = integrate_qp(profile, [1.0, 0.0], [0.0, 1.0], t0, hi, tol) if hi > t0 else None
    bw = integrate_qp(profile, [1.0, 0.0], [0.0, 1.0], t0, lo, tol) if lo < t0 else None
    fm = FundamentalMatrix(profile, float(t0), fw, bw, tol)
    drift = float(np.max(np.abs(fm.wronskian(t_grid) - 1.0)))
    return FundamentalMatrix(profile, float(t0), fw, bw, tol, drift)


def propagator(fund: FundamentalMatrix, t, t_star):
    """``V(t) V^{-1}(t*)``: maps the state at ``t*`` to the state at ``t``."""
    V = fund.V(t)
    Vi = fund.V_inv(t_star)
    return V @ Vi


def nu_lambda(fund: FundamentalMatrix, t, t_star):
    """``nu = q2(t)q1(t*) - q1(t)q2(t*)`` and ``lambda = q1(t)q2'(t*) - q2(t)q1'(t*)``.

    These are the solutions with data (0, 1) and (1, 0) at ``t*``.
    """
    q1t, q2t = fund.q1(t), fund.q2(t)
    nu = q2t * fund.q1(t_star) - q1t * fund.q2(t_star)
    lam = q1t * fund.dq2(t_star) - q2t * fund.dq1(t_star)
    return nu, lam


def solve_inhomogeneous(fund: FundamentalMatrix, a: Callable, x_star, t_star, t,
                        tol: float = 1e-12):
    """``x(t) = V(t)V^{-1}(t*) x* + V(t) int_{t*}^t V^{-1}(z) a(z) dz``.

    ``a(z)`` returns the 2-vector forcing of ``x' = A x + a`` with
    ``A = [[0, 1], [-omega^2, 0]]``.
    """
    x_star = np.asarray(x_star, dtype=float)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    Vi_star = fund.V_inv(t_star)
    breaks = fund.profile.discontinuities
    out = np.empty((len(ts), 2))
    for n, tt in enumerate(ts):
        integ = np.zeros(2)
        for k in range(2):
            def f(z, k=k):
                return float((fund.V_inv(z) @ np.asarray(a(z), dtype=float))[k])
            integ[k] = quadrature(f, t_star, tt, tol, breakpoints=breaks)
        out[n] = fund.V(tt) @ (Vi_star @ x_star + integ)
    return out[0] if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# general systems

def _fd(f, t, order=1, h=None):
    """Fourth-order central differences."""
    h = 1e-3 * max(1.0, abs(t)) if h is None else h
    if order == 1:
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)
    if order == 2:
        return (-f(t - 2 * h) + 16 * f(t - h) - 30 * f(t) + 16 * f(t + h) - f(t + 2 * h)) / (12 * h * h)
    raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class GeneralSystem:
    """``x~' = A(t) x~ + a(t)`` with optional analytic derivatives of ``A``.

    ``dA`` and ``d2A12`` default to finite differences.
    """

    A: Callable
    a: Callable | None = None
    dA: Callable | None = None
    d2A12: Callable | None = None

    def mat(self, t):
        return np.asarray(self.A(t), dtype=float)

    def dmat(self, t):
        if self.dA is not None:
            return np.asarray(self.dA(t), dtype=float)
        return _fd(self.mat, t)

    def dd12(self, t):
        if self.d2A12 is not None:
            return float(self.d2A12(t))
        return float(_fd(lambda z: self.mat(z)[0, 1], t, order=2))


@dataclass(frozen=True)
class Reduction:
    """Result of reducing a general system to ``q'' = -omega^2 q``.

    New variables ``x = e^Lambda B x~`` with ``B = [[1, 0], [b, A12]]``.
    """

    system: GeneralSystem
    t0: float

    def b(self, t):
        A, dA = self.system.mat(t), self.system.dmat(t)
        return 0.5 * (A[0, 0] - A[1, 1] - dA[0, 1] / A[0, 1])

    def db(self, t):
        A, dA = self.system.mat(t), self.system.dmat(t)
        dd12 = self.system.dd12(t)
        dlog = (dd12 * A[0, 1] - dA[0, 1] ** 2) / A[0, 1] ** 2
        return 0.5 * (dA[0, 0] - dA[1, 1] - dlog)

    def omega2(self, t):
        A = self.system.mat(t)
        return -(self.db(t) + self.b(t) ** 2 + A[0, 1] * A[1, 0])

    def Lambda(self, t):
        """Solution of ``2 Lambda' + A11 + A22 + A12'/A12 = 0`` with ``Lambda(t0) = 0``."""
        tr = quadrature(lambda z: float(np.trace(self.system.mat(z))), self.t0, t, 1e-12)
        a12 = self.system.mat(t)[0, 1] / self.system.mat(self.t0)[0, 1]
        return -0.5 * tr - 0.5 * math.log(abs(a12))

    def B(self, t):
        return np.array([[1.0, 0.0], [self.b(t), self.system.mat(t)[0, 1]]])

    def to_new(self, x_tilde, t):
        return math.exp(self.Lambda(t)) * self.B(t) @ np.asarray(x_tilde, dtype=float)

    def to_original(self, x, t):
        return math.exp(-self.Lambda(t)) * np.linalg.solve(self.B(t), np.asarray(x, dtype=float))

    def forcing(self, t):
        """Transformed forcing ``a = e^Lambda B a~``."""
        if self.system.a is None:
            return np.zeros(2)
        return self.to_new(self.system.a(t), t)

    def omega2_sign(self, ts):
        """Pointwise sign of omega^2 (+1, 0, -1); no global decision is made."""
        return np.sign([self.omega2(float(t)) for t in np.atleast_1d(ts)])

    def profile(self, ts, name="reduced") -> FrequencyProfile:
        """FrequencyProfile ``sqrt(omega^2)``; omega^2 must be positive on ``ts``."""
        if np.any(self.omega2_sign(ts) <= 0):
            raise ParameterError("omega^2 is not positive on the sampled domain")

        def value(t):
            t = np.asarray(t, dtype=float)
            return np.sqrt(np.vectorize(self.omega2)(t)) if t.ndim else math.sqrt(self.omega2(float(t)))

        def derivative(t):
            def one(z):
                return _fd(self.omega2, float(z)) / (2 * math.sqrt(self.omega2(float(z))))
            t = np.asarray(t, dtype=float)
            return np.vectorize(one)(t) if t.ndim else one(float(t))

        return FrequencyProfile(value, derivative, name=name)


def reduce_general_system(sys: GeneralSystem, t0: float = 0.0, check_at=None) -> Reduction:
    """Reduction valid where ``A12 != 0``; the swapped-index branch is not offered."""
    pts = [t0] if check_at is None else list(np.atleast_1d(check_at)) + [t0]
    for t in pts:
        if sys.mat(float(t))[0, 1] == 0:
            raise DomainError(f"A12 vanishes at t={t}; this reduction branch needs A12 != 0")
    return Reduction(sys, float(t0))


# ---------------------------------------------------------------------------
# Ermakov

def ermakov_invariant(q, dq, rho, drho, L=1.0):
    """``I_E = [(q rho' - q' rho)^2 + L^2 (q/rho)^2] / 2``."""
    return 0.5 * ((q * drho - dq * rho) ** 2 + L ** 2 * (q / rho) ** 2)


@dataclass(frozen=True)
class ErmakovReport:
    rho_min: float
    residual_analytic: float        # max |rho'' + w^2 rho - 1/rho^3| from the closed-form rho''
    residual_fd: float              # same with a finite-difference rho''
    invariant_drift: float          # relative drift of I_E along an independent solution
    fundamental_I: tuple            # I_E along q1 and q2 (should be 1/2 each)
    general_solution_residual: float

    @property
    def ok(self):
        return (self.rho_min > 0 and self.invariant_drift < 1e-8
                and max(abs(x - 0.5) for x in self.fundamental_I) < 1e-8)


def ermakov_check(fund: FundamentalMatrix, t=None, q0=0.3, p0=-0.7, A=1.3, alpha=0.4,
                  tol: float | None = None) -> ErmakovReport:
    """Verify the Ermakov construction on the sample times ``t``."""
    prof = fund.profile
    tol = fund.tolerance if tol is None else tol
    if t is None:
        lo = fund.backward.t1 if fund.backward is not None else fund.t0
        hi = fund.forward.t1 if fund.forward is not None else fund.t0
        t = np.linspace(lo, hi, 2001)
    t = np.asarray(t, dtype=float)
    v = fund._states(t)
    q1, q2, p1, p2 = v[:, 0, 0], v[:, 0, 1], v[:, 1, 0], v[:, 1, 1]
    rho = np.sqrt(q1 ** 2 + q2 ** 2)
    drho = (q1 * p1 + q2 * p2) / rho
    w2 = np.asarray(prof.value(t), dtype=float) ** 2
    ddrho = (p1 ** 2 + p2 ** 2 - w2 * rho ** 2) / rho - drho ** 2 / rho
    res_a = float(np.max(np.abs(ddrho + w2 * rho - 1 / rho ** 3)))

    def rho_at(z):
        s = fund._states(np.atleast_1d(z))
        return np.sqrt(s[:, 0, 0] ** 2 + s[:, 0, 1] ** 2)

    # rho varies on the scale rho_min^2 near its dips
    scale = float(rho.min()) ** 2
    hfd = min(1e-2, 0.01 * scale)
    inner = t[(t > t.min() + 4 * hfd) & (t < t.max() - 4 * hfd)]
    if inner.size:
        dd = (-rho_at(inner - 2 * hfd) + 16 * rho_at(inner - hfd) - 30 * rho_at(inner)
              + 16 * rho_at(inner + hfd) - rho_at(inner + 2 * hfd)) / (12 * hfd ** 2)
        w2i = np.asarray(prof.value(inner), dtype=float) ** 2
        ri = rho_at(inner)
        res_fd = float(np.max(np.abs(dd + w2i * ri - 1 / ri ** 3)))
    else:
        res_fd = float("nan")

    # invariant along an independently integrated solution
    lo, hi = float(t.min()), float(t.max())
    sol_f = integrate_qp(prof, q0, p0, fund.t0, hi, tol) if hi > fund.t0 else None
    sol_b = integrate_qp(prof, q0, p0, fund.t0, lo, tol) if lo < fund.t0 else None
    qp = np.empty((len(t), 2))
    if sol_f is not None:
        m = t >= fund.t0
        qp[m] = sol_f.qp(t[m])
    if sol_b is not None:
        m = t < fund.t0
        qp[m] = sol_b.qp(t[m])
    IE = ermakov_invariant(qp[:, 0], qp[:, 1], rho, drho)
    drift = float(np.max(np.abs(IE - IE[0])) / abs(IE[0]))
    I1 = ermakov_invariant(q1, p1, rho, drho)
    I2 = ermakov_invariant(q2, p2, rho, drho)
    fundamental_I = (float(np.max(np.abs(I1 - 0.5)) + 0.5), float(np.max(np.abs(I2 - 0.5)) + 0.5))

    # general solution A rho sin(theta + alpha) with theta' = 1/rho^2
    n_cells = max(400, int(math.ceil((hi - lo) / (0.25 * scale))))
    gs_res = _general_solution_residual(fund, lo, hi, A, alpha, n_cells)
    return ErmakovReport(float(rho.min()), res_a, res_fd, drift, fundamental_I, gs_res)


def _general_solution_residual(fund, lo, hi, A, alpha, n_cells=400):
    grid = np.linspace(lo, hi, n_cells + 1)
    if fund.t0 not in grid:
        grid = np.unique(np.concatenate([grid, [fund.t0]]))
    ng = NodeGrid(grid, fund.t0)
    s = fund._states(ng.nodes.ravel())
    rho2 = (s[:, 0, 0] ** 2 + s[:, 0, 1] ** 2).reshape(ng.nodes.shape)
    # theta(t0) = 0 gives q1 = rho cos theta, q2 = rho sin theta
    theta = ng.cumulative(1.0 / rho2)
    rho = np.sqrt(rho2)
    q = A * rho * np.sin(theta + alpha)
    ref = A * (s[:, 0, 0].reshape(rho.shape) * np.sin(alpha) + s[:, 0, 1].reshape(rho.shape) * np.cos(alpha))
    return float(np.max(np.abs(q - ref)))
