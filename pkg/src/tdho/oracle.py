"""Reference solutions used to validate everything else.

Two independent integrations of the oscillator are offered: the Hamilton
equations in ``(q, p)`` and the angle-action equations in ``(psi, log I)``.
Both split the time window at the declared jumps of omega; ``(q, p)`` is
carried across unchanged, ``(psi, I)`` through the matching relations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ._stepper import dopri5
from .errors import DomainError, QuadratureError
from .frequency import FrequencyProfile

__all__ = [
    "PhaseState",
    "Trajectory",
    "integrate_qp",
    "integrate_angle_action",
    "quadrature",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-10
ROUNDOFF = 200 * np.finfo(float).eps
# Local step tolerance is tol * STEP_FACTOR so that the accumulated error
# over windows of a few dozen periods stays near tol.
STEP_FACTOR = 0.02
STEP_FLOOR = 5e-16


@dataclass(frozen=True)
class PhaseState:
    t: float
    q: float
    p: float

    def energy(self, omega):
        """H = (p^2 + omega^2 q^2) / 2."""
        return 0.5 * (self.p ** 2 + omega ** 2 * self.q ** 2)


@dataclass(frozen=True)
class Trajectory:
    """Dense trajectory made of one stepper solution per continuity interval.

    ``kind`` is ``"qp"`` (columns q, p) or ``"angle_action"`` (columns psi,
    log I).  A batch dimension may follow the column axis.
    """

    pieces: tuple
    kind: str
    tolerance: float
    profile: FrequencyProfile

    @property
    def t0(self):
        return float(self.pieces[0].ts[0])

    @property
    def t1(self):
        return float(self.pieces[-1].ts[-1])

    @property
    def times(self) -> np.ndarray:
        ts = [self.pieces[0].ts]
        ts += [p.ts[1:] for p in self.pieces[1:]]
        return np.concatenate(ts)

    @property
    def states(self) -> np.ndarray:
        ys = [self.pieces[0].ys]
        ys += [p.ys[1:] for p in self.pieces[1:]]
        return np.concatenate(ys)

    @property
    def n_steps(self):
        return sum(p.n_steps for p in self.pieces)

    @property
    def samples(self):
        """Step nodes as :class:`PhaseState` (single trajectories only)."""
        qp = self.qp(self.times)
        return tuple(PhaseState(float(t), float(q), float(p))
                     for t, q, p in zip(self.times, qp[:, 0], qp[:, 1]))

    def __call__(self, t, side=+1):
        """Raw state at ``t``; at a jump, ``side`` picks the one-sided value."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        if len(self.pieces) == 1:
            out = self.pieces[0](tt)
        else:
            forward = self.t1 >= self.t0
            out = np.empty((len(tt),) + self.pieces[0].ys.shape[1:])
            done = np.zeros(len(tt), dtype=bool)
            order = list(self.pieces)
            # with side>0 a jump point belongs to the piece to its right
            if (side > 0) == forward:
                order = order[::-1]
            for piece in order:
                lo, hi = sorted((piece.ts[0], piece.ts[-1]))
                m = (~done) & (tt >= lo) & (tt <= hi)
                if m.any():
                    out[m] = piece(tt[m])
                    done |= m
            if not done.all():
                raise ValueError("evaluation outside the integrated interval")
        return out[0] if scalar else out

    def qp(self, t, side=+1):
        """Columns (q, p) at ``t``."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        y = self(tt, side)
        if self.kind == "angle_action":
            w = _omega_at(self.profile, tt, side).reshape((-1,) + (1,) * (y.ndim - 2))
            I = np.exp(y[:, 1])
            y = np.stack([np.sqrt(2 * I / w) * np.sin(y[:, 0]),
                          np.sqrt(2 * I * w) * np.cos(y[:, 0])], axis=1)
        return y[0] if np.ndim(t) == 0 else y

    def angle_action(self, t, side=+1):
        """Columns (psi, I) at ``t``."""
        if self.kind != "angle_action":
            raise TypeError("angle-action view needs an angle-action trajectory; "
                            "use angle_action.to_angle_action on (q, p) instead")
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        y = np.array(self(tt, side))
        y[:, 1] = np.exp(y[:, 1])
        return y[0] if np.ndim(t) == 0 else y

    def q(self, t, side=+1):
        return _column(self.qp(np.atleast_1d(t), side), 0, t)

    def p(self, t, side=+1):
        return _column(self.qp(np.atleast_1d(t), side), 1, t)

    def psi(self, t, side=+1):
        return _column(self.angle_action(np.atleast_1d(t), side), 0, t)

    def I(self, t, side=+1):  # noqa: E743
        return _column(self.angle_action(np.atleast_1d(t), side), 1, t)

    def to_csv(self, path, t=None):
        """Write ``t,q,p[,psi,I]`` rows (step nodes unless ``t`` is given)."""
        from .io import write_csv

        t = self.times if t is None else np.asarray(t, float)
        qp = self.qp(t)
        cols = {"t": t, "q": qp[:, 0], "p": qp[:, 1]}
        if self.kind == "angle_action":
            aa = self.angle_action(t)
            cols["psi"] = aa[:, 0]
            cols["I"] = aa[:, 1]
        write_csv(path, cols, schema="trajectory/1")


def _column(y, j, t):
    col = y[:, j]
    return col[0] if np.ndim(t) == 0 else col


def _omega_at(profile, tt, side):
    if not profile.discontinuities:
        return np.asarray(profile.value(tt), dtype=float) * np.ones_like(tt)
    return np.array([profile.one_sided(x, side)[0] for x in tt])


def _step_tol(tol):
    return max(tol * STEP_FACTOR, STEP_FLOOR)


def _check_tol(tol):
    if not tol > 0:
        raise DomainError("tol must be positive")


def integrate_qp(profile: FrequencyProfile, q0, p0, t0: float, t1: float,
                 tol: float = DEFAULT_TOL) -> Trajectory:
    """Integrate q' = p, p' = -omega^2 q from ``(q0, p0)`` at ``t0`` to ``t1``.

    ``q0`` and ``p0`` may be arrays of equal shape; the batch then shares
    the step sequence.
    """
    _check_tol(tol)
    y = np.array([np.asarray(q0, float), np.asarray(p0, float)])
    pieces = []
    for a, b in profile.continuity_intervals(t0, t1):
        w, _ = profile.restricted(a, b)

        def rhs(t, y, w=w):
            return np.array([y[1], -float(w(t)) ** 2 * y[0]])

        sol = dopri5(rhs, a, y, b, rtol=_step_tol(tol), atol=_step_tol(tol))
        pieces.append(sol)
        y = sol.ys[-1]
    return Trajectory(tuple(pieces), "qp", tol, profile)


def integrate_angle_action(profile: FrequencyProfile, psi0, I0, t0: float, t1: float,
                           tol: float = DEFAULT_TOL) -> Trajectory:
    """Integrate psi' = w + (w'/2w) sin 2psi, (log I)' = -(w'/w) cos 2psi.

    The state is stored as ``(psi, log I)`` with psi unwrapped.  At each
    declared jump the matching relations are applied.
    """
    from .angle_action import match_discontinuity

    _check_tol(tol)
    if np.any(np.asarray(I0) <= 0):
        raise DomainError("the action must be positive")
    y = np.array([np.asarray(psi0, float), np.log(np.asarray(I0, float))])
    pieces = []
    intervals = profile.continuity_intervals(t0, t1)
    for k, (a, b) in enumerate(intervals):
        if k > 0:
            side_prev = -1 if b > a else +1
            w_minus = profile.one_sided(a, side_prev)[0]
            w_plus = profile.one_sided(a, -side_prev)[0]
            psi_p, I_p = match_discontinuity(y[0], np.exp(y[1]), w_minus, w_plus)
            y = np.array([psi_p, np.log(I_p)])
        w, dw = profile.restricted(a, b)

        def rhs(t, y, w=w, dw=dw):
            om = float(w(t))
            lg = float(dw(t)) / om
            s2, c2 = np.sin(2 * y[0]), np.cos(2 * y[0])
            return np.array([om + 0.5 * lg * s2, -lg * c2])

        sol = dopri5(rhs, a, y, b, rtol=_step_tol(tol), atol=_step_tol(tol))
        pieces.append(sol)
        y = sol.ys[-1]
    return Trajectory(tuple(pieces), "angle_action", tol, profile)


def quadrature(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12,
               breakpoints: Sequence[float] = (), limit: int = 1000) -> float:
    """Adaptive Gauss-Kronrod quadrature with absolute error <= ``tol``.

    Breakpoints split the interval so that piecewise-continuous integrands
    are handled panel by panel.  A target below the float64 rounding level
    of the result is capped at ``ROUNDOFF * |result|``.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    cuts = sorted(x for x in breakpoints if a < x < b)
    pts = [a, *cuts, b]
    total, err_total = 0.0, 0.0
    n = len(pts) - 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(pts[:-1], pts[1:]):
            val, err = integrate.quad(f, lo, hi, epsabs=tol / n, epsrel=0.0, limit=limit)
            total += val
            err_total += err
    if not math.isfinite(total) or err_total > max(tol, ROUNDOFF * abs(total)):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] reached error {err_total:.3e} > tol={tol:.1e}",
            achieved_error=err_total)
    return sign * total
