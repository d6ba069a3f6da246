"""Riccati variables r = q'/q, s = q/q' and the special points t_h.

Between consecutive zeros of q (of p) the variable r (s) is finite and obeys
a Riccati equation; its Picard iterates give closed-form short-time
approximants.  The special points themselves are located where the
unwrapped angle psi crosses multiples of pi/2, then refined by bisection on
q (even h) or p (odd h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._grid import DEFAULT_NODES, NodeGrid, merge_points
from ._stepper import dopri5
from .errors import DomainError, ParameterError
from .frequency import FrequencyProfile, _check_no_jump
from .oracle import DEFAULT_TOL, integrate_angle_action, integrate_qp, quadrature

__all__ = [
    "RiccatiIterates",
    "ZeroSequence",
    "MonotonicityReport",
    "riccati_rhs",
    "riccati_integrate",
    "riccati_picard",
    "reconstruct_q",
    "find_zero_sequence",
    "check_monotonicity_in_ti",
    "BLOWUP",
]

BLOWUP = 1e6
ZERO_BRACKET = 1e-11


def _kind(kind):
    if kind not in ("r", "s"):
        raise ParameterError("kind must be 'r' or 's'")
    return kind


def riccati_rhs(kind, value, omega):
    """``r' = -omega^2 - r^2`` or ``s' = 1 + omega^2 s^2``."""
    if _kind(kind) == "r":
        return -omega ** 2 - value ** 2
    return 1.0 + omega ** 2 * value ** 2


def riccati_integrate(kind, profile: FrequencyProfile, v_star, t_star, t_end,
                      tol=DEFAULT_TOL, blowup=BLOWUP):
    """Integrate the Riccati equation, stopping once ``|v|`` exceeds ``blowup``.

    Returns the dense solution; its last node is where the run stopped.
    """
    _kind(kind)
    _check_no_jump(profile, t_star, t_end)
    w, _ = profile.restricted(t_star, t_end)

    def rhs(t, y):
        return np.array([riccati_rhs(kind, y[0], float(w(t)))])

    return dopri5(rhs, t_star, [v_star], t_end, rtol=tol, atol=tol,
                  stop=lambda t, y: abs(y[0]) > blowup)


@dataclass(frozen=True)
class RiccatiIterates:
    """Picard iterates of a Riccati variable on ``grid``.

    ``values[k]`` is the order-k iterate at the grid points; ``nodal`` keeps
    the values at the collocation nodes for later quadratures.  Iterates that
    exceed the blow-up level are cut: ``valid_until[k]`` is the last grid
    time where order k is still below it.
    """

    kind: str
    grid: np.ndarray
    t_star: float
    v_star: float
    values: np.ndarray
    valid_until: np.ndarray
    first_order_closed: np.ndarray
    q1_closed: np.ndarray | None
    nodal: tuple = field(repr=False, default=())
    node_grid: object = field(repr=False, default=None)

    @property
    def order(self):
        return len(self.values) - 1

    @property
    def truncated(self):
        return bool(np.any(self.valid_until < self.grid[-1]))


def riccati_picard(kind, profile: FrequencyProfile, v_star, t_star, grid, h,
                   n_nodes=DEFAULT_NODES, blowup=BLOWUP) -> RiccatiIterates:
    """Picard iterates starting from the constant ``v*``.

    r: ``r^(k) = r* - int [ (r^(k-1))^2 + omega^2 ]``;
    s: ``s^(k) = s* + int [ 1 + omega^2 (s^(k-1))^2 ]``.
    Also returns the first-order closed forms ``r* - r*^2 (t-t*) - int omega^2``
    (resp. ``s* + (t-t*) + s*^2 int omega^2``) and, for r, the matching
    ``q^(1)/q* = exp{r*(t-t*) - r*^2 (t-t*)^2/2 - int (t-z) omega^2 dz}``.
    """
    _kind(kind)
    if h < 0:
        raise ParameterError("h must be nonnegative")
    grid = merge_points(np.asarray(grid, dtype=float), [t_star])
    _check_no_jump(profile, grid[0], grid[-1])
    ng = NodeGrid(grid, t_star, n_nodes)
    w_fn, _ = profile.restricted(grid[0], grid[-1])
    w2 = (np.asarray(w_fn(ng.nodes), dtype=float) * np.ones(ng.nodes.shape)) ** 2
    cur = np.full(ng.nodes.shape, float(v_star))
    nodal = [cur]
    dt = ng.nodes - t_star
    W = ng.cumulative(w2)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(h):
            prev = np.where(np.abs(nodal[-1]) > blowup, np.nan, nodal[-1])
            if kind == "r":
                nxt = v_star - ng.cumulative(prev ** 2 + w2)
            else:
                nxt = v_star + ng.cumulative(1.0 + w2 * prev ** 2)
            nodal.append(_poison_after_blowup(ng, nxt, blowup))
    values = np.array([ng.at_grid(v) for v in nodal])
    valid_until = np.array([_valid_until(grid, t_star, v, blowup) for v in values])
    if kind == "r":
        first = v_star - v_star ** 2 * dt - W
        q1 = np.exp(v_star * dt - 0.5 * v_star ** 2 * dt ** 2 - ng.cumulative(W))
        q1 = ng.at_grid(q1)
    else:
        first = v_star + dt + v_star ** 2 * W
        q1 = None
    return RiccatiIterates(kind, grid, float(t_star), float(v_star), values, valid_until,
                           ng.at_grid(first), q1, tuple(nodal), ng)


def _poison_after_blowup(ng, nodal, blowup):
    """Once an iterate leaves the working range, everything farther from t* is NaN."""
    bad = ~np.isfinite(nodal) | (np.abs(nodal) > blowup)
    if not bad.any():
        return nodal
    flat = bad.ravel()
    out = nodal.copy().ravel()
    dist = np.abs(ng.nodes.ravel() - ng.grid[ng.origin_index])
    side = np.sign(ng.nodes.ravel() - ng.grid[ng.origin_index])
    for sgn in (-1.0, 1.0):
        m = flat & (side == sgn)
        if m.any():
            d0 = dist[m].min()
            out[(side == sgn) & (dist >= d0)] = np.nan
    return out.reshape(nodal.shape)


def _valid_until(grid, t_star, v, blowup):
    ok = np.isfinite(v) & (np.abs(v) <= blowup)
    ahead = grid >= t_star
    idx = np.flatnonzero(ahead & ~ok)
    if len(idx) == 0:
        return float(grid[-1])
    first_bad = idx[0]
    return float(grid[first_bad - 1]) if first_bad > 0 else float(t_star)


def reconstruct_q(kind, samples, q_star, t_star=None, order=None, profile=None, p_star=None):
    """Rebuild q from Riccati samples.

    r: ``q = q* exp int r``.  s: ``q = q* exp int dz/s`` when ``q* != 0``;
    otherwise pass ``profile`` and ``p_star`` to use the equivalent
    ``q = s p* exp(-int omega^2 s)``, which stays regular at a zero of q.
    ``samples`` is a :class:`RiccatiIterates` or a ``(grid, values)`` pair.
    """
    _kind(kind)
    if isinstance(samples, RiccatiIterates):
        ng = samples.node_grid
        k = samples.order if order is None else order
        v = samples.nodal[k]
        t_star = samples.t_star if t_star is None else t_star
    else:
        grid, vals = samples
        grid = np.asarray(grid, dtype=float)
        vals = np.asarray(vals, dtype=float)
        ng = NodeGrid(grid, t_star, 3)
        # Lobatto-3 uses cell midpoints: fill them by cubic interpolation
        from scipy.interpolate import CubicSpline
        v = CubicSpline(grid, vals)(ng.nodes)
    if kind == "r":
        return ng.at_grid(q_star * np.exp(ng.cumulative(v)))
    if q_star != 0:
        return ng.at_grid(q_star * np.exp(ng.cumulative(1.0 / v)))
    if profile is None or p_star is None:
        raise DomainError("q* = 0 needs profile and p_star for the s-route")
    w = np.asarray(profile.value(ng.nodes), dtype=float) * np.ones(ng.nodes.shape)
    return ng.at_grid(v * p_star * np.exp(-ng.cumulative(w ** 2 * v)))


# ---------------------------------------------------------------------------
# special points

@dataclass(frozen=True)
class ZeroSequence:
    """Special points ``t_h`` (q = 0 for even h, p = 0 for odd h)."""

    indices: np.ndarray         # h for every instant
    instants: np.ndarray
    brackets: np.ndarray        # (n, 2) bisection brackets
    omega_sup: np.ndarray       # per gap (n-1)
    omega_inf: np.ndarray
    refined: np.ndarray = field(default=None)   # (n-1, 3): low, value, high or NaN

    @property
    def parity(self):
        return np.where(self.indices % 2 == 0, "q", "p")

    @property
    def gaps(self):
        return np.diff(self.instants)

    @property
    def quadrants(self):
        """Quadrant (1..4) of the open interval ]t_h, t_{h+1}[."""
        return self.indices[:-1] % 4 + 1

    @property
    def bound_low(self):
        return np.pi / (2 * self.omega_sup)

    @property
    def bound_high(self):
        return np.pi / (2 * self.omega_inf)

    def gap_bounds_ok(self, slack=1e-10):
        g = self.gaps
        return (g >= self.bound_low - slack) & (g <= self.bound_high + slack)

    def refined_ok(self, slack=1e-9):
        """Refined gap test on monotone gaps (NaN rows count as passing)."""
        if self.refined is None:
            return np.ones(len(self.gaps), dtype=bool)
        lo, val, hi = self.refined.T
        skip = np.isnan(val)
        return skip | ((val >= lo - slack) & (val <= hi + slack))

    def interlaced(self):
        d = np.diff(self.indices)
        return bool(np.all(d == 1) and np.all(np.diff(self.instants) > 0))

    def certificates(self):
        return {
            "strictly_increasing": bool(np.all(np.diff(self.instants) > 0)),
            "interlaced": self.interlaced(),
            "gap_bounds": bool(np.all(self.gap_bounds_ok())),
            "refined_bounds": bool(np.all(self.refined_ok())),
            "bracket_width": bool(np.all(np.diff(self.brackets, axis=1) <= ZERO_BRACKET * 1.0001)),
        }

    def to_csv(self, path):
        from .io import write_csv
        n = len(self.instants)
        pad = lambda a: np.concatenate([a, [np.nan]])  # noqa: E731
        cols = {"h": self.indices, "t_h": self.instants, "parity": self.parity,
                "gap": pad(self.gaps), "bound_low": pad(self.bound_low),
                "bound_high": pad(self.bound_high)}
        if self.refined is not None and n > 1:
            cols["refined_low"] = pad(self.refined[:, 0])
            cols["refined_value"] = pad(self.refined[:, 1])
            cols["refined_high"] = pad(self.refined[:, 2])
        return write_csv(path, cols, schema="zero-sequence/1")


def _monotone_on(profile, a, b, n=513):
    ts = np.linspace(a, b, n)
    d = np.asarray(profile.derivative(ts), dtype=float) * np.ones_like(ts)
    scale = float(np.max(np.abs(d)))
    if scale == 0:
        return True
    return not (np.any(d > 1e-12 * scale) and np.any(d < -1e-12 * scale))


def _bisect(fun, a, b, width=ZERO_BRACKET):
    fa = fun(a)
    fb = fun(b)
    if fa == 0:
        return a, a
    if fb == 0:
        return b, b
    if np.sign(fa) == np.sign(fb):
        raise DomainError("bisection bracket does not change sign")
    while b - a > width:
        m = 0.5 * (a + b)
        fm = fun(m)
        if fm == 0:
            return m, m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return a, b


def find_zero_sequence(profile: FrequencyProfile, q0, p0, t0, t_max, tol=1e-12,
                       refined=True) -> ZeroSequence:
    """Locate every special point of the solution through ``(q0, p0)`` at ``t0`` in [t0, t_max].

    The label h is fixed by putting ``psi(t0)`` in [0, 2pi).
    """
    if t_max <= t0:
        raise DomainError("need t_max > t0")
    w_sup, w_inf = profile.sup_inf(t0, t_max)
    if not w_inf > 0:
        raise DomainError("inf omega must be positive on the window")
    if q0 == 0 and p0 == 0:
        raise DomainError("the zero solution has no special points")
    w0 = profile.one_sided(t0, +1)[0]
    psi0 = math.atan2(w0 * q0, p0) % (2 * math.pi)
    I0 = (p0 ** 2 + w0 ** 2 * q0 ** 2) / (2 * w0)
    aa = integrate_angle_action(profile, psi0, I0, t0, t_max, tol=tol)
    qp = integrate_qp(profile, q0, p0, t0, t_max, tol=tol)
    ts = aa.times
    psi = aa.states[:, 0]
    half = math.pi / 2
    # consecutive special points are at least pi/(2 w_sup) apart
    max_span = 0.45 * math.pi / (2 * w_sup)
    k_lo = math.ceil(psi0 / half - 1e-15)
    k_hi = math.floor(psi.max() / half)
    idx, inst, brk = [], [], []
    for k in range(k_lo, k_hi + 1):
        level = k * half
        above = np.flatnonzero(psi >= level)
        j = int(above[0])
        if j == 0:
            t_psi = ts[0]
        else:
            t_psi = optimize.brentq(lambda x: aa.psi(x) - level, ts[j - 1], ts[j],
                                    xtol=1e-14, rtol=1e-15)
        col = 0 if k % 2 == 0 else 1
        f = lambda x, c=col: qp.qp(x)[c]  # noqa: E731
        if t_psi == t0:
            # psi(t0) sits on the level itself
            a, b = t0, t0
        else:
            span = 1e-6
            a, b = max(t0, t_psi - span), min(t_max, t_psi + span)
            while np.sign(f(a)) == np.sign(f(b)) and f(a) != 0:
                span *= 4
                if span > max_span:
                    raise DomainError(f"no sign change of {'qp'[col]} near t={t_psi:.17g}")
                a, b = max(t0, t_psi - span), min(t_max, t_psi + span)
            a, b = _bisect(f, a, b)
        idx.append(k)
        inst.append(0.5 * (a + b))
        brk.append((a, b))
    inst = np.array(inst)
    sup, inf, ref = [], [], []
    for k, (a, b) in enumerate(zip(inst[:-1], inst[1:])):
        u, l = profile.sup_inf(a, b)
        sup.append(u)
        inf.append(l)
        if refined and not profile.discontinuities and _monotone_on(profile, a, b):
            h = idx[k]
            wa, wb = float(profile.value(a)), float(profile.value(b))
            D = (-1) ** h * 0.5 * math.log(wb / wa)
            integral = quadrature(lambda z: float(profile.value(z)), a, b, 1e-13)
            ref.append((min(0.0, D), half - integral, max(0.0, D)))
        else:
            ref.append((np.nan, np.nan, np.nan))
    return ZeroSequence(np.array(idx, dtype=int), inst, np.array(brk).reshape(-1, 2),
                        np.array(sup), np.array(inf), np.array(ref).reshape(-1, 3))


@dataclass(frozen=True)
class MonotonicityReport:
    ti: np.ndarray
    h_values: np.ndarray
    table: np.ndarray           # (len(ti), len(h_values)) of t_h(t_i); NaN if not reached
    violations: tuple

    @property
    def ok(self):
        return len(self.violations) == 0


def check_monotonicity_in_ti(profile: FrequencyProfile, q_i, p_i, ti_grid, h_range,
                             tol=1e-12) -> MonotonicityReport:
    """Special points ``t_h(t_i)`` of the solutions with data ``(q_i, p_i)`` at ``t_i``.

    Each ``t_h`` must grow strictly with ``t_i``; violations are listed as
    ``(h, t_i, t_i_next)``.
    """
    ti = np.sort(np.asarray(ti_grid, dtype=float))
    hs = np.arange(h_range[0], h_range[1] + 1)
    table = np.full((len(ti), len(hs)), np.nan)
    for i, t in enumerate(ti):
        w_l = profile.sup_inf(t, t + 1.0)[1]
        span = (hs[-1] + 3) * math.pi / (2 * w_l)
        for _ in range(8):
            seq = find_zero_sequence(profile, q_i, p_i, t, t + span, tol=tol, refined=False)
            if seq.indices.size and seq.indices[-1] >= hs[-1]:
                break
            span *= 2
        lookup = dict(zip(seq.indices.tolist(), seq.instants))
        table[i] = [lookup.get(int(h), np.nan) for h in hs]
    viol = []
    for j, h in enumerate(hs):
        col = table[:, j]
        for i in range(len(ti) - 1):
            if np.isfinite(col[i]) and np.isfinite(col[i + 1]) and not col[i + 1] > col[i]:
                viol.append((int(h), float(ti[i]), float(ti[i + 1])))
    return MonotonicityReport(ti, hs, table, tuple(viol))
