"""Angle-action form of the oscillator and its Picard iteration.

With ``I = H/omega`` and ``psi = arg(p, omega q)`` the oscillator becomes

    psi' = omega + (omega'/2 omega) sin 2psi,
    (log I)' = -(omega'/omega) cos 2psi,

and ``psi`` solves the fixed-point problem ``psi = phi + int (omega'/2omega)
sin 2psi`` with ``phi = psi* + int omega``.  Iterating from ``phi`` gives
``psi^(h)`` together with actions ``I^(h)`` and a priori error bounds
controlled by the total variation ``g`` of ``log omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._grid import DEFAULT_NODES, NodeGrid, merge_points, uniform_phase_grid
from .errors import DomainError, ParameterError, RefinementRequired
from .frequency import FrequencyProfile, _check_no_jump, cumulative_total_variation
from .oracle import PhaseState, quadrature

__all__ = [
    "AngleActionState",
    "PicardSeries",
    "PiecewisePicard",
    "EnvelopeBounds",
    "LambdaBound",
    "to_angle_action",
    "to_phase",
    "compute_phi",
    "picard_grid",
    "picard_psi",
    "picard_I",
    "picard_piecewise",
    "approx_zeroth",
    "approx_tilde",
    "approx_hat",
    "match_discontinuity",
    "envelope_bounds",
    "lambda_norm_bound",
    "certified_psi_bound",
    "certified_log_I_bound",
]

POINTS_PER_UNIT = 64
INTERP_BUDGET = 0.01        # share of the certified bound left to discretisation
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class AngleActionState:
    t: float
    psi: float
    I: float


def to_angle_action(state: PhaseState, omega) -> AngleActionState:
    """``I = (p^2 + omega^2 q^2)/2omega`` and ``psi = atan2(omega q, p)`` in [0, 2pi)."""
    q, p = np.asarray(state.q, float), np.asarray(state.p, float)
    omega = np.asarray(omega, float)
    if np.any(omega <= 0):
        raise DomainError("omega must be positive")
    if np.any((q == 0) & (p == 0)):
        raise DomainError("the origin of phase space has no angle")
    I = (p ** 2 + omega ** 2 * q ** 2) / (2 * omega)
    psi = np.mod(np.arctan2(omega * q, p), 2 * np.pi)
    return AngleActionState(state.t, _unwrap0(psi), _unwrap0(I))


def to_phase(state: AngleActionState, omega) -> PhaseState:
    """``q = sqrt(2I/omega) sin psi``, ``p = sqrt(2 I omega) cos psi``."""
    I = np.asarray(state.I, float)
    omega = np.asarray(omega, float)
    if np.any(I < 0):
        raise DomainError("the action cannot be negative")
    if np.any(omega <= 0):
        raise DomainError("omega must be positive")
    q = np.sqrt(2 * I / omega) * np.sin(state.psi)
    p = np.sqrt(2 * I * omega) * np.cos(state.psi)
    return PhaseState(state.t, _unwrap0(q), _unwrap0(p))


def _unwrap0(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def match_discontinuity(psi_minus, I_minus, omega_minus, omega_plus):
    """Angle and action just after a jump of omega from ``omega_minus`` to ``omega_plus``.

    ``q`` and ``p`` are continuous, so ``tan psi/omega`` is too.  The new
    angle is taken with atan2, which keeps it in the quadrant of
    ``psi_minus`` and has no trouble at odd multiples of pi/2.
    """
    if not (omega_minus > 0 and omega_plus > 0):
        raise DomainError("both one-sided frequencies must be positive")
    psi_minus = np.asarray(psi_minus, float)
    ratio = omega_plus / omega_minus
    s, c = np.sin(psi_minus), np.cos(psi_minus)
    raw = np.arctan2(ratio * s, c)
    # same branch as psi_minus; the two angles differ by less than pi/2
    psi_plus = psi_minus + np.mod(raw - psi_minus + np.pi, 2 * np.pi) - np.pi
    I_plus = np.asarray(I_minus, float) / ratio * (c * c + ratio * ratio * s * s)
    return _unwrap0(psi_plus), _unwrap0(I_plus)


def compute_phi(profile: FrequencyProfile, psi_star: float, t_star: float, grid,
                tol: float = 1e-13) -> np.ndarray:
    """``phi(t) = psi* + int_{t*}^t omega`` on ``grid`` by adaptive quadrature per cell."""
    grid = np.asarray(grid, dtype=float)
    scalar = grid.ndim == 0
    grid = np.atleast_1d(grid)
    _check_no_jump(profile, min(grid.min(), t_star), max(grid.max(), t_star))
    pts = np.unique(np.concatenate([grid, [t_star]]))
    w, _ = profile.restricted(pts[0], pts[-1])
    f = lambda z: float(w(z))  # noqa: E731
    cells = np.array([quadrature(f, a, b, tol) for a, b in zip(pts[:-1], pts[1:])])
    acc = np.concatenate([[0.0], np.cumsum(cells)])
    acc -= acc[np.searchsorted(pts, t_star)]
    out = psi_star + acc[np.searchsorted(pts, grid)]
    return float(out[0]) if scalar else out


def certified_psi_bound(g, h):
    """``g^(h+1) / (2 (h+1)!)``."""
    return np.asarray(g, float) ** (h + 1) / (2 * math.factorial(h + 1))


def certified_log_I_bound(g, h):
    """``g^(h+1) / (h+1)!``; with ``I^(0) = I*`` it also covers order 0."""
    return np.asarray(g, float) ** (h + 1) / math.factorial(h + 1)


@dataclass(frozen=True)
class PicardSeries:
    """Picard iterates of order 0..h sampled on ``grid``.

    ``log_I_integrals[k]`` holds ``int_{t*}^t (omega'/omega) cos 2psi^(k-1)``
    so that ``I^(k) = I* exp(-log_I_integrals[k])``; row 0 is zero
    (``I^(0) = I*``).
    """

    order: int
    grid: np.ndarray
    t_star: float
    psi_star: float
    psi_values: np.ndarray
    log_I_integrals: np.ndarray
    bound_g: np.ndarray
    discretisation_error: np.ndarray = field(repr=False)
    profile_name: str = "custom"

    @property
    def phi(self):
        return self.psi_values[0]

    def psi(self, order=None):
        return self.psi_values[self.order if order is None else order]

    def I(self, I_star, order=None):  # noqa: E743
        return I_star * np.exp(-self.log_I_integrals[self.order if order is None else order])

    def psi_bound(self, order=None):
        return certified_psi_bound(self.bound_g, self.order if order is None else order)

    def log_I_bound(self, order=None):
        return certified_log_I_bound(self.bound_g, self.order if order is None else order)

    @property
    def certified_bound(self):
        """(psi bound, log I bound) for the top order."""
        return self.psi_bound(), self.log_I_bound()

    def columns(self, I_star=None):
        cols = {"t": self.grid}
        for k in range(self.order + 1):
            cols[f"psi_{k}"] = self.psi_values[k]
        if I_star is not None:
            for k in range(1, self.order + 1):
                cols[f"I_{k}"] = self.I(I_star, k)
        cols["g"] = self.bound_g
        cols["psi_bound"] = self.psi_bound()
        cols["log_I_bound"] = self.log_I_bound()
        return cols

    def to_csv(self, path, I_star=None):
        from .io import write_csv
        return write_csv(path, self.columns(I_star), schema="picard-series/1",
                         meta={"order": self.order, "t_star": self.t_star,
                               "psi_star": self.psi_star, "profile": self.profile_name})

    def to_json(self, path, I_star=None):
        from .io import write_json
        payload = {"order": self.order, "t_star": self.t_star, "psi_star": self.psi_star,
                   "profile": self.profile_name, "columns": self.columns(I_star)}
        return write_json(path, payload, schema="picard-series/1")


def picard_grid(profile: FrequencyProfile, a: float, b: float, t_star: float | None = None,
                points_per_unit: int = POINTS_PER_UNIT, include=()) -> np.ndarray:
    """Uniform grid with ``points_per_unit`` points per radian of phase on [a, b]."""
    w_max = profile.sup_inf(a, b)[0]
    extra = list(include) + ([] if t_star is None else [t_star])
    return uniform_phase_grid(w_max, a, b, points_per_unit, include=extra)


def picard_psi(profile: FrequencyProfile, psi_star: float, t_star: float, grid, h: int,
               n_nodes: int = DEFAULT_NODES, budget: float = INTERP_BUDGET,
               check: bool = True, bounds: bool = True) -> PicardSeries:
    """Iterates ``psi^(0..h)`` (and the integrals defining ``I^(1..h)``) on ``grid``.

    ``t_star`` is merged into the grid if absent.  Integrals are evaluated
    by Lobatto collocation on every grid cell; the discretisation error of
    the last sweep is estimated and must stay below ``budget`` times the
    certified bound (plus a 1e-12 floor), otherwise
    :class:`RefinementRequired` is raised.  With ``bounds=False`` the
    total variation is not computed (``bound_g`` is NaN) and the check is
    skipped.
    """
    if h < 0 or int(h) != h:
        raise ParameterError("the order h must be a nonnegative integer")
    h = int(h)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or not (grid.min() <= t_star <= grid.max()):
        raise DomainError("t_star must lie inside the grid's hull")
    grid = merge_points(grid, [t_star])
    _check_no_jump(profile, grid[0], grid[-1])
    ng = NodeGrid(grid, t_star, n_nodes)
    w_fn, dw_fn = profile.restricted(grid[0], grid[-1])
    w = np.asarray(w_fn(ng.nodes), dtype=float) * np.ones(ng.nodes.shape)
    lg = np.asarray(dw_fn(ng.nodes), dtype=float) / w

    phi = psi_star + ng.cumulative(w)
    err = ng.cumulative_error(w)
    psi_nodes = [phi]
    J_nodes = [np.zeros_like(phi)]
    for _ in range(h):
        prev = psi_nodes[-1]
        f_psi = 0.5 * lg * np.sin(2 * prev)
        f_I = lg * np.cos(2 * prev)
        psi_nodes.append(phi + ng.cumulative(f_psi))
        J_nodes.append(ng.cumulative(f_I))
        err = err + ng.cumulative_error(f_psi) + ng.cumulative_error(f_I)

    if bounds:
        g = cumulative_total_variation(profile, t_star, grid)
    else:
        g = np.full(len(grid), np.nan)
    if check and bounds:
        allowed = budget * certified_psi_bound(g, h) + ABS_FLOOR * np.maximum(1.0, np.abs(ng.at_grid(phi)))
        if np.any(err > allowed):
            worst = float(np.max(err / allowed))
            raise RefinementRequired(
                f"grid too coarse: discretisation error estimate is {worst:.2g}x the budget",
                suggested_points=int(len(grid) * max(2.0, worst ** (1 / 8) * 1.5)))
    return PicardSeries(
        order=h, grid=grid, t_star=float(t_star), psi_star=float(psi_star),
        psi_values=np.array([ng.at_grid(v) for v in psi_nodes]),
        log_I_integrals=np.array([ng.at_grid(v) for v in J_nodes]),
        bound_g=g, discretisation_error=err, profile_name=profile.name)


def picard_I(profile: FrequencyProfile, series: PicardSeries, I_star: float, order=None):
    """``I^(h) = I* exp(-int (omega'/omega) cos 2psi^(h-1))`` on the series grid."""
    if not I_star > 0:
        raise DomainError("I_star must be positive")
    if order is not None and not 0 <= order <= series.order:
        raise ParameterError(f"series holds orders 0..{series.order}")
    return series.I(I_star, order)


@dataclass(frozen=True)
class PiecewisePicard:
    """One series per continuity interval, restarted after each jump.

    Only the first piece carries certified bounds; later pieces start from
    matched approximate data, so their ``bound_g`` is NaN.
    """

    series: tuple
    I_stars: tuple
    jumps: tuple

    def psi(self, order=None):
        return [s.psi(order) for s in self.series]

    def I(self, order=None):  # noqa: E743
        return [s.I(I0, order) for s, I0 in zip(self.series, self.I_stars)]


def picard_piecewise(profile: FrequencyProfile, psi_star, I_star, t_star, t_end, h,
                     points_per_unit=POINTS_PER_UNIT) -> PiecewisePicard:
    """Picard iterates forward from ``t_star`` across declared jumps.

    At every jump the order-h iterate is matched and the iteration
    restarts on the next continuity interval.
    """
    if t_end <= t_star:
        raise DomainError("picard_piecewise runs forward: need t_end > t_star")
    out, I_list, jumps = [], [], []
    psi0, I0 = psi_star, I_star
    for k, (a, b) in enumerate(profile.continuity_intervals(t_star, t_end)):
        if k > 0:
            w_minus = profile.one_sided(a, -1)[0]
            w_plus = profile.one_sided(a, +1)[0]
            psi0, I0 = match_discontinuity(psi0, I0, w_minus, w_plus)
            jumps.append(a)
        grid = picard_grid(profile, a, b, a, points_per_unit)
        s = picard_psi(profile, psi0, a, grid, h)
        if k > 0:
            s = PicardSeries(s.order, s.grid, s.t_star, s.psi_star, s.psi_values,
                             s.log_I_integrals, np.full_like(s.bound_g, np.nan),
                             s.discretisation_error, s.profile_name)
        out.append(s)
        I_list.append(I0)
        psi0 = float(s.psi()[-1])
        I0 = float(s.I(I0)[-1])
    return PiecewisePicard(tuple(out), tuple(I_list), tuple(jumps))


def _series_at(profile, psi_star, t_star, t, h, points_per_unit=POINTS_PER_UNIT):
    """Run Picard on a phase-uniform grid that contains every requested instant."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a, b = min(t.min(), t_star), max(t.max(), t_star)
    if a == b:
        b = a + 1.0
    grid = picard_grid(profile, a, b, t_star, points_per_unit, include=t)
    s = picard_psi(profile, psi_star, t_star, grid, h, bounds=False)
    idx = np.searchsorted(s.grid, t)
    return s, idx


def _omega(profile, t):
    return np.asarray(profile.value(t), dtype=float) * np.ones_like(t)


def approx_zeroth(profile: FrequencyProfile, psi_star, I_star, t_star, t) -> PhaseState:
    """``q0 = sqrt(2I*/omega) sin phi``, ``p0 = sqrt(2I* omega) cos phi``."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    phi = compute_phi(profile, psi_star, t_star, tt)
    w = _omega(profile, tt)
    q = np.sqrt(2 * I_star / w) * np.sin(phi)
    p = np.sqrt(2 * I_star * w) * np.cos(phi)
    if np.ndim(t) == 0:
        return PhaseState(float(t), float(q[0]), float(p[0]))
    return PhaseState(tt, q, p)


def approx_tilde(profile: FrequencyProfile, psi_star, I_star, t_star, t) -> PhaseState:
    """Frozen-frequency guess ``sqrt(2I*/w*) sin[psi* + omega(t)(t - t*)]`` and its derivative."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    w_star = float(profile.value(t_star))
    w = _omega(profile, tt)
    dw = np.asarray(profile.derivative(tt), dtype=float) * np.ones_like(tt)
    arg = psi_star + w * (tt - t_star)
    amp = np.sqrt(2 * I_star / w_star)
    q = amp * np.sin(arg)
    p = amp * np.cos(arg) * (w + dw * (tt - t_star))
    if np.ndim(t) == 0:
        return PhaseState(float(t), float(q[0]), float(p[0]))
    return PhaseState(tt, q, p)


def approx_hat(profile: FrequencyProfile, psi_star, I_star, t_star, t):
    """``q^ = sqrt(2 I^(1)/omega) sin phi``: zeroth-order phase, first-order action."""
    s, idx = _series_at(profile, psi_star, t_star, t, 1)
    tt = s.grid[idx]
    q = np.sqrt(2 * s.I(I_star, 1)[idx] / _omega(profile, tt)) * np.sin(s.phi[idx])
    return float(q[0]) if np.ndim(t) == 0 else q


@dataclass(frozen=True)
class EnvelopeBounds:
    """Bounds on psi and I on a monotone stretch starting at a special point.

    ``I_low``/``I_high`` are only guaranteed where ``low_valid``/``high_valid``
    hold, i.e. up to ``t_bar`` for the bound that depends on a phase
    reaching ``(h+1) pi/2``.
    """

    t: np.ndarray
    h: int
    case: int
    phi: np.ndarray
    phi1: np.ndarray
    psi_low: np.ndarray
    psi_high: np.ndarray
    I_low: np.ndarray
    I_high: np.ndarray
    t_bar: float
    low_valid: np.ndarray
    high_valid: np.ndarray


def _monotone_sign(profile, a, b, n=4097):
    ts = np.linspace(a, b, n)
    w_fn, dw_fn = profile.restricted(a, b)
    d = np.asarray(dw_fn(ts), dtype=float) * np.ones_like(ts)
    scale = max(float(np.max(np.abs(d))), 1e-300)
    pos = np.any(d > 1e-12 * scale)
    neg = np.any(d < -1e-12 * scale)
    if pos and neg:
        raise DomainError(f"omega is not monotone on [{a}, {b}]")
    return -1 if neg else 1


def envelope_bounds(profile: FrequencyProfile, t_h: float, t, h: int, I_h: float = 1.0,
                    points_per_unit: int = POINTS_PER_UNIT) -> EnvelopeBounds:
    """Lower/upper bounds on ``psi`` and ``I`` for ``t`` in ``[t_h, t_{h+1}]``.

    ``t_h`` is a special point where ``psi = h pi/2`` and ``I(t_h) = I_h``;
    omega must be monotone on ``[t_h, max t]``.
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < t_h):
        raise DomainError("bounds are stated for t >= t_h")
    t_end = float(tt.max()) if tt.max() > t_h else t_h + 1e-6 * max(1.0, abs(t_h))
    sgn = _monotone_sign(profile, t_h, t_end)
    parity = (-1) ** h
    case = 1 if sgn * parity > 0 else 2

    grid = picard_grid(profile, t_h, t_end, t_h, points_per_unit, include=tt)
    ng = NodeGrid(grid, t_h)
    w_fn, dw_fn = profile.restricted(t_h, t_end)
    w = np.asarray(w_fn(ng.nodes), dtype=float) * np.ones(ng.nodes.shape)
    lg = np.asarray(dw_fn(ng.nodes), dtype=float) / w
    w_h = float(w_fn(t_h))
    level = (h + 1) * np.pi / 2
    phi = h * np.pi / 2 + ng.cumulative(w)
    phi1 = phi + parity * 0.5 * np.log(w / w_h)
    J_low = ng.cumulative(lg * np.cos(2 * phi))
    J_high = ng.cumulative(lg * np.cos(2 * phi1))

    idx = np.searchsorted(grid, tt)
    phi_g, phi1_g = ng.at_grid(phi)[idx], ng.at_grid(phi1)[idx]
    # the phase whose crossing of (h+1)pi/2 ends the validity of one I bound
    gate = ng.at_grid(phi1 if case == 1 else phi)
    t_bar = _first_crossing(grid, gate, level, profile, t_h, h, case, parity, w_h)
    valid_all = np.ones(len(tt), dtype=bool)
    gated = tt <= t_bar
    return EnvelopeBounds(
        t=tt, h=h, case=case, phi=phi_g, phi1=phi1_g,
        psi_low=np.minimum(phi_g, phi1_g), psi_high=np.maximum(phi_g, phi1_g),
        I_low=I_h * np.exp(-ng.at_grid(J_low)[idx]),
        I_high=I_h * np.exp(-ng.at_grid(J_high)[idx]),
        t_bar=t_bar,
        low_valid=gated if case == 2 else valid_all,
        high_valid=gated if case == 1 else valid_all)


def _first_crossing(grid, values, level, profile, t_h, h, case, parity, w_h):
    above = np.flatnonzero(values >= level)
    if len(above) == 0:
        return math.inf
    j = int(above[0])
    if j == 0:
        return float(grid[0])

    def f(x):
        ph = compute_phi(profile, h * np.pi / 2, t_h, x)
        if case == 1:
            ph = ph + parity * 0.5 * math.log(float(profile.value(x)) / w_h)
        return ph - level

    return float(optimize.brentq(f, grid[j - 1], grid[j], xtol=1e-14, rtol=1e-15))


@dataclass(frozen=True)
class LambdaBound:
    value: float
    lam: float
    mu: float
    best_value: float
    best_lambda: float


def lambda_norm_bound(profile: FrequencyProfile, K, h: int, lam: float, psi_star: float = 0.0,
                      t_star: float | None = None, t: float | None = None,
                      lambdas=None, n_sup: int = 8193) -> LambdaBound:
    """Contraction bound on ``|psi(t) - psi^(h)(t)|`` in the weighted sup norm.

    ``mu = sup_K |omega'/omega|`` (dense sampling), ``nu = mu / 2 lam`` and the
    bound is ``e^{lam |t - t*|} nu^h / (1 - nu) ||phi - psi^(1)||_lam``.
    ``best_value`` is the infimum over ``lambdas`` (default: a log grid
    above ``mu/2``).
    """
    a, b = float(K[0]), float(K[1])
    t_star = a if t_star is None else float(t_star)
    t = b if t is None else float(t)
    ts = np.linspace(a, b, n_sup)
    w_fn, dw_fn = profile.restricted(a, b)
    mu = float(np.max(np.abs(np.asarray(dw_fn(ts), float) / np.asarray(w_fn(ts), float))))
    if not lam > mu / 2:
        raise ParameterError(f"lambda={lam} must exceed mu/2={mu / 2}")
    s = picard_psi(profile, psi_star, t_star, picard_grid(profile, a, b, t_star), 1,
                   bounds=False)
    diff = np.abs(s.psi(1) - s.phi)
    dist = np.abs(s.grid - t_star)

    def bound(lmb):
        nu = mu / (2 * lmb)
        norm = float(np.max(np.exp(-lmb * dist) * diff))
        return math.exp(lmb * abs(t - t_star)) * nu ** h / (1 - nu) * norm

    if lambdas is None:
        lo = max(mu / 2 * (1 + 1e-3), 1e-12)
        hi = mu / 2 + 50.0 / max(abs(t - t_star), 1e-12)
        lambdas = np.geomspace(lo, max(hi, 2 * lo), 400)
    vals = np.array([bound(x) for x in lambdas])
    k = int(np.argmin(vals))
    return LambdaBound(bound(lam), float(lam), mu, float(vals[k]), float(lambdas[k]))
