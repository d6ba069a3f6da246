"""Frequency laws omega(t) for the oscillator q'' = -omega(t)^2 q.

A :class:`FrequencyProfile` bundles a vectorised value function, its
derivative, the declared jump instants and, for Hill-type problems, the
period.  The module also provides the relative-variation function
``zeta = omega'/omega^2``, the total variation ``g`` of ``log omega`` and a
set of built-in families (constant, Mathieu, smooth ramps, step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, ParameterError, QuadratureError

__all__ = [
    "FrequencyProfile",
    "SlowTimeFamily",
    "eval_zeta",
    "total_variation_g",
    "cumulative_total_variation",
    "builtin_profiles",
    "profile_from_config",
    "derivative_fd_error",
    "PROFILE_KINDS",
]

_G_TOL = 1e-10


@dataclass(frozen=True)
class FrequencyProfile:
    """Immutable frequency law.

    Parameters
    ----------
    value, derivative
        Vectorised callables ``t -> omega(t)`` and ``t -> d omega/dt``.
    discontinuities
        Sorted instants where ``omega`` jumps.  They are declared, never
        detected.  At a jump ``value`` may return either one-sided limit;
        use :meth:`one_sided` when the side matters.
    period
        Period ``T`` for periodic (Hill-type) profiles, else ``None``.
    smoothness
        Integer ``k`` meaning omega is ``C^(k+1)``, ``math.inf`` for
        ``C^infinity`` or the string ``"piecewise-C1"``.
    """

    value: Callable
    derivative: Callable
    discontinuities: tuple = ()
    period: float | None = None
    smoothness: object = math.inf
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        d = tuple(sorted(float(x) for x in self.discontinuities))
        object.__setattr__(self, "discontinuities", d)

    def __call__(self, t):
        return self.value(t)

    def log_derivative(self, t):
        """omega'/omega."""
        return self.derivative(t) / self.value(t)

    def zeta(self, t):
        return self.derivative(t) / self.value(t) ** 2

    def is_discontinuity(self, t, atol=0.0):
        return any(abs(t - td) <= atol for td in self.discontinuities)

    def one_sided(self, t, side):
        """Evaluate ``(omega, omega')`` at ``t`` from the left (side<0) or right."""
        tt = _inside(self, t, side) if self.is_discontinuity(t) else t
        return float(self.value(tt)), float(self.derivative(tt))

    def continuity_intervals(self, a, b):
        """Split ``[a, b]`` (either orientation) at the interior jumps."""
        lo, hi = min(a, b), max(a, b)
        cuts = [td for td in self.discontinuities if lo < td < hi]
        pts = [lo, *cuts, hi]
        pieces = list(zip(pts[:-1], pts[1:]))
        if b < a:
            pieces = [(y, x) for x, y in reversed(pieces)]
        return pieces

    def restricted(self, a, b):
        """Callables evaluating omega, omega' on the closed piece ``[a, b]``.

        Endpoints that coincide with a jump are evaluated as the limit from
        inside the piece, which is what a stepper integrating one
        continuity interval needs.
        """
        lo, hi = min(a, b), max(a, b)
        if not (self.is_discontinuity(lo) or self.is_discontinuity(hi)):
            return self.value, self.derivative
        lo_in = _inside(self, lo, +1) if self.is_discontinuity(lo) else lo
        hi_in = _inside(self, hi, -1) if self.is_discontinuity(hi) else hi

        def clip(t):
            return np.clip(t, lo_in, hi_in)

        return (lambda t: self.value(clip(t))), (lambda t: self.derivative(clip(t)))

    def sup_inf(self, a, b, n=2049):
        """Numerical (sup, inf) of omega on ``[a, b]``.

        Dense sampling followed by a bounded scalar refinement around the
        best samples.
        """
        from scipy.optimize import minimize_scalar

        lo, hi = min(a, b), max(a, b)
        ts = np.linspace(lo, hi, n)
        w = np.asarray(self.value(ts), dtype=float)
        dt = (hi - lo) / (n - 1) if n > 1 else 0.0
        out = []
        for sign, idx in ((-1.0, int(np.argmax(w))), (1.0, int(np.argmin(w)))):
            best = w[idx]
            if dt > 0:
                left, right = max(lo, ts[idx] - dt), min(hi, ts[idx] + dt)
                res = minimize_scalar(lambda x: sign * float(self.value(x)),
                                      bounds=(left, right), method="bounded",
                                      options={"xatol": 1e-13})
                cand = float(self.value(res.x))
                best = max(best, cand) if sign < 0 else min(best, cand)
            out.append(float(best))
        return out[0], out[1]

    def with_params(self, **changes):
        return replace(self, **changes)


def _inside(profile, td, side):
    direction = math.inf if side > 0 else -math.inf
    t = math.nextafter(td, direction)
    for _ in range(8):
        nxt = math.nextafter(t, direction)
        if float(profile.value(t)) == float(profile.value(nxt)):
            return t
        t = nxt
    return t


@dataclass(frozen=True)
class SlowTimeFamily:
    """omega(t; eps) = base(eps * t) for a base profile written in slow time."""

    base: FrequencyProfile
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    def profile(self) -> FrequencyProfile:
        eps = self.epsilon
        base = self.base
        return FrequencyProfile(
            value=lambda t: base.value(eps * np.asarray(t)),
            derivative=lambda t: eps * base.derivative(eps * np.asarray(t)),
            discontinuities=tuple(td / eps for td in base.discontinuities),
            period=None if base.period is None else base.period / eps,
            smoothness=base.smoothness,
            name=f"{base.name}@eps={eps:g}",
            params={**dict(base.params), "epsilon": eps},
        )

    def with_epsilon(self, epsilon) -> "SlowTimeFamily":
        return SlowTimeFamily(self.base, epsilon)

    def zeta_tilde(self, tau):
        """(d omega~/d tau) / omega~^2 in slow time."""
        return self.base.zeta(tau)


def eval_zeta(profile: FrequencyProfile, t: float) -> float:
    """Relative variation omega'/omega^2 at a point of continuity."""
    if profile.is_discontinuity(t):
        raise DomainError(f"zeta is undefined at the jump t={t}")
    return float(profile.zeta(t))


def _check_no_jump(profile, a, b):
    lo, hi = min(a, b), max(a, b)
    inner = [td for td in profile.discontinuities if lo < td < hi]
    if inner:
        raise DomainError(
            f"interval [{lo}, {hi}] crosses the jump(s) {inner}; split it there")


def _abs_logder_integral(profile, a, b, tol):
    if a == b:
        return 0.0
    w, dw = profile.restricted(a, b)
    # the kinks of |omega'/omega| (sign changes of omega') are passed as
    # breakpoints so the adaptive rule does not stall on them
    ts = np.linspace(a, b, 257)
    d = np.asarray(dw(ts), dtype=float) * np.ones_like(ts)
    flips = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    kinks = [optimize.brentq(lambda z: float(dw(z)), ts[i], ts[i + 1], xtol=1e-14)
             for i in flips]
    val, err = integrate.quad(lambda z: abs(float(dw(z)) / float(w(z))), a, b,
                              epsabs=tol, epsrel=tol, limit=400, points=kinks or None)
    if err > 10 * max(tol, tol * abs(val)):
        raise QuadratureError("total variation quadrature did not converge", err)
    return val


def total_variation_g(profile: FrequencyProfile, t_star: float, t: float,
                      tol: float = _G_TOL) -> float:
    """Total variation of log omega between ``t_star`` and ``t``.

    Always integrates ``|omega'/omega|`` adaptively; no monotonicity
    detection is attempted.
    """
    _check_no_jump(profile, t_star, t)
    lo, hi = min(t_star, t), max(t_star, t)
    return _abs_logder_integral(profile, lo, hi, tol)


def cumulative_total_variation(profile: FrequencyProfile, t_star: float,
                               grid: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    """``g`` sampled on a sorted grid, accumulated cell by cell from ``t_star``."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    _check_no_jump(profile, min(grid[0], t_star), max(grid[-1], t_star))
    out = np.empty_like(grid)
    # cells to the right of t_star
    right = grid >= t_star
    prev_t, acc = t_star, 0.0
    for i in np.flatnonzero(right):
        acc += _abs_logder_integral(profile, prev_t, grid[i], tol)
        out[i] = acc
        prev_t = grid[i]
    prev_t, acc = t_star, 0.0
    for i in np.flatnonzero(~right)[::-1]:
        acc += _abs_logder_integral(profile, grid[i], prev_t, tol)
        out[i] = acc
        prev_t = grid[i]
    return out


# ---------------------------------------------------------------------------
# built-in families

def _constant(omega=1.0):
    omega = float(omega)
    if omega <= 0:
        raise ParameterError("omega must be positive")
    return FrequencyProfile(
        value=lambda t: np.full_like(np.asarray(t, dtype=float), omega)
        if np.ndim(t) else omega,
        derivative=lambda t: np.zeros_like(np.asarray(t, dtype=float))
        if np.ndim(t) else 0.0,
        smoothness=math.inf, name="constant", params={"omega": omega})


def _mathieu(omega_bar=1.0, eta=0.2, alpha=2.0):
    wb, eta, alpha = float(omega_bar), float(eta), float(alpha)
    if abs(eta) >= 1:
        raise ParameterError("|eta| must be < 1 so that omega^2 > 0")
    if wb <= 0:
        raise ParameterError("omega_bar must be positive")

    def value(t):
        return wb * np.sqrt(1.0 + eta * np.sin(alpha * t))

    def derivative(t):
        return wb * eta * alpha * np.cos(alpha * t) / (2.0 * np.sqrt(1.0 + eta * np.sin(alpha * t)))

    return FrequencyProfile(value, derivative,
                            period=2 * math.pi / alpha if alpha != 0 else None,
                            smoothness=math.inf, name="mathieu",
                            params={"omega_bar": wb, "eta": eta, "alpha": alpha})


def _check_ramp(a, b):
    if a - abs(b) <= 0:
        raise ParameterError("ramp must stay positive: need a > |b|")


def _tanh_ramp(a=1.5, b=0.5, center=0.0, width=1.0):
    a, b, c, w = map(float, (a, b, center, width))
    _check_ramp(a, b)

    def value(t):
        return a + b * np.tanh((t - c) / w)

    def derivative(t):
        # sech^2 x = 4 e^{-2|x|} / (1 + e^{-2|x|})^2, safe for large |x|
        e = np.exp(-2.0 * np.abs((t - c) / w))
        return b / w * 4.0 * e / (1.0 + e) ** 2

    return FrequencyProfile(value, derivative, smoothness=math.inf, name="tanh_ramp",
                            params={"a": a, "b": b, "center": c, "width": w})


def _smooth_transition(x):
    """C^infinity step 0 -> 1 on [0, 1] with compactly supported derivative."""
    x = np.asarray(x, dtype=float)
    inner = (x > 0) & (x < 1)
    xs = np.where(inner, x, 0.5)
    with np.errstate(over="ignore", divide="ignore"):
        u = 1.0 / xs - 1.0 / (1.0 - xs)
        s = special.expit(-u)
        ds = s * (1.0 - s) * (1.0 / xs**2 + 1.0 / (1.0 - xs) ** 2)
    s = np.where(inner, s, np.where(x >= 1, 1.0, 0.0))
    ds = np.where(inner, ds, 0.0)
    return s, ds


def _bump_ramp(a=1.5, b=0.5, center=0.0, width=1.0):
    """a + b*(2S - 1): goes from a-b to a+b over [center-width, center+width]."""
    a, b, c, w = map(float, (a, b, center, width))
    _check_ramp(a, b)

    def value(t):
        s, _ = _smooth_transition((np.asarray(t) - c) / (2 * w) + 0.5)
        out = a + b * (2 * s - 1)
        return out if np.ndim(t) else float(out)

    def derivative(t):
        _, ds = _smooth_transition((np.asarray(t) - c) / (2 * w) + 0.5)
        out = b * ds / w
        return out if np.ndim(t) else float(out)

    return FrequencyProfile(value, derivative, smoothness=math.inf, name="bump_ramp",
                            params={"a": a, "b": b, "center": c, "width": w})


def _smoothstep_coeffs(n):
    # S_n(x) = x^(n+1) sum_i C(n+i, i) C(2n+1, n-i) (-x)^i ; S_n' = c x^n (1-x)^n
    return [math.comb(n + i, i) * math.comb(2 * n + 1, n - i) * (-1) ** i for i in range(n + 1)]


def _spline_ramp(a=1.5, b=0.5, k=2, center=0.0, width=1.0):
    """Polynomial smoothstep ramp of class exactly C^(k+1)."""
    a, b, c, w = float(a), float(b), float(center), float(width)
    k = int(k)
    if k < 0:
        raise ParameterError("k must be >= 0")
    _check_ramp(a, b)
    n = k + 1
    coeffs = _smoothstep_coeffs(n)
    dcoef = math.factorial(2 * n + 1) / math.factorial(n) ** 2

    def _x(t):
        return np.clip((np.asarray(t, dtype=float) - c) / (2 * w) + 0.5, 0.0, 1.0)

    def value(t):
        x = _x(t)
        s = x ** (n + 1) * sum(ci * x**i for i, ci in enumerate(coeffs))
        out = a + b * (2 * s - 1)
        return out if np.ndim(t) else float(out)

    def derivative(t):
        x = _x(t)
        out = b * dcoef * x**n * (1 - x) ** n / w
        return out if np.ndim(t) else float(out)

    return FrequencyProfile(value, derivative, smoothness=k, name="spline_ramp",
                            params={"a": a, "b": b, "k": k, "center": c, "width": w})


def _step(omega_minus=1.0, omega_plus=2.0, t_d=0.0):
    wm, wp, td = float(omega_minus), float(omega_plus), float(t_d)
    if wm <= 0 or wp <= 0:
        raise ParameterError("both sides of the step must be positive")

    def value(t):
        out = np.where(np.asarray(t) < td, wm, wp)
        return out if np.ndim(t) else float(out)

    def derivative(t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        return out if np.ndim(t) else 0.0

    return FrequencyProfile(value, derivative, discontinuities=(td,),
                            smoothness="piecewise-C1", name="step",
                            params={"omega_minus": wm, "omega_plus": wp, "t_d": td})


def _exponential(omega0=1.0, rate=1.0):
    w0, r = float(omega0), float(rate)
    if w0 <= 0:
        raise ParameterError("omega0 must be positive")
    return FrequencyProfile(lambda t: w0 * np.exp(r * np.asarray(t)),
                            lambda t: w0 * r * np.exp(r * np.asarray(t)),
                            smoothness=math.inf, name="exponential",
                            params={"omega0": w0, "rate": r})


PROFILE_KINDS = {
    "constant": _constant,
    "mathieu": _mathieu,
    "tanh_ramp": _tanh_ramp,
    "bump_ramp": _bump_ramp,
    "spline_ramp": _spline_ramp,
    "step": _step,
    "exponential": _exponential,
}


def builtin_profiles(name: str, **params) -> FrequencyProfile:
    """Build one of the built-in families by name.

    ``constant(omega)``, ``mathieu(omega_bar, eta, alpha)``,
    ``tanh_ramp(a, b, center, width)``, ``bump_ramp(a, b, center, width)``,
    ``spline_ramp(a, b, k, center, width)``,
    ``step(omega_minus, omega_plus, t_d)``, ``exponential(omega0, rate)``.
    """
    try:
        factory = PROFILE_KINDS[name]
    except KeyError:
        raise ParameterError(f"unknown profile kind {name!r}; "
                             f"choose from {sorted(PROFILE_KINDS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {name!r}: {exc}") from None


def profile_from_config(cfg: Mapping[str, str]) -> FrequencyProfile:
    """Build a profile from string key/value pairs.

    ``profile`` names the kind; every other key listed in that kind's
    signature is parsed as a float (``k`` as an int).  ``discontinuities``
    is accepted for the step kind as a single instant (alias of ``t_d``).
    """
    import inspect

    kind = cfg.get("profile", "constant").strip()
    if kind not in PROFILE_KINDS:
        raise ParameterError(f"unknown profile kind {kind!r}")
    sig = inspect.signature(PROFILE_KINDS[kind])
    params = {}
    for pname in sig.parameters:
        if pname in cfg:
            raw = str(cfg[pname]).strip()
            params[pname] = int(raw) if pname == "k" else float(raw)
    if kind == "step" and "discontinuities" in cfg and "t_d" not in params:
        vals = [float(x) for x in str(cfg["discontinuities"]).split(",") if x.strip()]
        if len(vals) != 1:
            raise ParameterError("the step profile takes exactly one discontinuity")
        params["t_d"] = vals[0]
    return builtin_profiles(kind, **params)


def derivative_fd_error(profile: FrequencyProfile, ts) -> float:
    """Max relative mismatch between ``derivative`` and a central difference.

    Step ``h = 1e-6 * max(1, |t|)``; the relative error is taken against
    ``max(|omega'|, |omega|)`` so that points where omega' vanishes do not
    blow the ratio up.
    """
    worst = 0.0
    for t in np.atleast_1d(ts):
        h = 1e-6 * max(1.0, abs(t))
        if any(abs(t - td) <= 2 * h for td in profile.discontinuities):
            continue
        fd = (float(profile.value(t + h)) - float(profile.value(t - h))) / (2 * h)
        ref = float(profile.derivative(t))
        scale = max(abs(ref), abs(float(profile.value(t))))
        worst = max(worst, abs(fd - ref) / scale)
    return worst
