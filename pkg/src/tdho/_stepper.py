"""Dormand-Prince 5(4) embedded pair with PI step control and dense output.

The state may be any ndarray shape; all members of a batch share the step
size, which is chosen from the worst scaled error over the whole array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between 5th-order and embedded 4th-order weights
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)

# continuous extension: y(t + th*h) = y + h * sum_k K_k * (P[k] @ [th, th^2, th^3, th^4])
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
BETA = 0.04            # PI memory exponent
ALPHA = 0.2 - 0.75 * BETA
MIN_FACTOR, MAX_FACTOR = 0.2, 10.0


@dataclass
class DenseSolution:
    """Piecewise-quartic interpolant over accepted steps."""

    ts: np.ndarray          # step boundaries, monotone in the direction of integration
    ys: np.ndarray          # states at the boundaries, shape (n+1, *state)
    coeffs: np.ndarray      # shape (n, 4, *state)
    n_rejected: int = 0

    @property
    def direction(self):
        return 1.0 if self.ts[-1] >= self.ts[0] else -1.0

    @property
    def n_steps(self):
        return len(self.ts) - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        d = self.direction
        keys = d * self.ts
        lo, hi = keys[0], keys[-1]
        span = hi - lo
        tk = d * tt
        if np.any(tk < lo - 1e-12 * max(1.0, abs(span))) or np.any(tk > hi + 1e-12 * max(1.0, abs(span))):
            raise ValueError("evaluation outside the integrated interval")
        idx = np.clip(np.searchsorted(keys, tk, side="right") - 1, 0, self.n_steps - 1)
        h = self.ts[idx + 1] - self.ts[idx]
        th = np.divide(tt - self.ts[idx], h, out=np.zeros_like(tt), where=h != 0)
        shape = (len(tt),) + (1,) * (self.ys.ndim - 1)
        th = th.reshape(shape)
        c = self.coeffs[idx]
        out = self.ys[idx] + th * (c[:, 0] + th * (c[:, 1] + th * (c[:, 2] + th * c[:, 3])))
        return out[0] if scalar else out


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, order=5):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = fun(t0 + h0 * direction, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / (order + 1))
    return min(100 * h0, h1)


def dopri5(fun, t0, y0, t1, rtol=1e-10, atol=1e-10, max_steps=2_000_000,
           first_step=None, stop=None) -> DenseSolution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``stop(t, y)``, if given, is called after every accepted step; a true
    result ends the integration there.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    if t1 == t:
        return DenseSolution(np.array([t, t]), np.stack([y, y]),
                             np.zeros((1, 4) + y.shape))
    direction = 1.0 if t1 > t else -1.0
    f = np.asarray(fun(t, y), dtype=float)
    h = abs(first_step) if first_step else _initial_step(fun, t, y, f, direction, rtol, atol)
    ts, ys, cs = [t], [y], []
    err_old = 1e-4
    rejected_last = False
    n_rej = 0
    for _ in range(max_steps):
        remaining = abs(t1 - t)
        if remaining <= 0:
            break
        h = min(h, remaining)
        min_step = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < min_step:
            raise IntegrationError(
                f"step size underflow at t={t:.17g} (h={h:.3e}); "
                "the right-hand side may be singular here")
        hs = h * direction
        k1 = f
        k2 = fun(t + C2 * hs, y + hs * (A21 * k1))
        k3 = fun(t + C3 * hs, y + hs * (A31 * k1 + A32 * k2))
        k4 = fun(t + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = fun(t + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = fun(t + hs, y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        y_new = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        t_new = t1 if h == remaining else t + hs
        k7 = fun(t_new, y_new)
        err_vec = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if not math.isfinite(err):
            if not np.all(np.isfinite(y_new)):
                h *= MIN_FACTOR
                rejected_last = True
                n_rej += 1
                continue
        if err <= 1.0:
            K = np.stack([k1, k2, k3, k4, k5, k6, k7])        # (7, *state)
            coeff = hs * np.tensordot(P.T, K, axes=(1, 0))    # (4, *state)
            ts.append(t_new)
            ys.append(y_new)
            cs.append(coeff)
            t, y, f = t_new, y_new, k7
            if err == 0:
                fac = MAX_FACTOR
            else:
                fac = SAFETY * err ** (-ALPHA) * err_old ** BETA
                fac = min(MAX_FACTOR, max(MIN_FACTOR, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            h *= fac
            err_old = max(err, 1e-4)
            rejected_last = False
            if stop is not None and stop(t, y):
                break
        else:
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
            rejected_last = True
            n_rej += 1
    else:
        raise IntegrationError(f"maximum number of steps ({max_steps}) exceeded at t={t}")
    return DenseSolution(np.array(ts), np.stack(ys), np.stack(cs), n_rej)
