"""Embedded Dormand-Prince 5(4) driver with normwise error control.

Local error per step is controlled against ``abs_tol + rel_tol * |y|`` with
``|y|`` the Euclidean norm of the state, so tracking stays purely relative
while the solution decays through hundreds of decades (the regime every decay
measurement lives in).  Steps are clipped to land exactly on the requested
sample grid; sampled values therefore carry full integration accuracy and no
interpolant is involved.

For linear right-hand sides the driver can renormalize the state by exact
powers of two whenever it leaves a magnitude window, accumulating the scaling
in log space.  IEEE754 multiplication by a power of two is exact, so the
renormalized run is bit-faithful to the plain one while never underflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["IntegrationError", "StepStats", "solve_to_grid"]

# Dormand & Prince coefficients (the classic RK45 pair, FSAL form).
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
# Difference between the 5th- and embedded 4th-order weights.
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

_MAX_GROWTH = 5.0
_MIN_SHRINK = 0.2
_SAFETY = 0.9
# Renormalization window for linear runs (powers of two keep scaling exact).
_RENORM_LO = 1e-140
_RENORM_HI = 1e140


class IntegrationError(RuntimeError):
    """Integration could not continue (step underflow, budget, or nonfinite state)."""


@dataclass(frozen=True)
class StepStats:
    accepted: int
    rejected: int


def _rescale_factor(peak: float) -> float:
    # Exact power of two bringing peak into [1, 2).
    _, exponent = math.frexp(peak)
    return math.ldexp(1.0, 1 - exponent)


def solve_to_grid(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0,
    times,
    *,
    rel_tol: float,
    abs_tol: float,
    max_step: float = math.inf,
    step_cap_fn: Callable[[float, np.ndarray], float] | None = None,
    max_steps: int = 10_000_000,
    renormalize: bool = False,
) -> tuple[np.ndarray, np.ndarray, StepStats]:
    """Integrate ``y' = f(t, y)`` from ``times[0]`` hitting every grid time exactly.

    Returns ``(Y, log_scale, stats)`` where ``Y[i]`` is the (possibly
    renormalized) state at ``times[i]`` and ``log_scale[i]`` the accumulated
    natural log of the scaling applied up to that sample (all zeros unless
    ``renormalize``); the true state is ``Y[i] * exp(-log_scale[i])``.

    ``step_cap_fn(t, y)`` may impose a state-dependent step ceiling (used to
    resolve the fastest oscillation of hyperbolic runs).  ``renormalize``
    requires ``f`` linear in ``y``; the caller is responsible for that.
    """
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("times must contain at least two points")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("times must be strictly increasing")

    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    t = float(grid[0])

    n = grid.size
    out = np.empty((n, y.size))
    out[0] = y
    log_scale = 0.0
    log_out = np.zeros(n)

    k1 = np.asarray(f(t, y), dtype=float)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError(f"right-hand side not finite at t={t:.6g}")

    # First trial step: crude but safe; the controller takes over immediately.
    y_norm = float(np.linalg.norm(y))
    f_norm = float(np.linalg.norm(k1))
    if y_norm > 0.0 and f_norm > 0.0:
        h = 0.01 * y_norm / f_norm
    else:
        h = 1e-6 * (grid[-1] - grid[0])
    h = min(h, max_step, float(grid[1] - grid[0]))

    accepted = 0
    rejected = 0
    j = 1
    just_rejected = False

    while j < n:
        if accepted + rejected >= max_steps:
            raise IntegrationError(
                f"step budget {max_steps} exceeded at t={t:.6g} (h={h:.3g})"
            )

        cap = max_step
        if step_cap_fn is not None:
            cap = min(cap, step_cap_fn(t, y))
        target = float(grid[j])
        remaining = target - t
        h_try = min(h, cap, remaining)
        hits_sample = h_try >= remaining * (1.0 - 1e-12)
        if hits_sample:
            h_try = remaining
        if h_try < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(
                f"step size underflow at t={t:.6g} (h={h_try:.3g}): "
                "problem too stiff for the explicit step budget"
            )

        k2 = f(t + _C2 * h_try, y + h_try * (_A21 * k1))
        k3 = f(t + _C3 * h_try, y + h_try * (_A31 * k1 + _A32 * k2))
        k4 = f(t + _C4 * h_try, y + h_try * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = f(
            t + _C5 * h_try,
            y + h_try * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4),
        )
        k6 = f(
            t + h_try,
            y + h_try * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5),
        )
        y_new = y + h_try * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = f(t + h_try, y_new)

        err_vec = h_try * (
            _E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7
        )
        err_norm = float(np.linalg.norm(err_vec))
        scale = abs_tol + rel_tol * max(
            float(np.linalg.norm(y)), float(np.linalg.norm(y_new))
        )
        ratio = err_norm / scale if scale > 0.0 else math.inf
        if not math.isfinite(ratio):
            ratio = math.inf

        if ratio <= 1.0 and np.all(np.isfinite(y_new)):
            accepted += 1
            t = target if hits_sample else t + h_try
            y = y_new
            k1 = k7
            if hits_sample:
                out[j] = y
                log_out[j] = log_scale
                j += 1
            if renormalize:
                peak = float(np.max(np.abs(y)))
                if peak > 0.0 and not _RENORM_LO < peak < _RENORM_HI:
                    s = _rescale_factor(peak)
                    y = y * s
                    k1 = k1 * s  # valid because f is linear in y
                    log_scale += math.log(s)
            factor = _MAX_GROWTH if ratio == 0.0 else _SAFETY * ratio ** (-0.2)
            if just_rejected:
                factor = min(factor, 1.0)
            just_rejected = False
            h = h_try * min(_MAX_GROWTH, max(_MIN_SHRINK, factor))
        else:
            rejected += 1
            just_rejected = True
            if ratio == math.inf:
                factor = _MIN_SHRINK
            else:
                factor = max(_MIN_SHRINK, min(1.0, _SAFETY * ratio ** (-0.2)))
            h = h_try * factor

    return out, log_out, StepStats(accepted, rejected)
