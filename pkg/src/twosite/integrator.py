"""Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output.

Local error control: a step is accepted when every component of the
embedded error estimate satisfies ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 5.0
MAX_NEG_REJECTS = 20


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    """Step size fell below the floating-point resolution of t (stiffness or blow-up)."""


class NegativityError(IntegrationError):
    """A component that must stay nonnegative went below -atol."""


def hermite(t, t0, t1, y0, y1, f0, f1):
    h = t1 - t0
    th = (t - t0) / h
    return (1 - th) * y0 + th * y1 + th * (th - 1) * ((1 - 2 * th) * (y1 - y0) + (th - 1) * h * f0 + th * h * f1)


@dataclass
class OdeSolution:
    t: np.ndarray                 # output times
    y: np.ndarray                 # shape (len(t), dim)
    t_last: float
    y_last: np.ndarray
    stopped: bool = False
    n_steps: int = 0
    n_rejected: int = 0
    nfev: int = 0
    steps: List[tuple] = field(default_factory=list)   # (t0, t1, y0, y1, f0, f1) when dense

    def __call__(self, t: float) -> np.ndarray:
        """Dense output (requires ``dense=True``)."""
        if not self.steps:
            raise ValueError("solution was computed without dense output")
        starts = self._starts()
        k = int(np.searchsorted(starts, t, side="right")) - 1
        k = min(max(k, 0), len(self.steps) - 1)
        t0, t1, y0, y1, f0, f1 = self.steps[k]
        if not (t0 - 1e-14 <= t <= t1 + 1e-14 * max(1.0, abs(t1))):
            raise ValueError(f"t={t} outside integrated range")
        return hermite(t, t0, t1, y0, y1, f0, f1)

    def _starts(self):
        if getattr(self, "_cached_starts", None) is None or len(self._cached_starts) != len(self.steps):
            self._cached_starts = np.array([s[0] for s in self.steps])
        return self._cached_starts


def _initial_step(fun, t0, y0, f0, rtol, atol, direction_span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, direction_span)


def dopri54(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    t_eval: Optional[Sequence[float]] = None,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    nonneg: bool = False,
    stop: Optional[Callable[[float, np.ndarray], bool]] = None,
    dense: bool = False,
    max_step: float = math.inf,
    h0: Optional[float] = None,
    max_steps: int = 10_000_000,
    land_on_eval: bool = False,
    invariant: Optional[np.ndarray] = None,
) -> OdeSolution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    ``t_eval`` points (sorted, inside the span) are filled by cubic Hermite
    interpolation of the accepted steps.  With ``nonneg`` negative components
    above ``-atol`` are clipped to zero after each step; a step going lower is
    retried with half the step size, and :class:`NegativityError` is raised
    when that keeps failing.  ``stop(t, y)`` is checked after each
    accepted step and ends the integration early when it returns true.
    ``land_on_eval`` shortens steps so every ``t_eval`` point is a step
    endpoint, which keeps output at full fifth-order accuracy.

    ``invariant`` is a weight vector ``w`` of a linear first integral
    ``w . y``.  Runge-Kutta steps preserve it exactly, but clipping does
    not; when given, a clipped step is rescaled so ``w . y`` keeps the
    value the unclipped step had.  Weights must be nonnegative.
    """
    y = np.array(y0, dtype=float)
    if invariant is not None:
        invariant = np.asarray(invariant, dtype=float)
        if invariant.shape != y.shape or np.any(invariant < 0):
            raise ValueError("invariant must be a nonnegative weight vector shaped like y0")
    t = float(t0)
    t_end = float(t_end)
    if t_end < t:
        raise ValueError("only forward integration is supported")
    evals = np.asarray(t_eval if t_eval is not None else [], dtype=float)
    if evals.size and (np.any(np.diff(evals) < 0) or evals[0] < t - 1e-15 or evals[-1] > t_end + 1e-12):
        raise ValueError("t_eval must be sorted and inside [t0, t_end]")
    out_t: List[float] = []
    out_y: List[np.ndarray] = []
    k_eval = 0
    while k_eval < evals.size and evals[k_eval] <= t:
        out_t.append(evals[k_eval])
        out_y.append(y.copy())
        k_eval += 1

    f = fun(t, y)
    nfev = 1
    sol = OdeSolution(np.empty(0), np.empty((0, y.size)), t, y)
    if t_end == t:
        sol.t, sol.y = np.array(out_t), np.array(out_y).reshape(len(out_t), y.size)
        return sol
    h = h0 if h0 is not None else _initial_step(fun, t, y, f, rtol, atol, t_end - t)
    nfev += 1
    h = min(h, max_step)
    n_steps = n_rejected = neg_rejects = 0
    stopped = False
    k = [None] * 7
    while t < t_end:
        if n_steps >= max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps at t={t:.6g}")
        h = min(h, max_step, t_end - t)
        h_free = h
        target = None
        if land_on_eval and k_eval < evals.size and evals[k_eval] - t <= h:
            target = evals[k_eval]
            h = target - t
        if h < 10 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.12g} (stiffness or blow-up)")
        k[0] = f
        for s in range(1, 7):
            ys = y + h * sum(a * k[i] for i, a in enumerate(A[s]) if a != 0.0)
            k[s] = fun(t + C[s] * h, ys)
        nfev += 6
        y_new = ys  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = h * sum(e * k[i] for i, e in enumerate(E) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale)) if y.size else 0.0
        if not math.isfinite(err) or err > 1.0:
            n_rejected += 1
            factor = MIN_FACTOR if not math.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** -0.2)
            h *= factor
            continue
        if target is not None:
            t_new = target
        else:
            t_new = t + h if t_end - (t + h) > 1e-14 * max(1.0, abs(t_end)) else t_end
        f_new = k[6]
        if nonneg:
            low = float(y_new.min()) if y_new.size else 0.0
            if low < -atol:
                # treat as a failed step; give up only if shrinking does not help
                neg_rejects += 1
                if neg_rejects > MAX_NEG_REJECTS:
                    raise NegativityError(f"component fell to {low:.3e} at t={t_new:.12g}")
                n_rejected += 1
                h *= 0.5
                continue
            if low < 0.0:
                before = float(invariant @ y_new) if invariant is not None else 0.0
                y_new = np.maximum(y_new, 0.0)
                if invariant is not None:
                    after = float(invariant @ y_new)
                    if after > 0.0:
                        y_new *= before / after
                f_new = fun(t_new, y_new)
                nfev += 1
            else:
                # only a clean step clears the count; a field pushing through zero
                # keeps accumulating until it is reported
                neg_rejects = 0
        while k_eval < evals.size and evals[k_eval] <= t_new:
            out_t.append(evals[k_eval])
            out_y.append(y_new.copy() if evals[k_eval] == t_new
                         else hermite(evals[k_eval], t, t_new, y, y_new, f, f_new))
            k_eval += 1
        if dense:
            sol.steps.append((t, t_new, y, y_new, f, f_new))
        t, y, f = t_new, y_new, f_new
        n_steps += 1
        factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
        h *= factor
        if target is not None:
            # a step cut short to hit an output time should not shrink the next one
            h = max(h, h_free)
        if stop is not None and stop(t, y):
            stopped = True
            break
    sol.t = np.array(out_t)
    sol.y = np.array(out_y).reshape(len(out_t), y.size)
    sol.t_last, sol.y_last = t, y
    sol.stopped = stopped
    sol.n_steps, sol.n_rejected, sol.nfev = n_steps, n_rejected, nfev
    return sol
