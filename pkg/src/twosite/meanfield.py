"""Closed-form one-site (kappa = 0) quantities used as oracles.

With monodisperse start the modified Smoluchowski system has the Borel
solution ``c_{t,m} = t^(m-1) m^(m-2) exp(-t m) / m!``.  Its mass generating
function ``u(x, t) = sum_m m c_{t,m} x^m`` solves ``x = u exp(t (1 - u))``; the
gel carries ``1 - u(1, t)`` and the reduced second moment is
``u / (1 - t u)`` at x = 1.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln


def borel_coeff(t: float, m):
    """Number concentration of mass-``m`` particles at time ``t``.

    Evaluated in log space, so large ``m`` neither overflows nor underflows
    prematurely.  Accepts a scalar or an integer array for ``m``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 1):
        raise ValueError("m must be >= 1")
    if t == 0.0:
        out = np.where(m_arr == 1, 1.0, 0.0)
    else:
        logc = (m_arr - 1) * math.log(t) + (m_arr - 2) * np.log(m_arr) - t * m_arr - gammaln(m_arr + 1)
        out = np.exp(logc)
    return float(out) if np.ndim(m) == 0 else out


def borel_mass_sum(t: float, m_max: int) -> float:
    """Partial mass sum sum_{m <= m_max} m c_{t,m}."""
    m = np.arange(1, m_max + 1)
    return float(np.sum(m * borel_coeff(t, m)))


def _g(u: float, t: float) -> float:
    return u * math.exp(t * (1.0 - u))


def solve_u(x: float, t: float) -> float:
    """Physical root of ``x = u exp(t (1 - u))``.

    On ``[0, min(1, 1/t)]`` the map is increasing from 0 to a value >= 1, so
    the root there is unique; it is the generating-function branch (u(0) = 0)
    and, for t > 1 and x = 1, the nontrivial root below 1.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if t < 0:
        raise ValueError("t must be >= 0")
    if x == 0.0:
        return 0.0
    hi = 1.0 if t <= 1.0 else 1.0 / t
    f_hi = _g(hi, t) - x
    if f_hi <= 0.0:
        return hi
    u = brentq(lambda v: _g(v, t) - x, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # one Newton polish where the slope is not degenerate
    slope = math.exp(t * (1.0 - u)) * (1.0 - t * u)
    if slope > 1e-8:
        v = u - (_g(u, t) - x) / slope
        if 0.0 <= v <= hi and abs(_g(v, t) - x) < abs(_g(u, t) - x):
            u = v
    return u


def gel_fraction(t: float) -> float:
    """Mass fraction of the gel particle; zero up to t = 1."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t <= 1.0:
        return 0.0
    return 1.0 - solve_u(1.0, t)


def sigma_meanfield(t: float) -> float:
    """Expected mass of the (non-gel) particle holding a random monomer.

    ``1/(1-t)`` before gelation, infinite at t = 1, finite again afterwards.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 1.0:
        return math.inf
    z = 1.0 if t < 1.0 else solve_u(1.0, t)
    return z / (1.0 - t * z)


def u_grid(xs, ts) -> np.ndarray:
    """u(x, t) on a grid, shape (len(ts), len(xs))."""
    return np.array([[solve_u(float(x), float(t)) for x in xs] for t in ts])
