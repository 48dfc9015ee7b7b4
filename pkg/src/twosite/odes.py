"""Deterministic two-site coagulation equations.

Two systems live here:

* the truncated Smoluchowski system: concentrations ``c[j, i]`` for masses
  ``1 <= i < B`` at both sites plus one overflow reservoir ``c_b0`` that
  collects every particle reaching mass ``B`` or more and keeps coagulating
  with everything else;
* the closed second-moment system ``x' = x^2 + k (y - x)``,
  ``y' = y^2 + k (x - y)`` whose finite-time blow-up marks gelation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .integrator import OdeSolution, dopri54


# --- truncated Smoluchowski system ---------------------------------------------

@dataclass
class TruncatedState:
    b: int
    t: float
    c: np.ndarray      # shape (2, b); column 0 unused and kept at zero
    c_b0: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.b < 2:
            raise ValueError("cutoff b must be >= 2")
        if self.c.shape != (2, self.b):
            raise ValueError(f"c must have shape (2, {self.b})")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.c[0, 1:], self.c[1, 1:], [self.c_b0]])

    @classmethod
    def from_vector(cls, b: int, t: float, y: np.ndarray) -> "TruncatedState":
        c = np.zeros((2, b))
        c[0, 1:] = y[: b - 1]
        c[1, 1:] = y[b - 1: 2 * b - 2]
        return cls(b, t, c, float(y[-1]))

    def total_mass(self) -> float:
        i = np.arange(self.b)
        return float((self.c * i).sum() + self.c_b0)


def monodisperse(b: int, lam: float = 0.0) -> TruncatedState:
    """All mass in monomers, split 1/(1+lam) : lam/(1+lam) between the sites."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    c = np.zeros((2, b))
    if math.isinf(lam):
        c[1, 1] = 1.0
    else:
        c[0, 1] = 1.0 / (1.0 + lam)
        c[1, 1] = lam / (1.0 + lam)
    return TruncatedState(b, 0.0, c, 0.0)


def from_counts(b: int, n0: int, n1: int) -> TruncatedState:
    """Monomer start matching a particle system with n0, n1 monomers."""
    n = n0 + n1
    c = np.zeros((2, b))
    c[0, 1] = n0 / n
    c[1, 1] = n1 / n
    return TruncatedState(b, 0.0, c, 0.0)


def _truncated_rhs_arrays(c: np.ndarray, c_b0: float, kappa: float) -> Tuple[np.ndarray, float]:
    b = c.shape[1]
    i = np.arange(b, dtype=float)
    dc = np.empty_like(c)
    overflow = 0.0
    for j in (0, 1):
        a = i * c[j]
        conv = np.convolve(a, a)
        mj = a.sum()
        dc[j] = 0.5 * conv[:b] - i * c[j] * (mj + c_b0) + kappa * (c[1 - j] - c[j])
        # mass carried past the cutoff: sum over k + m >= B of (k + m) k m c_k c_m / 2
        overflow += 0.5 * float(np.dot(np.arange(b, conv.size, dtype=float), conv[b:]))
        overflow += c_b0 * float(np.dot(i, a))
    dc[:, 0] = 0.0
    return dc, overflow


def truncated_rhs(state: TruncatedState, kappa: float) -> TruncatedState:
    """Time derivative of ``state``, returned in the same container."""
    dc, db0 = _truncated_rhs_arrays(state.c, state.c_b0, kappa)
    return TruncatedState(state.b, state.t, dc, db0)


@dataclass
class TruncatedTrajectory:
    times: np.ndarray
    states: List[TruncatedState]
    kappa: float

    def c_b0(self) -> np.ndarray:
        return np.array([s.c_b0 for s in self.states])

    def sigma(self) -> np.ndarray:
        return np.array([sigma_of_truncated(s) for s in self.states])

    def masses(self) -> np.ndarray:
        return np.array([per_site_mass(s) for s in self.states])

    def mass_drift(self) -> float:
        m = np.array([s.total_mass() for s in self.states])
        return float(np.max(np.abs(m - m[0]))) if m.size else 0.0

    def __getitem__(self, k: int) -> TruncatedState:
        return self.states[k]

    def __len__(self) -> int:
        return len(self.states)


def integrate_truncated(init: TruncatedState, kappa: float, t_end: float,
                        times: Optional[Sequence[float]] = None,
                        rtol: float = 1e-8, atol: float = 1e-12) -> TruncatedTrajectory:
    """Integrate the truncated system from ``init`` to ``t_end``.

    Returns the states at ``times`` (default: start and end).  Clipping of
    tiny negative entries is mass-compensated, so total mass only drifts by
    rounding.  Integrator
    failures (step-size underflow, negativity below ``-atol``) propagate.
    """
    if t_end < init.t:
        raise ValueError("t_end must be >= the initial time")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    b = init.b
    ts = np.asarray([init.t, t_end] if times is None else times, dtype=float)

    def f(t, y):
        st = TruncatedState.from_vector(b, t, y)
        dc, db0 = _truncated_rhs_arrays(st.c, st.c_b0, kappa)
        return np.concatenate([dc[0, 1:], dc[1, 1:], [db0]])

    w = np.concatenate([np.arange(1, b), np.arange(1, b), [1.0]])
    sol = dopri54(f, init.t, init.to_vector(), t_end, t_eval=ts, rtol=rtol, atol=atol, nonneg=True,
                  land_on_eval=True, invariant=w)
    states = [TruncatedState.from_vector(b, float(t), y) for t, y in zip(sol.t, sol.y)]
    return TruncatedTrajectory(np.asarray(sol.t), states, kappa)


def sigma_of_truncated(state: TruncatedState) -> Tuple[float, float]:
    i2 = np.arange(state.b, dtype=float) ** 2
    return float(state.c[0] @ i2), float(state.c[1] @ i2)


def per_site_mass(state: TruncatedState) -> Tuple[float, float]:
    i = np.arange(state.b, dtype=float)
    return float(state.c[0] @ i), float(state.c[1] @ i)


def zeta_star_exact(t: float, lam: float, kappa: float, j: int) -> float:
    """Pre-gel mass fraction at site ``j``: mass relaxes between the sites at rate 2 kappa."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if j not in (0, 1):
        raise ValueError("site must be 0 or 1")
    asym = -1.0 if math.isinf(lam) else (1.0 - lam) / (1.0 + lam)
    z0 = 0.5 * (1.0 + asym * math.exp(-2.0 * kappa * t))
    return z0 if j == 0 else 1.0 - z0


# --- second-moment blow-up system ---------------------------------------------

class MomentPair(NamedTuple):
    x: float
    y: float


class NoBlowUpError(RuntimeError):
    """The moment system stayed below the cap up to t = 2.1 (cannot happen for exact solutions)."""


@dataclass
class GelEstimate:
    t_gel_hat: float
    t_stop: float
    x_stop: float
    y_stop: float
    method: str


@dataclass
class MomentTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sol: OdeSolution

    def __call__(self, t: float) -> MomentPair:
        v = self.sol(t)
        return MomentPair(float(v[0]), float(v[1]))


def moment_rhs(p: MomentPair, kappa: float) -> MomentPair:
    x, y = p
    return MomentPair(x * x + kappa * (y - x), y * y + kappa * (x - y))


def moment_init(lam: float) -> MomentPair:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if math.isinf(lam):
        return MomentPair(0.0, 1.0)
    return MomentPair(1.0 / (1.0 + lam), lam / (1.0 + lam))


def solve_moments(lam: float, kappa: float, x_cap: float = 1e8, rtol: float = 1e-8,
                  atol: float = 1e-12, method: str = "reciprocal",
                  t_max: float = 2.1) -> Tuple[MomentTrajectory, GelEstimate]:
    """Integrate the moment system until ``max(x, y) >= x_cap`` and extrapolate the blow-up time.

    ``reciprocal`` uses ``t_stop + 1/max(x, y)``, exact for a pure ``1/(T - t)``
    singularity; the leading correction near blow-up is ``kappa log`` sized, so the
    error is of order ``log(x_cap) / x_cap**2``.  ``two_point`` fits
    ``a / (T - t)`` through the last two accepted steps.
    """
    if x_cap < 1e4:
        raise ValueError("x_cap must be >= 1e4")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if method not in ("reciprocal", "two_point"):
        raise ValueError(f"unknown method {method!r}")
    p0 = moment_init(lam)

    def f(t, v):
        x, y = v
        return np.array([x * x + kappa * (y - x), y * y + kappa * (x - y)])

    sol = dopri54(f, 0.0, np.array(p0), t_max, rtol=rtol, atol=atol, dense=True,
                  stop=lambda t, v: max(v[0], v[1]) >= x_cap)
    if not sol.stopped:
        raise NoBlowUpError(f"moments stayed below {x_cap:g} up to t={t_max}; integrator fault")
    ts = np.array([s[0] for s in sol.steps] + [sol.t_last])
    ys = np.array([s[2] for s in sol.steps] + [sol.y_last])
    traj = MomentTrajectory(ts, ys[:, 0], ys[:, 1], sol)
    t_stop = float(sol.t_last)
    x_stop, y_stop = (float(v) for v in sol.y_last)
    big = max(x_stop, y_stop)
    if method == "reciprocal":
        t_hat = t_stop + 1.0 / big
    else:
        k = 0 if x_stop >= y_stop else 1
        t1, v1 = ts[-2], ys[-2, k]
        t_hat = (big * t_stop - v1 * t1) / (big - v1)
    return traj, GelEstimate(t_hat, t_stop, x_stop, y_stop, method)
