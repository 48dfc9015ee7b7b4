"""Sampler of the post-gelation limit model.

Finite masses are tracked in mass-flow coordinates ``zeta[j, m] = m c[j, m]``
for ``1 <= m < B``.  Each site may hold one gel particle of mass
``zeta_inf[j]``.  Between jumps everything evolves deterministically:

    zeta'_m   = m/2 (zeta * zeta)_m - m zeta_m (zeta_inf_j + M_j) - k zeta_m + k zeta_m(other site)
    zeta_inf' = zeta_inf_j sigma_j + Phi_j

with ``M_j`` the finite mass, ``sigma_j = sum m zeta_m`` and ``Phi_j`` the
mass that same-site coagulation pushes past the cutoff.  Routing ``Phi_j``
into the local gel seeds gelation without a separate trigger and keeps the
total mass exactly conserved.

Every site carries an exponential clock with rate ``kappa``.  When it rings
the local gel (possibly empty) moves to the other site and merges with the
gel there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .integrator import dopri54
from .state import make_rng


class JumpBudgetError(RuntimeError):
    pass


@dataclass
class LimitState:
    b: int
    t: float
    zeta: np.ndarray          # (2, b), column 0 unused
    zeta_inf: np.ndarray      # (2,)
    next_jump: np.ndarray     # (2,), absolute time of each site's next clock ring
    rng: Optional[np.random.Generator] = None

    @property
    def sigma(self) -> np.ndarray:
        return self.zeta @ np.arange(self.b, dtype=float)

    @property
    def rho(self) -> np.ndarray:
        return self.zeta @ np.arange(self.b, dtype=float) ** 2

    @property
    def finite_mass(self) -> np.ndarray:
        return self.zeta.sum(axis=1)

    def total_mass(self) -> float:
        return float(self.zeta.sum() + self.zeta_inf.sum())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.zeta[0, 1:], self.zeta[1, 1:], self.zeta_inf])

    def load_vector(self, t: float, y: np.ndarray) -> None:
        b = self.b
        self.t = t
        self.zeta[0, 1:] = y[: b - 1]
        self.zeta[1, 1:] = y[b - 1: 2 * b - 2]
        self.zeta_inf[:] = y[2 * b - 2:]


def initial_limit_state(lam: float, b: int, kappa: float, seed: int) -> LimitState:
    if b < 2:
        raise ValueError("cutoff b must be >= 2")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    zeta = np.zeros((2, b))
    if math.isinf(lam):
        zeta[1, 1] = 1.0
    else:
        zeta[0, 1] = 1.0 / (1.0 + lam)
        zeta[1, 1] = lam / (1.0 + lam)
    rng = make_rng(seed)
    clocks = np.array([_waiting_time(rng, kappa) for _ in (0, 1)])
    return LimitState(b, 0.0, zeta, np.zeros(2), clocks, rng)


def _waiting_time(rng: np.random.Generator, kappa: float) -> float:
    # mean 1/kappa, i.e. the per-particle migration rate
    return rng.exponential(1.0 / kappa) if kappa > 0 else math.inf


def _limit_rhs_arrays(zeta: np.ndarray, zinf: np.ndarray, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    b = zeta.shape[1]
    m = np.arange(b, dtype=float)
    dz = np.empty_like(zeta)
    dinf = np.empty(2)
    for j in (0, 1):
        z = zeta[j]
        conv = np.convolve(z, z)
        finite = z.sum()
        dz[j] = 0.5 * m * conv[:b] - m * z * (zinf[j] + finite) - kappa * z + kappa * zeta[1 - j]
        phi = 0.5 * float(np.dot(np.arange(b, conv.size, dtype=float), conv[b:]))
        dinf[j] = zinf[j] * float(m @ z) + phi
    dz[:, 0] = 0.0
    return dz, dinf


def limit_rhs(state: LimitState, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives ``(d zeta, d zeta_inf)`` of the between-jump dynamics."""
    return _limit_rhs_arrays(state.zeta, state.zeta_inf, kappa)


def gel_jump(state: LimitState, j: int, kappa: float) -> float:
    """Move site ``j``'s gel to the other site and restart site ``j``'s clock.

    Returns the moved mass (zero for an empty jump).
    """
    moved = float(state.zeta_inf[j])
    state.zeta_inf[1 - j] += moved
    state.zeta_inf[j] = 0.0
    rng = state.rng if state.rng is not None else make_rng(0)
    state.next_jump[j] = state.t + _waiting_time(rng, kappa)
    return moved


@dataclass
class JumpRecord:
    t: float
    site: int
    mass: float


@dataclass
class LimitTrajectory:
    lam: float
    kappa: float
    b: int
    seed: int
    times: np.ndarray
    zeta_inf: np.ndarray      # (n, 2)
    sigma: np.ndarray         # (n, 2)
    rho: np.ndarray           # (n, 2)
    finite_mass: np.ndarray   # (n, 2)
    jumps: List[JumpRecord] = field(default_factory=list)
    spectra: List[np.ndarray] = field(default_factory=list)

    def total_mass(self) -> np.ndarray:
        return self.zeta_inf.sum(axis=1) + self.finite_mass.sum(axis=1)


def simulate_limit(lam: float, kappa: float, b: int, t_end: float, seed: int = 0,
                   rtol: float = 1e-8, atol: float = 1e-12,
                   times: Optional[Sequence[float]] = None, max_jumps: int = 1_000_000,
                   keep_spectra: bool = False) -> LimitTrajectory:
    """Integrate between clock rings and apply gel jumps at each ring.

    The output is right-continuous: a sample time equal to a jump time shows
    the state after the jump.
    """
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    ts = np.asarray([0.0, t_end] if times is None else times, dtype=float)
    if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > t_end):
        raise ValueError("times must be strictly increasing inside [0, t_end]")
    st = initial_limit_state(lam, b, kappa, seed)

    def f(t, y):
        zeta = np.zeros((2, b))
        zeta[0, 1:] = y[: b - 1]
        zeta[1, 1:] = y[b - 1: 2 * b - 2]
        dz, dinf = _limit_rhs_arrays(zeta, y[2 * b - 2:], kappa)
        return np.concatenate([dz[0, 1:], dz[1, 1:], dinf])

    ones = np.ones(2 * b)  # total mass in mass-flow coordinates
    out = {"zinf": [], "sigma": [], "rho": [], "mass": [], "spec": []}

    def record(state: LimitState):
        out["zinf"].append(state.zeta_inf.copy())
        out["sigma"].append(state.sigma)
        out["rho"].append(state.rho)
        out["mass"].append(state.finite_mass)
        if keep_spectra:
            out["spec"].append(state.zeta.copy())

    jumps: List[JumpRecord] = []
    k = 0
    while True:
        t_jump = float(st.next_jump.min())
        seg_end = min(t_jump, t_end)
        # samples strictly before the jump belong to this segment
        hi = np.searchsorted(ts, seg_end, side="left" if t_jump <= t_end else "right")
        seg_ts = ts[k:hi]
        if seg_end > st.t:
            sol = dopri54(f, st.t, st.to_vector(), seg_end, t_eval=seg_ts, rtol=rtol, atol=atol,
                          nonneg=True, land_on_eval=True, invariant=ones)
            for y in sol.y:
                probe = LimitState(b, 0.0, np.zeros((2, b)), np.zeros(2), st.next_jump)
                probe.load_vector(0.0, y)
                record(probe)
            st.load_vector(seg_end, sol.y_last)
        else:
            for _ in seg_ts:
                record(st)
        k = hi
        if t_jump > t_end:
            break
        if len(jumps) >= max_jumps:
            raise JumpBudgetError(f"more than {max_jumps} gel jumps before t={t_end}")
        j = int(np.argmin(st.next_jump))
        st.t = t_jump
        jumps.append(JumpRecord(t_jump, j, gel_jump(st, j, kappa)))

    return LimitTrajectory(
        lam, kappa, b, seed, ts[:k],
        np.array(out["zinf"]).reshape(-1, 2), np.array(out["sigma"]).reshape(-1, 2),
        np.array(out["rho"]).reshape(-1, 2), np.array(out["mass"]).reshape(-1, 2),
        jumps, out["spec"])


def gel_growth_slope(times: np.ndarray, zinf: np.ndarray, t0: float = 1.0,
                     window: Tuple[float, float] = (0.05, 0.3), degree: int = 3) -> float:
    """Right derivative of the gel mass at ``t0`` from a polynomial fit.

    Fits ``zinf`` on ``[t0 + window[0], t0 + window[1]]`` with a polynomial in
    ``t - t0`` and returns its linear coefficient.  Starting the window a bit
    after ``t0`` skips the rounded corner that a finite cutoff puts on the gel
    onset, which otherwise biases a plain difference quotient low.
    """
    times = np.asarray(times, dtype=float)
    zinf = np.asarray(zinf, dtype=float)
    sel = (times >= t0 + window[0]) & (times <= t0 + window[1])
    if sel.sum() < degree + 2:
        raise ValueError("not enough samples in the fit window")
    coef = np.polynomial.polynomial.polyfit(times[sel] - t0, zinf[sel], degree)
    return float(coef[1])
