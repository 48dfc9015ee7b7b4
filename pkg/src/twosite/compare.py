"""Particle simulation against the truncated deterministic system."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import SimConfig
from .mc import McResult, run_mc
from .odes import TruncatedTrajectory, from_counts, integrate_truncated, solve_moments


class PostGelComparisonError(ValueError):
    """Comparison requested at or after the estimated gelation time."""


@dataclass
class DeviationReport:
    times: np.ndarray
    deviation: np.ndarray     # (n_times, 2): sum_{m<B} m |xi_m/N - c_m|
    c_b0: np.ndarray          # (n_times,) overflow mass of the truncated run
    t_gel_hat: float
    b: int
    mc: Optional[McResult] = None
    ode: Optional[TruncatedTrajectory] = None


def mass_weighted_deviation(empirical: np.ndarray, c: np.ndarray) -> float:
    m = np.arange(c.shape[0], dtype=float)
    return float(np.sum(m * np.abs(empirical - c)))


def compare(config: SimConfig, times: Optional[Sequence[float]] = None,
            keep_runs: bool = False) -> DeviationReport:
    """Run both models on matched parameters and report the deviation per (t, site).

    ``times`` defaults to the config's snapshot times.  All of them must lie
    strictly before the blow-up time of the moment system, since agreement is
    only expected before gelation.
    """
    config.validate()
    ts = np.asarray(config.snapshot_times if times is None else times, dtype=float)
    if ts.size == 0:
        raise ValueError("no comparison times")
    lam = config.lam
    _, gel = solve_moments(lam, config.kappa)
    late = ts[ts >= gel.t_gel_hat]
    if late.size:
        raise PostGelComparisonError(
            f"comparison time {late[0]:g} is not before the estimated gelation time "
            f"{gel.t_gel_hat:.6g}; the deterministic limit only holds before gelation")
    b = config.cutoff_b
    t_end = float(ts[-1])
    mc_cfg = SimConfig(n0=config.n0, n1=config.n1, kappa=config.kappa, t_end=t_end, seed=config.seed,
                       snapshot_times=tuple(ts), gel_threshold_factor=config.gel_threshold_factor,
                       cutoff_b=b, rtol=config.rtol, atol=config.atol, max_events=config.max_events)
    mc = run_mc(mc_cfg, keep_spectra=True)
    ode = integrate_truncated(from_counts(b, config.n0, config.n1), config.kappa, t_end,
                              times=ts, rtol=config.rtol, atol=config.atol)
    n = config.n
    dev = np.zeros((ts.size, 2))
    for k, (spec, st) in enumerate(zip(mc.spectra, ode.states)):
        for j in (0, 1):
            dev[k, j] = mass_weighted_deviation(spec.concentration(j, b, n), st.c[j])
    return DeviationReport(ts, dev, ode.c_b0(), gel.t_gel_hat, b,
                           mc if keep_runs else None, ode if keep_runs else None)
