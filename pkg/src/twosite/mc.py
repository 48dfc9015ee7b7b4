"""Event-driven simulation of the two-site stochastic coalescent.

The simulation runs in rescaled time.  Events occur at total rate
``R = (N-1)/2 + kappa * P`` where P is the current number of particles.  With
probability ``kappa * P / R`` a uniformly chosen particle changes site;
otherwise two distinct monomers are drawn uniformly and their particles merge
if they are different particles at the same site (else the event is
fictitious).  Picking monomers rather than particles gives mass-proportional
selection, so a same-site pair of masses m, n merges at rate m*n/N.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .config import RNG_NAME, SimConfig
from .state import (
    InvariantError,
    MassSpectrum,
    ParticleSystem,
    SnapshotRecord,
    audit,
    coalesce,
    empirical_snapshot,
    find_root,
    init_system,
    make_rng,
    migrate,
    spectrum,
)

FICTITIOUS, COALESCENCE, MIGRATION = 0, 1, 2

OK, BUDGET_EXCEEDED, MASS_VIOLATION = 0, 1, 2


class SimulationBudgetError(RuntimeError):
    """The event count exceeded the configured cap."""


class ReplicaError(RuntimeError):
    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"replica {index} (seed {seed}) failed: {cause}")
        self.index = index
        self.seed = seed


class EventKind(enum.Enum):
    FICTITIOUS = FICTITIOUS
    COALESCENCE = COALESCENCE
    MIGRATION = MIGRATION


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t: float
    site: int = -1        # coalescence site, or origin site of a migration
    m: int = 0
    n: int = 0
    roots: Tuple[int, int] = (-1, -1)


@dataclass
class GelReport:
    t_gel: Tuple[Optional[float], Optional[float]]
    # second moment per monomer at the gelling site right after the crossing
    # event, with the new gel particle left out
    sigma_reduced: Tuple[Optional[float], Optional[float]] = (None, None)

    @property
    def delay(self) -> Optional[float]:
        if self.t_gel[0] is None or self.t_gel[1] is None:
            return None
        return self.t_gel[1] - self.t_gel[0]


@dataclass
class McResult:
    config: SimConfig
    records: List[SnapshotRecord]
    gel: GelReport
    final_spectrum: MassSpectrum
    events: int
    spectra: List[MassSpectrum] = field(default_factory=list)
    rng_name: str = RNG_NAME


# --- kernels ----------------------------------------------------------------

@numba.njit(nogil=True, cache=True)
def draw_event(rng, parent, site, roots, count, n, kappa):
    """Return (waiting time, kind, root a, root b) of the next event."""
    p = count[0] + count[1]
    mig = kappa * p
    rate = 0.5 * (n - 1) + mig
    dt = rng.standard_exponential() / rate
    u = rng.random() * rate
    if u < mig:
        # u / kappa is uniform on [0, P)
        i = min(int(u / kappa), p - 1)
        return dt, MIGRATION, roots[i], -1
    a = min(int(rng.random() * n), n - 1)
    b = min(int(rng.random() * (n - 1)), n - 2)
    if b >= a:
        b += 1
    ra = find_root(parent, a)
    rb = find_root(parent, b)
    if ra == rb or site[ra] != site[rb]:
        return dt, FICTITIOUS, ra, rb
    return dt, COALESCENCE, ra, rb


@numba.njit(nogil=True, cache=True)
def _advance(parent, mass, site, roots, pos, hist, total_mass, count, sum_sq, max_mass,
             rng, n, kappa, t, t_stop, threshold, gel_time, gel_sq, events, max_events):
    """Run events until the next one would fall after ``t_stop``.

    The overshooting waiting time is discarded; by memorylessness the caller
    may resume from ``t_stop`` with a fresh draw.
    """
    while True:
        dt, kind, ra, rb = draw_event(rng, parent, site, roots, count, n, kappa)
        if t + dt > t_stop:
            return OK, t_stop, events
        t += dt
        events += 1
        if events > max_events:
            return BUDGET_EXCEEDED, t, events
        if kind == COALESCENCE:
            j = site[ra]
            r = coalesce(parent, mass, site, roots, pos, hist, total_mass, count, sum_sq, max_mass, ra, rb)
            if gel_time[j] < 0.0 and mass[r] >= threshold:
                gel_time[j] = t
                gel_sq[j] = sum_sq[j] - np.int64(mass[r]) * np.int64(mass[r])
        elif kind == MIGRATION:
            j = 1 - site[ra]
            migrate(mass, site, hist, total_mass, count, sum_sq, max_mass, ra)
            if gel_time[j] < 0.0 and mass[ra] >= threshold:
                gel_time[j] = t
                gel_sq[j] = sum_sq[j] - np.int64(mass[ra]) * np.int64(mass[ra])
        if total_mass[0] + total_mass[1] != n:
            return MASS_VIOLATION, t, events


# --- single-event API ---------------------------------------------------------

def next_event(sys: ParticleSystem, kappa: float) -> Event:
    """Draw the next event from the current state (the state is not modified
    apart from disjoint-set path compression)."""
    if sys.n_particles < 1:
        raise ValueError("no particles left")
    dt, kind, ra, rb = draw_event(sys.rng, sys.parent, sys.site, sys.roots, sys.count, sys.n, kappa)
    t = sys.t + dt
    if kind == MIGRATION:
        return Event(EventKind.MIGRATION, t, int(sys.site[ra]), int(sys.mass[ra]), 0, (int(ra), -1))
    if kind == COALESCENCE:
        return Event(EventKind.COALESCENCE, t, int(sys.site[ra]), int(sys.mass[ra]), int(sys.mass[rb]),
                     (int(ra), int(rb)))
    return Event(EventKind.FICTITIOUS, t, roots=(int(ra), int(rb)))


def apply_event(sys: ParticleSystem, ev: Event, check: bool = False) -> None:
    """Apply ``ev`` (drawn from the current state) and advance the clock."""
    ra, rb = ev.roots
    if ev.kind is EventKind.COALESCENCE:
        coalesce(sys.parent, sys.mass, sys.site, sys.roots, sys.pos, sys.hist,
                 sys.total_mass, sys.count, sys.sum_sq, sys.max_mass, ra, rb)
    elif ev.kind is EventKind.MIGRATION:
        migrate(sys.mass, sys.site, sys.hist, sys.total_mass, sys.count, sys.sum_sq, sys.max_mass, ra)
    sys.t = ev.t
    sys.events += 1
    if int(sys.total_mass[0] + sys.total_mass[1]) != sys.n:
        raise InvariantError(f"mass not conserved after event {sys.events}")
    if check:
        audit(sys)


def advance(sys: ParticleSystem, kappa: float, t_stop: float, threshold: int,
            gel_time: np.ndarray, gel_sq: np.ndarray, max_events: int) -> None:
    status, t, events = _advance(
        sys.parent, sys.mass, sys.site, sys.roots, sys.pos, sys.hist,
        sys.total_mass, sys.count, sys.sum_sq, sys.max_mass,
        sys.rng, sys.n, float(kappa), float(sys.t), float(t_stop), int(threshold),
        gel_time, gel_sq, int(sys.events), int(max_events))
    sys.t = t
    sys.events = events
    if status == BUDGET_EXCEEDED:
        raise SimulationBudgetError(
            f"event budget of {max_events} exhausted at t={t:.6g}; lower kappa*t_end or raise max_events")
    if status == MASS_VIOLATION:
        raise InvariantError(f"mass not conserved at t={t:.6g} after {events} events")


# --- full runs ----------------------------------------------------------------

def run_mc(config: SimConfig, keep_spectra: bool = False, check: bool = False) -> McResult:
    """Simulate to ``config.t_end`` and sample the state at each snapshot time.

    A snapshot at time s shows the state after the last event at or before s.
    Gel times are the times of the first event that makes a particle of mass
    at least ``config.gel_threshold`` present at a site.
    """
    sys = init_system(config)
    n = config.n
    threshold = config.gel_threshold
    gel_time = np.full(2, -1.0)
    gel_sq = np.full(2, -1, dtype=np.int64)
    for j in (0, 1):
        if sys.max_mass[j] >= threshold:
            gel_time[j] = 0.0
            gel_sq[j] = 0
    budget = config.event_budget
    records, spectra = [], []
    for s in config.snapshot_times:
        advance(sys, config.kappa, s, threshold, gel_time, gel_sq, budget)
        if check:
            audit(sys)
        records.append(empirical_snapshot(sys, threshold, (gel_time[0] >= 0, gel_time[1] >= 0)))
        if keep_spectra:
            spectra.append(spectrum(sys))
    advance(sys, config.kappa, config.t_end, threshold, gel_time, gel_sq, budget)
    if check:
        audit(sys)
    gel = GelReport(
        t_gel=tuple(float(x) if x >= 0 else None for x in gel_time),
        sigma_reduced=tuple(float(q) / n if q >= 0 else None for q in gel_sq),
    )
    return McResult(config, records, gel, spectrum(sys), sys.events, spectra)


@dataclass
class ReplicaSummary:
    config: SimConfig
    n_replicas: int
    times: np.ndarray
    # arrays of shape (n_snapshots, 2)
    mean: dict
    stderr: dict
    gel_times: np.ndarray        # (n_replicas, 2), NaN where a site never gelled
    delays: np.ndarray           # (n_replicas,), NaN where undefined
    results: List[McResult] = field(default_factory=list)

    @property
    def seeds(self) -> List[int]:
        return [(self.config.seed + r) % 2**64 for r in range(self.n_replicas)]


SNAPSHOT_FIELDS = ("particle_count", "mass_frac", "sigma_hat", "rho_hat", "max_mass", "gelled")


def replica_seed(config: SimConfig, r: int) -> int:
    return (config.seed + r) % 2**64


def run_replicas(config: SimConfig, n_replicas: int, workers: int = 1,
                 keep_results: bool = False, keep_spectra: bool = False) -> ReplicaSummary:
    """Run independent replicas with seeds ``seed + r`` and aggregate them.

    Replicas may run on several threads (the kernels release the GIL); the
    reduction always proceeds in replica order, so the output does not depend
    on completion order.
    """
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")

    def one(r: int) -> McResult:
        seed = replica_seed(config, r)
        try:
            return run_mc(config.with_seed(seed), keep_spectra=keep_spectra)
        except Exception as exc:
            raise ReplicaError(r, seed, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_replicas)))
    else:
        results = [one(r) for r in range(n_replicas)]

    times = np.array(config.snapshot_times, dtype=float)
    mean, stderr = {}, {}
    for name in SNAPSHOT_FIELDS:
        data = np.array([[getattr(rec, name) for rec in res.records] for res in results], dtype=float)
        data = data.reshape(n_replicas, len(times), 2)
        mean[name] = data.mean(axis=0)
        if n_replicas > 1:
            stderr[name] = data.std(axis=0, ddof=1) / math.sqrt(n_replicas)
        else:
            stderr[name] = np.zeros_like(mean[name])
    gel_times = np.array([[np.nan if x is None else x for x in res.gel.t_gel] for res in results])
    delays = gel_times[:, 1] - gel_times[:, 0]
    return ReplicaSummary(config, n_replicas, times, mean, stderr, gel_times, delays,
                          results if keep_results else [])
