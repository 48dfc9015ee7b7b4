"""Monomer-level particle representation and observable extraction.

Every monomer has an id in ``0..N-1``; a particle is a disjoint-set tree of
monomers whose root carries the particle's mass and site.  Per-site
aggregates (total mass, particle count, sum of squared masses, maximum mass
and a mass histogram) are updated in O(1) per event by the kernels below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numba
import numpy as np

from .config import SimConfig


class InvariantError(RuntimeError):
    """Cached aggregates disagree with the particle forest (a logic bug)."""


@dataclass
class ParticleSystem:
    parent: np.ndarray      # int32[N], disjoint-set forest
    mass: np.ndarray        # int32[N], valid at roots
    site: np.ndarray        # int8[N], valid at roots
    roots: np.ndarray       # int32[N], dense list of roots, first P entries live
    pos: np.ndarray         # int32[N], index of a root inside ``roots``
    hist: np.ndarray        # int32[2, N+1], particle counts by (site, mass)
    total_mass: np.ndarray  # int64[2]
    count: np.ndarray       # int64[2]
    sum_sq: np.ndarray      # int64[2]
    max_mass: np.ndarray    # int64[2]
    rng: np.random.Generator
    t: float = 0.0
    events: int = 0

    @property
    def n(self) -> int:
        return self.parent.shape[0]

    @property
    def n_particles(self) -> int:
        return int(self.count[0] + self.count[1])


@dataclass
class MassSpectrum:
    """Sorted ``mass -> count`` histograms, one per site (nonzero entries only)."""

    sites: Tuple[Dict[int, int], Dict[int, int]]

    def __getitem__(self, j: int) -> Dict[int, int]:
        return self.sites[j]

    def total_mass(self) -> int:
        return sum(m * k for s in self.sites for m, k in s.items())

    def as_arrays(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        d = self.sites[j]
        return (np.fromiter(d.keys(), np.int64, len(d)), np.fromiter(d.values(), np.int64, len(d)))

    def concentration(self, j: int, b: int, n: int) -> np.ndarray:
        """Rescaled counts xi_{m,j}/N for masses below ``b``, indexed by mass."""
        out = np.zeros(b)
        for m, k in self.sites[j].items():
            if m < b:
                out[m] = k / n
        return out


@dataclass
class SnapshotRecord:
    t: float
    particle_count: Tuple[int, int]
    mass_frac: Tuple[float, float]
    sigma_hat: Tuple[float, float]
    rho_hat: Tuple[float, float]
    max_mass: Tuple[int, int]
    gelled: Tuple[bool, bool]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based stream keyed by ``seed``; distinct seeds give distinct keys."""
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def init_system(config: SimConfig, rng: Optional[np.random.Generator] = None) -> ParticleSystem:
    config.validate()
    n = config.n
    idx = np.arange(n, dtype=np.int32)
    site = np.zeros(n, dtype=np.int8)
    site[config.n0:] = 1
    hist = np.zeros((2, n + 1), dtype=np.int32)
    hist[0, 1] = config.n0
    hist[1, 1] = config.n1
    counts = np.array([config.n0, config.n1], dtype=np.int64)
    return ParticleSystem(
        parent=idx.copy(),
        mass=np.ones(n, dtype=np.int32),
        site=site,
        roots=idx.copy(),
        pos=idx.copy(),
        hist=hist,
        total_mass=counts.copy(),
        count=counts.copy(),
        sum_sq=counts.copy(),
        max_mass=(counts > 0).astype(np.int64),
        rng=rng if rng is not None else make_rng(config.seed),
    )


# --- numba primitives -------------------------------------------------------

@numba.njit(nogil=True, cache=True)
def find_root(parent, x):
    # path halving
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@numba.njit(nogil=True, cache=True)
def coalesce(parent, mass, site, roots, pos, hist, total_mass, count, sum_sq, max_mass, ra, rb):
    """Merge same-site roots ``ra`` and ``rb``; returns the surviving root."""
    j = site[ra]
    m = mass[ra]
    k = mass[rb]
    if k > m:
        ra, rb = rb, ra
    new = m + k
    parent[rb] = ra
    mass[ra] = new
    # swap-remove the absorbed root from the dense index
    p = count[0] + count[1] - 1
    i = pos[rb]
    last = roots[p]
    roots[i] = last
    pos[last] = i
    hist[j, m] -= 1
    hist[j, k] -= 1
    hist[j, new] += 1
    count[j] -= 1
    sum_sq[j] += 2 * np.int64(m) * np.int64(k)
    if new > max_mass[j]:
        max_mass[j] = new
    return ra


@numba.njit(nogil=True, cache=True)
def migrate(mass, site, hist, total_mass, count, sum_sq, max_mass, r):
    a = site[r]
    b = 1 - a
    m = mass[r]
    site[r] = b
    hist[a, m] -= 1
    hist[b, m] += 1
    total_mass[a] -= m
    total_mass[b] += m
    count[a] -= 1
    count[b] += 1
    sq = np.int64(m) * np.int64(m)
    sum_sq[a] -= sq
    sum_sq[b] += sq
    if m > max_mass[b]:
        max_mass[b] = m
    if m == max_mass[a] and hist[a, m] == 0:
        top = m
        while top > 0 and hist[a, top] == 0:
            top -= 1
        max_mass[a] = top


@numba.njit(nogil=True, cache=True)
def third_moments(hist, max_mass):
    """Sum of cubed masses per site, scanning the histogram up to the site maximum."""
    out = np.zeros(2)
    for j in range(2):
        acc = 0.0
        for m in range(1, max_mass[j] + 1):
            k = hist[j, m]
            if k:
                fm = float(m)
                acc += k * fm * fm * fm
        out[j] = acc
    return out


@numba.njit(nogil=True, cache=True)
def recount(mass, site, roots, n_roots, n):
    """Recompute (total_mass, count, sum_sq, max_mass) per site from the roots."""
    agg = np.zeros((4, 2), dtype=np.int64)
    for i in range(n_roots):
        r = roots[i]
        j = site[r]
        m = np.int64(mass[r])
        agg[0, j] += m
        agg[1, j] += 1
        agg[2, j] += m * m
        if m > agg[3, j]:
            agg[3, j] = m
    return agg


# --- observables ------------------------------------------------------------

def spectrum(sys: ParticleSystem) -> MassSpectrum:
    live = sys.roots[: sys.n_particles]
    out = []
    for j in (0, 1):
        masses = sys.mass[live[sys.site[live] == j]]
        vals, cnt = np.unique(masses, return_counts=True)
        out.append({int(m): int(c) for m, c in zip(vals, cnt)})
    return MassSpectrum((out[0], out[1]))


def audit(sys: ParticleSystem) -> None:
    """Check every cached aggregate against a full recount; raise on mismatch."""
    n_roots = sys.n_particles
    agg = recount(sys.mass, sys.site, sys.roots, n_roots, sys.n)
    cached = np.stack([sys.total_mass, sys.count, sys.sum_sq, sys.max_mass])
    if not np.array_equal(agg, cached):
        raise InvariantError(f"aggregate mismatch: cached {cached.tolist()} recount {agg.tolist()}")
    if int(sys.total_mass.sum()) != sys.n:
        raise InvariantError("total mass is not conserved")
    live = sys.roots[:n_roots]
    if not np.array_equal(sys.parent[live], live) or not np.array_equal(sys.pos[live], np.arange(n_roots)):
        raise InvariantError("dense root index is corrupt")
    for j in (0, 1):
        h = np.bincount(sys.mass[live[sys.site[live] == j]], minlength=sys.n + 1)
        if not np.array_equal(h, sys.hist[j]):
            raise InvariantError(f"mass histogram at site {j} is stale")


def empirical_snapshot(sys: ParticleSystem, gel_threshold: int,
                       gelled_before: Tuple[bool, bool] = (False, False)) -> SnapshotRecord:
    """Per-site statistics of the current state.

    ``gelled_before`` carries flags from earlier in the run so that a site
    stays flagged after its giant particle has migrated away.
    """
    if gel_threshold < 1:
        raise ValueError("gel_threshold must be >= 1")
    n = sys.n
    m3 = third_moments(sys.hist, sys.max_mass)
    return SnapshotRecord(
        t=sys.t,
        particle_count=(int(sys.count[0]), int(sys.count[1])),
        mass_frac=(sys.total_mass[0] / n, sys.total_mass[1] / n),
        sigma_hat=(sys.sum_sq[0] / n, sys.sum_sq[1] / n),
        rho_hat=(m3[0] / n, m3[1] / n),
        max_mass=(int(sys.max_mass[0]), int(sys.max_mass[1])),
        gelled=tuple(bool(g or sys.max_mass[j] >= gel_threshold) for j, g in enumerate(gelled_before)),
    )
