"""Run configuration shared by every subsystem."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

RNG_NAME = "numpy.random.Philox"


class ConfigError(ValueError):
    """Raised for invalid user-supplied parameters."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one two-site run.

    Site 0 starts with ``n0`` monomers and site 1 with ``n1``.  Time is the
    rescaled time (unrescaled time multiplied by N = n0 + n1), so that the
    mean-field gelation time is 1.
    """

    n0: int
    n1: int = 0
    kappa: float = 0.0
    t_end: float = 1.0
    seed: int = 0
    snapshot_times: Sequence[float] = field(default_factory=tuple)
    gel_threshold_factor: float = 2.0
    cutoff_b: int = 512
    rtol: float = 1e-8
    atol: float = 1e-12
    max_events: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))
        self.validate()

    def validate(self) -> None:
        if int(self.n0) != self.n0 or int(self.n1) != self.n1 or self.n0 < 0 or self.n1 < 0:
            raise ConfigError("n0 and n1 must be nonnegative integers")
        if self.n0 + self.n1 < 2:
            raise ConfigError("need at least two monomers (n0 + n1 >= 2)")
        if self.n0 + self.n1 >= 2**31 - 1:
            raise ConfigError("n0 + n1 must be below 2**31 - 1")
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise ConfigError("kappa must be finite and >= 0")
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be finite and >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        snaps = self.snapshot_times
        if any(s < 0 or s > self.t_end for s in snaps):
            raise ConfigError("snapshot times must lie in [0, t_end]")
        if any(b <= a for a, b in zip(snaps, snaps[1:])):
            raise ConfigError("snapshot times must be strictly increasing")
        if not self.gel_threshold_factor > 0:
            raise ConfigError("gel_threshold_factor must be > 0")
        if int(self.cutoff_b) != self.cutoff_b or self.cutoff_b < 2:
            raise ConfigError("cutoff_b must be an integer >= 2")
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError("rtol and atol must be > 0")
        if self.max_events is not None and self.max_events < 1:
            raise ConfigError("max_events must be positive")

    @property
    def n(self) -> int:
        return int(self.n0) + int(self.n1)

    @property
    def lam(self) -> float:
        """Initial population ratio n1/n0 (infinite when site 0 starts empty)."""
        return self.n1 / self.n0 if self.n0 else math.inf

    @property
    def gel_threshold(self) -> int:
        """Largest-particle mass that flags a site as gelled: factor * N^(2/3), rounded."""
        return max(1, int(math.floor(self.gel_threshold_factor * self.n ** (2.0 / 3.0) + 0.5)))

    @property
    def event_budget(self) -> int:
        if self.max_events is not None:
            return int(self.max_events)
        return int(64 * self.n * (1.0 + self.kappa * self.t_end))

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed % 2**64)

    @classmethod
    def from_total(cls, n: int, lam: float, **kwargs) -> "SimConfig":
        """Split ``n`` monomers between the sites with ratio n1/n0 close to ``lam``."""
        n0 = int(round(n / (1.0 + lam)))
        return cls(n0=n0, n1=n - n0, **kwargs)


def snapshot_grid(t_end: float, dt: float) -> tuple:
    """Evenly spaced times dt, 2dt, ... up to t_end (t_end itself included)."""
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    k = int(math.floor(t_end / dt + 1e-9))
    times = [round(i * dt, 12) for i in range(0, k + 1)]
    if times[-1] < t_end - 1e-12:
        times.append(t_end)
    return tuple(times)
