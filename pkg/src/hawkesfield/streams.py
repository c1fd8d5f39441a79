"""Reproducible per-neuron randomness.

Each neuron i is driven by one planar Poisson measure on (time, level) space
with unit intensity.  We realize that measure lazily as a stack of dyadic
level bands [0,1), [1,2), [2,4), ...; band j of neuron i is an autonomous
homogeneous Poisson clock seeded from (master_seed, replication, i, j), so
the realized points are a deterministic function of the key and do not
depend on which simulator consumes them.  Every sampler in this package
(finite network, limit process, coupled pair) thins the SAME sheet points,
which is what makes shared-noise couplings and pathwise monotonicity
comparisons between runs meaningful.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RngContract", "BandClock", "SheetScheduler", "band_bounds", "bands_needed"]

# spawn_key kind tags; stable, they define the stream layout
KIND_SHEET = 0
KIND_POSITIONS = 1
KIND_GLOBAL = 2
KIND_MISC = 3

_BLOCK = 32


@dataclass(frozen=True)
class RngContract:
    """Master seed plus the deterministic stream derivation rule.

    Streams are numpy PCG64 generators keyed by
    ``SeedSequence(seed, spawn_key=(kind, replication, index, sub))``.
    Same key, same stream; distinct keys give computationally independent
    streams.  Streams of replication r never change when more replications
    are added.
    """

    seed: int

    def _gen(self, kind: int, rep: int, index: int, sub: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(kind, rep, index, sub))
        return np.random.Generator(np.random.PCG64(ss))

    def sheet_stream(self, replication: int, neuron: int, band: int) -> np.random.Generator:
        return self._gen(KIND_SHEET, replication, neuron, band)

    def position_stream(self, replication: int = 0) -> np.random.Generator:
        return self._gen(KIND_POSITIONS, replication, 0, 0)

    def global_stream(self, replication: int = 0) -> np.random.Generator:
        return self._gen(KIND_GLOBAL, replication, 0, 0)

    def misc_stream(self, tag: int, replication: int = 0) -> np.random.Generator:
        return self._gen(KIND_MISC, replication, tag, 0)


def band_bounds(j: int) -> tuple[float, float]:
    """Level range [lo, hi) of dyadic band j."""
    if j == 0:
        return 0.0, 1.0
    return float(2 ** (j - 1)), float(2 ** j)


def bands_needed(level: float) -> int:
    """Number of bands whose union [0, 2^k) covers intensities below ``level``."""
    if level <= 1.0:
        return 1
    return 1 + max(1, math.ceil(math.log2(level)))


def bands_needed_vec(levels: np.ndarray) -> np.ndarray:
    out = np.ones(levels.shape, dtype=np.int64)
    above = levels > 1.0
    if np.any(above):
        out[above] = 1 + np.maximum(1, np.ceil(np.log2(levels[above]))).astype(np.int64)
    return out


class BandClock:
    """Lazy point sequence of one band: times form a rate-(hi-lo) Poisson
    process started at 0, each point carrying an independent level in
    [lo, hi)."""

    __slots__ = ("lo", "hi", "_rate", "_gen", "_t", "_times", "_levels", "_pos")

    def __init__(self, gen: np.random.Generator, band: int):
        self.lo, self.hi = band_bounds(band)
        self._rate = self.hi - self.lo
        self._gen = gen
        self._t = 0.0
        self._times = None
        self._levels = None
        self._pos = 0

    def _refill(self):
        gaps = self._gen.standard_exponential(_BLOCK) / self._rate
        self._times = self._t + np.cumsum(gaps)
        self._levels = self.lo + self._gen.random(_BLOCK) * self._rate
        self._t = float(self._times[-1])
        self._pos = 0

    def next_point(self) -> tuple[float, float]:
        if self._times is None or self._pos >= _BLOCK:
            self._refill()
        t = float(self._times[self._pos])
        z = float(self._levels[self._pos])
        self._pos += 1
        return t, z

    def forward_past(self, t0: float) -> tuple[float, float]:
        """Next point with time >= t0, discarding earlier points."""
        t, z = self.next_point()
        while t < t0:
            t, z = self.next_point()
        return t, z


class SheetScheduler:
    """Priority queue over the band clocks of all neurons of one replication.

    A band is "armed" while exactly one of its future points sits in the
    queue.  The caller declares per-neuron envelopes (upper bounds on the
    intensities it will test against); bands whose lower level exceeds the
    envelope are disarmed lazily and re-armed, fast-forwarded, when the
    envelope rises again.  Skipped points are exactly the points that sat
    above the envelope for their entire skipped interval, hence points every
    consumer would have rejected.
    """

    def __init__(self, rng: RngContract, replication: int, n_neurons: int, horizon: float):
        self._rng = rng
        self._rep = replication
        self._horizon = horizon
        self._clocks: list[list[BandClock | None]] = [[] for _ in range(n_neurons)]
        self._armed: list[list[bool]] = [[] for _ in range(n_neurons)]
        self._covered = np.zeros(n_neurons, dtype=np.int64)  # bands requested so far
        self._heap: list[tuple[float, int, int, float]] = []

    def _arm(self, neuron: int, band: int, now: float):
        clocks = self._clocks[neuron]
        armed = self._armed[neuron]
        while len(clocks) <= band:
            clocks.append(None)
            armed.append(False)
        if armed[band]:
            return
        clock = clocks[band]
        if clock is None:
            clock = BandClock(self._rng.sheet_stream(self._rep, neuron, band), band)
            clocks[band] = clock
        t, z = clock.forward_past(now)
        if t <= self._horizon:
            heapq.heappush(self._heap, (t, neuron, band, z))
            armed[band] = True
        # else: no more points before the horizon; leave disarmed for good

    def ensure_level(self, neuron: int, level: float, now: float):
        """Arm bands of ``neuron`` so the live stack covers ``level``."""
        want = bands_needed(level)
        for j in range(want):
            self._arm(neuron, j, now)
        if want > self._covered[neuron]:
            self._covered[neuron] = want

    def ensure_levels(self, levels: np.ndarray, now: float):
        """Vectorized ensure_level over all neurons (used after jumps)."""
        need = bands_needed_vec(levels)
        for i in np.nonzero(need > self._covered)[0]:
            self.ensure_level(int(i), float(levels[i]), now)

    def pop(self):
        """Earliest pending point as (t, neuron, band, level), or None."""
        if not self._heap:
            return None
        t, neuron, band, z = heapq.heappop(self._heap)
        self._armed[neuron][band] = False
        return t, neuron, band, z

    def advance(self, neuron: int, band: int, envelope: float):
        """Re-arm the clock whose point was just consumed, unless the
        neuron's envelope fell below the band (lazy drop)."""
        clock = self._clocks[neuron][band]
        if band > 0 and clock.lo >= envelope:
            self._covered[neuron] = min(self._covered[neuron], band)
            return
        t, z = clock.next_point()
        if t <= self._horizon:
            heapq.heappush(self._heap, (t, neuron, band, z))
            self._armed[neuron][band] = True
