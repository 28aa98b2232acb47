"""Rectangular analysis regions and deterministic sample lattices."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

__all__ = ["AnalysisRegion", "lattice_points"]


@dataclass(frozen=True)
class AnalysisRegion:
    """Axis-aligned box of per-dimension [lo, hi] bounds."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ValueError(f"invalid bounds [{lo}, {hi}]")
        # cached per-dimension tuples keep the hot membership test cheap
        object.__setattr__(self, "_lo", tuple(b[0] for b in self.bounds))
        object.__setattr__(self, "_hi", tuple(b[1] for b in self.bounds))
        object.__setattr__(self, "_spans", tuple(b[1] - b[0] for b in self.bounds))

    @classmethod
    def of(cls, *bounds) -> "AnalysisRegion":
        return cls(tuple((float(lo), float(hi)) for lo, hi in bounds))

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self._lo)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self._hi)

    @property
    def span(self) -> np.ndarray:
        return np.array(self._spans)

    def contains(self, point, cushion: float = 0.0) -> bool:
        """Membership test, optionally inflated by ``cushion`` (a fraction
        of each dimension's span) on both sides."""
        for v, lo, hi, span in zip(point, self._lo, self._hi, self._spans):
            pad = cushion * span
            if not (lo - pad <= v <= hi + pad):
                return False
        return True

    def intersect(self, other: "AnalysisRegion") -> "AnalysisRegion":
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        bounds = []
        for (alo, ahi), (blo, bhi) in zip(self.bounds, other.bounds):
            lo, hi = max(alo, blo), min(ahi, bhi)
            if not lo < hi:
                raise ValueError("regions do not overlap")
            bounds.append((lo, hi))
        return AnalysisRegion(tuple(bounds))


def lattice_points(region: AnalysisRegion, count: int, rng_seed: int = 0,
                   jitter: float = 0.4) -> np.ndarray:
    """Stratified sample lattice inside ``region``.

    Each dimension is split into ceil(count**(1/n)) cells; one point is
    placed per cell at its center plus a jitter of up to ``jitter`` cell
    half-widths, drawn from a private RNG seeded with ``rng_seed``. The
    result is fully determined by (region, count, rng_seed, jitter).
    """
    n = region.dimension
    cells = max(1, math.ceil(count ** (1.0 / n)))
    rng = random.Random(rng_seed)
    lower, span = region.lower, region.span
    cell = span / cells
    axes = [range(cells)] * n
    points = np.empty((cells ** n, n))
    idx = np.zeros(n, dtype=int)
    for row in range(cells ** n):
        for d in range(n):
            center = lower[d] + (idx[d] + 0.5) * cell[d]
            points[row, d] = center + (rng.uniform(-jitter, jitter)) * cell[d]
        # odometer increment over the cell grid, last dimension fastest
        for d in range(n - 1, -1, -1):
            idx[d] += 1
            if idx[d] < cells:
                break
            idx[d] = 0
    return points
