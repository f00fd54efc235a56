"""Piecewise-constant probability densities on uniform cell partitions.

Densities are stored as per-cell heights (mass per unit length); cell masses
("weights") are derived from them. Cells are half-open ``[l, r)`` except the
last one, which is closed, so every point of the domain has exactly one cell.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from ._csvio import read_csv, write_csv
from .errors import MetastableError

NORM_TOL = 1e-9
WEIGHT_TOL = 1e-12
SIMPSON_SUBINTERVALS = 64
DENSITY_CSV_HEADER = ("cell_lo", "cell_hi", "height")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CellPartition:
    """Uniform partition of ``[lo, hi]`` into ``n_cells`` equal cells."""

    lo: float
    hi: float
    n_cells: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise MetastableError(f"empty domain [{self.lo}, {self.hi}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise MetastableError(f"n_cells must be a positive integer, got {self.n_cells}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def width(self):
        return (self.hi - self.lo) / self.n_cells

    @property
    def edges(self):
        k = np.arange(self.n_cells + 1)
        e = self.lo + self.length * k / self.n_cells
        e[-1] = self.hi
        return e

    def cell_index(self, x):
        """Index of the cell holding ``x`` (vectorised, 0-based)."""
        x = np.asarray(x, dtype=float)
        if np.any((x < self.lo) | (x > self.hi)):
            raise MetastableError(f"point outside [{self.lo}, {self.hi}]")
        idx = np.floor((x - self.lo) * self.n_cells / self.length).astype(np.int64)
        return np.clip(idx, 0, self.n_cells - 1)


class PiecewiseConstantDensity:
    """A pdf constant on each cell of a :class:`CellPartition`.

    Parameters
    ----------
    partition : CellPartition
    heights : array_like
        Per-cell density heights, non-negative, integrating to one.
    """

    __slots__ = ("partition", "heights")

    def __init__(self, partition, heights):
        heights = _frozen(heights)
        if heights.shape != (partition.n_cells,):
            raise MetastableError(
                f"expected {partition.n_cells} heights, got shape {heights.shape}")
        if np.any(heights < 0) or not np.all(np.isfinite(heights)):
            raise MetastableError("density heights must be finite and non-negative")
        total = float(heights.sum() * partition.width)
        if abs(total - 1.0) > NORM_TOL:
            raise MetastableError(f"density integrates to {total!r}, not 1")
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "heights", heights)

    def __setattr__(self, name, value):
        raise AttributeError("PiecewiseConstantDensity is immutable")

    def __eq__(self, other):
        if not isinstance(other, PiecewiseConstantDensity):
            return NotImplemented
        return self.partition == other.partition and np.array_equal(self.heights, other.heights)

    def __repr__(self):
        p = self.partition
        return f"PiecewiseConstantDensity([{p.lo}, {p.hi}], n_cells={p.n_cells})"

    @property
    def domain(self):
        return (self.partition.lo, self.partition.hi)

    @property
    def weights(self):
        return self.heights * self.partition.width

    def __call__(self, x):
        return self.heights[self.partition.cell_index(x)]

    def to_csv(self, path):
        e = self.partition.edges
        rows = [(float(e[i]), float(e[i + 1]), float(h)) for i, h in enumerate(self.heights)]
        return write_csv(path, DENSITY_CSV_HEADER, rows)

    @classmethod
    def from_csv(cls, path):
        rows = np.array(read_csv(path, DENSITY_CSV_HEADER), dtype=float)
        partition = CellPartition(rows[0, 0], rows[-1, 1], len(rows))
        return cls(partition, rows[:, 2])


def check_weights(v):
    """Validate a weight vector (non-negative cell masses summing to one)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise MetastableError("weight vector must be a non-empty 1-d sequence")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise MetastableError("weights must be finite and non-negative")
    if abs(v.sum() - 1.0) > WEIGHT_TOL:
        raise MetastableError(f"weights sum to {v.sum()!r}, not 1")
    return v


def discretize_density(f0, n_cells, domain=(0.0, 1.0)):
    """Cell masses of a pdf on a uniform partition.

    Each cell integral is a composite Simpson rule on 64 subintervals; the
    result is renormalised so the masses sum to one exactly.

    Parameters
    ----------
    f0 : callable
        Pointwise pdf. Vectorised callables are used directly; scalar ones
        are wrapped with :func:`numpy.vectorize`.
    n_cells : int
    domain : tuple of float, optional

    Returns
    -------
    numpy.ndarray
        Weight vector of length ``n_cells``.
    """
    part = CellPartition(domain[0], domain[1], n_cells)
    e = part.edges
    t = np.linspace(0.0, 1.0, SIMPSON_SUBINTERVALS + 1)
    x = e[:-1, None] + (e[1:] - e[:-1])[:, None] * t[None, :]
    try:
        y = np.asarray(f0(x), dtype=float)
        if y.shape != x.shape:
            raise ValueError
    except (TypeError, ValueError):
        y = np.vectorize(lambda s: float(f0(s)), otypes=[float])(x)
    if not np.all(np.isfinite(y)):
        raise MetastableError("f0 produced non-finite samples")
    if np.any(y < 0):
        raise MetastableError("f0 takes negative values; not a pdf")
    v = integrate.simpson(y, x=x, axis=1)
    total = v.sum()
    if abs(total - 1.0) > 1e-3:
        raise MetastableError(f"f0 integrates to {total:.6g} on the domain; not a pdf")
    v = np.clip(v, 0.0, None) / total
    # absorb the last rounding ulp so the masses sum to 1 in floating point
    v[np.argmax(v)] += 1.0 - v.sum()
    return v


def from_weights(v, domain=(0.0, 1.0)):
    """Piecewise-constant density whose cell masses are ``v``."""
    v = check_weights(v)
    part = CellPartition(domain[0], domain[1], v.size)
    return PiecewiseConstantDensity(part, v * part.n_cells / part.length)


def mirror(d):
    """Reflect a density through the origin: ``x -> -x``."""
    p = d.partition
    return PiecewiseConstantDensity(CellPartition(-p.hi, -p.lo, p.n_cells), d.heights[::-1])


def convex_combination(d_a, d_b, alpha):
    """``alpha * d_a + (1 - alpha) * d_b`` on the union of two adjacent domains.

    ``d_a`` must live immediately to the left of ``d_b`` with the same cell
    width, so the union is again a uniform partition.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise MetastableError(f"alpha must lie in [0, 1], got {alpha}")
    pa, pb = d_a.partition, d_b.partition
    if pa.hi != pb.lo:
        raise MetastableError("component domains must be adjacent (left, right)")
    if pa.n_cells != pb.n_cells or not np.isclose(pa.width, pb.width, rtol=0, atol=1e-15):
        raise MetastableError("components need equal cell counts and widths")
    part = CellPartition(pa.lo, pb.hi, pa.n_cells + pb.n_cells)
    heights = np.concatenate([alpha * d_a.heights, (1.0 - alpha) * d_b.heights])
    return PiecewiseConstantDensity(part, heights)


def l1_distance(d1, d2):
    """Exact L1 distance of two piecewise-constant densities on one domain."""
    if d1.domain != d2.domain:
        raise MetastableError(f"domains differ: {d1.domain} vs {d2.domain}")
    if d1.partition == d2.partition:
        return float(np.abs(d1.heights - d2.heights).sum() * d1.partition.width)
    e = np.union1d(d1.partition.edges, d2.partition.edges)
    mid = 0.5 * (e[:-1] + e[1:])
    diff = np.abs(d1(mid) - d2(mid))
    return float(np.sum(diff * np.diff(e)))


def integrate_over(d, interval):
    """Mass of ``d`` on ``interval = (a, b)``, exact for piecewise constants."""
    a, b = float(interval[0]), float(interval[1])
    p = d.partition
    if a < p.lo or b > p.hi:
        raise MetastableError(f"interval [{a}, {b}] not inside [{p.lo}, {p.hi}]")
    if b <= a:
        return 0.0
    e = p.edges
    overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
    return float(np.dot(d.heights, overlap))


def truncated_bump(center, scale, domain=(0.0, 1.0)):
    """Normal bump truncated (and renormalised) to ``domain``; a vectorised pdf."""
    lo, hi = domain
    dist = stats.truncnorm((lo - center) / scale, (hi - center) / scale, loc=center, scale=scale)
    return dist.pdf


EXAMPLE_WEIGHTS = np.array([0, 1, 2, 3, 4, 60, 4, 3, 2, 1], dtype=float) / 80.0


def builtin_weights(name, n_cells=10):
    """Named target weight vectors.

    ``example10`` is the ten-cell single-peak vector used throughout the
    worked example; ``one_peak`` discretises a narrow truncated normal at
    0.55; ``two_peak`` an equal mixture of bumps at 0.25 and 0.75.
    """
    if name == "example10":
        if n_cells != 10:
            raise MetastableError("example10 is defined for N = 10 only")
        return EXAMPLE_WEIGHTS.copy()
    if name == "one_peak":
        return discretize_density(truncated_bump(0.55, 0.05), n_cells)
    if name == "two_peak":
        b1, b2 = truncated_bump(0.25, 0.04), truncated_bump(0.75, 0.04)
        return discretize_density(lambda x: 0.5 * b1(x) + 0.5 * b2(x), n_cells)
    raise MetastableError(f"unknown builtin density {name!r}")
