"""Long trajectories of interval maps: histogram densities and occupation statistics.

The iteration itself runs in the compiled kernel when available. Orbits are
processed in fixed-size chunks so memory does not grow with the number of
steps (only with the number of side switches, which are recorded).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np

from . import _kernels
from ._csvio import write_csv
from .density import CellPartition, PiecewiseConstantDensity, l1_distance
from .errors import MetastableError
from .transfer import DensityEstimate

CHUNK = 1 << 16
CLAMP_FLAG_FRACTION = 1e-4
STATS_CSV_HEADER = ("seed", "steps", "frac_A", "frac_B", "transitions",
                    "mean_res_A", "mean_res_B", "clamps")


@dataclass(frozen=True)
class OrbitConfig:
    """Orbit run parameters.

    Attributes
    ----------
    seed : int
        Seeds the PCG64 generator used only to draw a uniform ``x0``.
    x0 : float or None
        Fixed start point; ``None`` draws it uniformly from the domain.
    burn_in : int
        Leading iterates discarded.
    steps : int
        Total iterations, burn-in included.
    bins : int
        Histogram bins over the map's domain.
    boundary : float
        Points ``x < boundary`` count as side A, the rest as side B.
    """

    seed: int = 0
    x0: float = None
    burn_in: int = 10_000
    steps: int = 10_000_000
    bins: int = 2000
    boundary: float = 0.0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.steps:
            raise MetastableError(
                f"need steps > burn_in >= 0 (steps={self.steps}, burn_in={self.burn_in})")
        if self.bins < 10:
            raise MetastableError(f"need at least 10 histogram bins, got {self.bins}")
        if not 0 <= int(self.seed) < 2**64:
            raise MetastableError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class OccupationStats:
    seed: int
    samples: int
    frac_A: float
    frac_B: float
    transitions: int
    residence_times: np.ndarray
    first_side: str
    mean_residence_A: float
    mean_residence_B: float
    clamps: int
    flagged: bool = field(default=False)

    def residence(self, side):
        """Run lengths spent on ``side`` (``"A"`` or ``"B"``)."""
        if self.residence_times.size == 0:
            return self.residence_times
        offset = 0 if side == self.first_side else 1
        return self.residence_times[offset::2]

    def to_csv(self, path, steps):
        row = (int(self.seed), int(steps), self.frac_A, self.frac_B, self.transitions,
               self.mean_residence_A, self.mean_residence_B, self.clamps)
        return write_csv(path, STATS_CSV_HEADER, [row])


def initial_point(pl_map, cfg):
    if cfg.x0 is not None:
        lo, hi = pl_map.domain
        if not lo <= cfg.x0 <= hi:
            raise MetastableError(f"x0 = {cfg.x0} outside the domain")
        return float(cfg.x0)
    rng = np.random.Generator(np.random.PCG64(int(cfg.seed)))
    lo, hi = pl_map.domain
    return float(rng.uniform(lo, hi))


def simulate_orbit(pl_map, cfg):
    """Iterate ``pl_map`` and histogram the post-burn-in orbit.

    Deterministic given ``(pl_map, cfg)``. The estimate's ``residual`` is the
    L1 distance between the histograms of the first and second halves of the
    recorded orbit, a cheap indicator of sampling error.

    Returns
    -------
    (DensityEstimate, OccupationStats)
    """
    lo, hi = pl_map.domain
    b_lo, _, b_ylo, b_slope = (np.ascontiguousarray(a) for a in pl_map.kernel_arrays())
    part = CellPartition(lo, hi, cfg.bins)
    hist_scale = cfg.bins / (hi - lo)
    hist = np.zeros(cfg.bins, dtype=np.int64)
    runs_buf = np.empty(CHUNK, dtype=np.int64)
    run_chunks = []
    x = initial_point(pl_map, cfg)
    side, run_len, clamps, n_a = -1, 0, 0, 0

    def advance(x, n, record, side, run_len):
        nonlocal clamps, n_a
        while n > 0:
            k = min(n, CHUNK)
            x, n_runs, side, run_len, c, a = _kernels.orbit_chunk(
                b_lo, b_ylo, b_slope, lo, hi, x, k, record, hist, lo, hist_scale,
                cfg.boundary, runs_buf, side, run_len)
            clamps += c
            n_a += a
            if n_runs:
                run_chunks.append(runs_buf[:n_runs].copy())
            n -= k
        return x, side, run_len

    x, _, _ = advance(x, cfg.burn_in, False, -1, 0)
    samples = cfg.steps - cfg.burn_in
    half = samples // 2
    x, side, run_len = advance(x, half, True, side, run_len)
    first_half = hist.copy()
    x, side, run_len = advance(x, samples - half, True, side, run_len)

    run_chunks.append(np.array([run_len], dtype=np.int64))
    runs = np.concatenate(run_chunks)
    first_side = "A" if _first_side(runs, side) == 0 else "B"

    heights = hist / (samples * part.width)
    density = PiecewiseConstantDensity(part, heights / (heights.sum() * part.width))
    residual = 0.0
    if half > 0:
        h1 = first_half / (half * part.width)
        h2 = (hist - first_half) / ((samples - half) * part.width)
        residual = l1_distance(PiecewiseConstantDensity(part, h1 / (h1.sum() * part.width)),
                               PiecewiseConstantDensity(part, h2 / (h2.sum() * part.width)))

    frac_a = n_a / samples
    runs_a = runs[0::2] if first_side == "A" else runs[1::2]
    runs_b = runs[1::2] if first_side == "A" else runs[0::2]
    flagged = clamps > CLAMP_FLAG_FRACTION * cfg.steps
    stats = OccupationStats(
        seed=int(cfg.seed), samples=samples, frac_A=frac_a, frac_B=1.0 - frac_a,
        transitions=runs.size - 1, residence_times=runs, first_side=first_side,
        mean_residence_A=float(runs_a.mean()) if runs_a.size else float("nan"),
        mean_residence_B=float(runs_b.mean()) if runs_b.size else float("nan"),
        clamps=int(clamps), flagged=flagged)
    meta = {"samples": samples, "seed": int(cfg.seed), "clamps": int(clamps),
            "flagged": flagged}
    return DensityEstimate(density, "orbit", residual, cfg.steps, meta), stats


def _first_side(runs, last_side):
    # sides alternate run by run; recover the first from the last
    return last_side if runs.size % 2 == 1 else 1 - last_side


def merge_histograms(estimates):
    """Sample-weighted average of orbit histograms with identical binning.

    The merged ``residual`` is the largest L1 distance from any input to the
    merged density.
    """
    estimates = list(estimates)
    if not estimates:
        raise MetastableError("nothing to merge")
    part = estimates[0].density.partition
    for e in estimates:
        if e.density.partition != part:
            raise MetastableError("histograms have different binning")
    counts = np.array([e.meta.get("samples", 1) for e in estimates], dtype=float)
    heights = sum(c * e.density.heights for c, e in zip(counts, estimates)) / counts.sum()
    merged = PiecewiseConstantDensity(part, heights / (heights.sum() * part.width))
    residual = max(l1_distance(e.density, merged) for e in estimates)
    meta = {"samples": int(counts.sum()), "chains": len(estimates)}
    return DensityEstimate(merged, "orbit", residual, sum(e.iterations for e in estimates), meta)


def simulate_chains(pl_map, cfg, seeds, workers=None):
    """Independent chains with distinct seeds, merged; returns (merged, per-chain results).

    Chains run on ``workers`` threads (default: the CPU count); the kernel
    releases the GIL. Results are in seed order and do not depend on
    ``workers``.
    """
    cfgs = [_with_seed(cfg, s) for s in seeds]
    workers = workers or min(len(cfgs), os.cpu_count() or 1)
    if workers <= 1:
        results = [simulate_orbit(pl_map, c) for c in cfgs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: simulate_orbit(pl_map, c), cfgs))
    return merge_histograms(r[0] for r in results), results


def _with_seed(cfg, seed):
    return OrbitConfig(seed=seed, x0=cfg.x0, burn_in=cfg.burn_in, steps=cfg.steps,
                       bins=cfg.bins, boundary=cfg.boundary)
