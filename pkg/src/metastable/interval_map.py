"""Piecewise-linear expanding interval maps.

Builds the semi-Markov map ``g`` on ``[0, 1]`` from a transition matrix, the
odd extension ``T`` on ``[-1, 1]`` with invariant halves ``A = [-1, 0]`` and
``B = [0, 1]``, and the gated map ``T_eps`` whose escape gates at the two ends
of the domain couple the halves. Also checks the structural conditions under
which the gated family is metastable.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from ._csvio import read_csv, write_csv
from .density import CellPartition, integrate_over
from .errors import MetastableError

BRANCH_CSV_HEADER = ("dom_lo", "dom_hi", "slope", "intercept", "target_cell")
DEFAULT_GATE_SLOPE = 2.0
DEFAULT_DEPTH = 50
ORBIT_TOL = 1e-9
_TILE_TOL = 1e-12


@dataclass(frozen=True)
class AffineBranch:
    """Affine piece on ``[dom_lo, dom_hi)`` taking the values ``y_lo -> y_hi``.

    ``target`` records which cell the branch covers: ``j > 0`` is cell ``j`` of
    ``B``, ``-j`` its mirror image in ``A``, and ``0`` marks a gate.
    """

    dom_lo: float
    dom_hi: float
    y_lo: float
    y_hi: float
    target: int = 0

    def __post_init__(self):
        if not self.dom_lo < self.dom_hi:
            raise MetastableError(f"empty branch [{self.dom_lo}, {self.dom_hi})")
        if not abs(self.slope) > 1.0:
            raise MetastableError(
                f"branch on [{self.dom_lo}, {self.dom_hi}) has slope {self.slope}; need |slope| > 1")

    @property
    def slope(self):
        return (self.y_hi - self.y_lo) / (self.dom_hi - self.dom_lo)

    @property
    def intercept(self):
        return self.y_lo - self.slope * self.dom_lo

    def __call__(self, x):
        return self.y_lo + self.slope * (x - self.dom_lo)

    def clip(self, lo, hi):
        """Restriction to ``[lo, hi)``, re-anchored at the new ends."""
        lo, hi = max(lo, self.dom_lo), min(hi, self.dom_hi)
        y0 = self.y_lo if lo == self.dom_lo else self(lo)
        y1 = self.y_hi if hi == self.dom_hi else self(hi)
        return AffineBranch(lo, hi, y0, y1, self.target)


class PiecewiseLinearMap:
    """Ordered affine branches tiling ``domain``.

    Branch domains are half-open with the last one closed; a breakpoint is
    evaluated on the branch to its right.

    Parameters
    ----------
    domain : tuple of float
    branches : sequence of AffineBranch
        Sorted, contiguous, covering ``domain``.
    cells : CellPartition, optional
        Markov partition the map was built on (provenance for gate checks).
    """

    def __init__(self, domain, branches, cells=None):
        lo, hi = float(domain[0]), float(domain[1])
        branches = tuple(branches)
        if not branches:
            raise MetastableError("map needs at least one branch")
        if branches[0].dom_lo != lo or branches[-1].dom_hi != hi:
            raise MetastableError("branches do not cover the domain")
        for a, b in zip(branches, branches[1:]):
            if a.dom_hi != b.dom_lo:
                raise MetastableError(f"branches not contiguous at {a.dom_hi} / {b.dom_lo}")
        for br in branches:
            ys = (br.y_lo, br.y_hi)
            if min(ys) < lo - _TILE_TOL or max(ys) > hi + _TILE_TOL:
                raise MetastableError(f"branch image {ys} leaves [{lo}, {hi}]")
        self.domain = (lo, hi)
        self.branches = branches
        self.cells = cells
        self._lo = np.array([b.dom_lo for b in branches])
        self._hi = np.array([b.dom_hi for b in branches])
        self._ylo = np.array([b.y_lo for b in branches])
        self._slope = np.array([b.slope for b in branches])
        for a in (self._lo, self._hi, self._ylo, self._slope):
            a.setflags(write=False)

    def __len__(self):
        return len(self.branches)

    def __repr__(self):
        return f"PiecewiseLinearMap({self.domain}, {len(self)} branches)"

    @property
    def breakpoints(self):
        return np.append(self._lo, self._hi[-1])

    @property
    def slopes(self):
        return self._slope

    def kernel_arrays(self):
        """Contiguous ``(dom_lo, dom_hi, y_lo, slope)`` arrays for the kernels."""
        return self._lo, self._hi, self._ylo, self._slope

    def branch_index(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any((x < lo) | (x > hi)) or np.any(np.isnan(x)):
            raise MetastableError(f"point outside domain [{lo}, {hi}]")
        return np.searchsorted(self._lo, x, side="right") - 1

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        k = self.branch_index(x)
        y = self._ylo[k] + self._slope[k] * (x - self._lo[k])
        # closed right end reports the stored end value exactly
        y = np.where(x == self.domain[1], self.branches[-1].y_hi, y)
        return float(y) if scalar else y

    evaluate = __call__

    def derivative_abs(self, x):
        k = self.branch_index(x)
        d = np.abs(self._slope[k])
        return float(d) if np.ndim(x) == 0 else d

    def left_limit(self, x):
        """Limit from the left at an interior point."""
        k = int(np.searchsorted(self._lo, x, side="left")) - 1
        if k < 0:
            raise MetastableError("no left limit at the domain start")
        b = self.branches[k]
        return b.y_hi if x == b.dom_hi else float(b(x))

    def continuity_defect(self):
        """Largest jump at an interior breakpoint."""
        jumps = [abs(a.y_hi - b.y_lo) for a, b in zip(self.branches, self.branches[1:])]
        return max(jumps, default=0.0)

    def to_csv(self, path):
        rows = [(b.dom_lo, b.dom_hi, b.slope, b.intercept, b.target) for b in self.branches]
        return write_csv(path, BRANCH_CSV_HEADER, rows)

    @classmethod
    def from_csv(cls, path):
        branches = []
        for lo, hi, s, c, t in read_csv(path, BRANCH_CSV_HEADER):
            lo, hi, s, c = float(lo), float(hi), float(s), float(c)
            branches.append(AffineBranch(lo, hi, s * lo + c, s * hi + c, int(t)))
        return cls((branches[0].dom_lo, branches[-1].dom_hi), branches)


def build_semi_markov_map(m, partition=None):
    """Semi-Markov map preserving the piecewise-constant density of ``m``.

    Cell ``I_i`` (1-based) is cut into pieces of width ``m[i][k] * w``. For odd
    ``i`` the pieces are taken in order ``k = 1..N`` and mapped increasingly
    onto ``I_k``; for even ``i`` in order ``k = N..1`` and mapped decreasingly
    onto ``I_k``. Each piece onto ``I_k`` has width proportional to ``m[i][k]``
    whatever the row parity, so mass ``m[i][k]`` flows from ``I_i`` into
    ``I_k`` and the map stays continuous. Zero entries produce no branch.

    Parameters
    ----------
    m : TransitionMatrix or array_like
    partition : CellPartition, optional
        Defaults to ``N`` equal cells of ``[0, 1]``.
    """
    entries = np.asarray(getattr(m, "entries", m), dtype=float)
    n = entries.shape[0]
    if entries.shape != (n, n):
        raise MetastableError("transition matrix must be square")
    if partition is None:
        partition = CellPartition(0.0, 1.0, n)
    if partition.n_cells != n:
        raise MetastableError(f"matrix is {n}x{n} but partition has {partition.n_cells} cells")
    if np.any(entries >= 1.0):
        raise MetastableError("entry m[i][j] = 1 gives a slope-one branch; map not expanding")
    if np.any(entries < 0):
        raise MetastableError("negative transition entry")
    e = partition.edges
    w = partition.width
    branches = []
    for i in range(n):
        order = range(n) if i % 2 == 0 else range(n - 1, -1, -1)
        cuts = e[i] + w * np.cumsum([entries[i, k] for k in order])
        cuts[-1] = e[i + 1]
        start = e[i]
        for k, stop in zip(order, cuts):
            stop = float(stop)
            if entries[i, k] == 0.0 or stop <= start:
                continue
            if i % 2 == 0:
                y0, y1 = e[k], e[k + 1]
            else:
                y0, y1 = e[k + 1], e[k]
            branches.append(AffineBranch(float(start), stop, float(y0), float(y1), k + 1))
            start = stop
        if start != e[i + 1]:
            # dropped sub-ulp pieces: stretch the last branch to the cell edge
            last = branches[-1]
            branches[-1] = AffineBranch(last.dom_lo, float(e[i + 1]), last.y_lo, last.y_hi, last.target)
    return PiecewiseLinearMap((partition.lo, partition.hi), branches, cells=partition)


def mirror_double(g):
    """Odd extension of ``g`` on ``[0, 1]`` to ``T`` on ``[-1, 1]``.

    ``T(x) = g(x)`` on ``[0, 1]`` and ``T(x) = -g(-x)`` on ``[-1, 0)``.
    """
    if g.domain != (0.0, 1.0):
        raise MetastableError("mirror_double expects a map on [0, 1]")
    if g(0.0) != 0.0:
        raise MetastableError(f"g(0) = {g(0.0)} != 0; the boundary point would move")
    left = [AffineBranch(-b.dom_hi, -b.dom_lo, -b.y_hi, -b.y_lo, -b.target)
            for b in reversed(g.branches)]
    cells = None
    if g.cells is not None:
        cells = CellPartition(-1.0, 1.0, 2 * g.cells.n_cells)
    return PiecewiseLinearMap((-1.0, 1.0), left + list(g.branches), cells=cells)


@dataclass(frozen=True, eq=False)
class MetastableSystem:
    """Base map ``T``, its gated perturbation, and the derived hole geometry."""

    base: PiecewiseLinearMap
    perturbed: PiecewiseLinearMap
    eps_A: float
    eps_B: float
    gate_slope: float
    boundary: float = 0.0
    transition: object = None
    infinitesimal_holes: np.ndarray = field(default=None)

    @property
    def hole_A(self):
        return (-1.0, -1.0 + self.eps_A)

    @property
    def hole_B(self):
        return (1.0 - self.eps_B, 1.0)

    @property
    def gate_images(self):
        return (self.gate_slope * self.eps_A, self.gate_slope * self.eps_B)


def _outer_cell_width(T):
    if T.cells is not None:
        return T.cells.width
    # no recorded Markov partition (e.g. a replayed CSV): only the half-length bound applies
    return 1.0


def open_gates(T, eps_A, eps_B, gate_slope=DEFAULT_GATE_SLOPE, transition=None):
    """Replace ``T`` near ``-1`` and ``1`` by escape gates.

    ``[1 - eps_B, 1]`` maps decreasingly onto ``[-gate_slope * eps_B, 0]``
    with ``1 - eps_B -> 0``; ``[-1, -1 + eps_A)`` is its mirror image, mapping
    decreasingly onto ``(0, gate_slope * eps_A]`` with ``-1 + eps_A -> 0``.
    Symmetric gates therefore keep an odd ``T`` odd. Elsewhere the map is
    unchanged.

    Raises
    ------
    MetastableError
        If a gate is wider than the outermost Markov cell, its image leaves the
        opposite half, or ``gate_slope <= 1``.
    """
    eps_A, eps_B, gate_slope = float(eps_A), float(eps_B), float(gate_slope)
    if T.domain != (-1.0, 1.0):
        raise MetastableError("gates are opened on maps of [-1, 1]")
    if not gate_slope > 1.0:
        raise MetastableError(f"gate_slope must exceed 1, got {gate_slope}")
    width = _outer_cell_width(T)
    for name, eps in (("eps_A", eps_A), ("eps_B", eps_B)):
        if not 0.0 < eps <= width:
            raise MetastableError(f"{name} = {eps} must lie in (0, {width}] (outermost cell width)")
        if gate_slope * eps > 1.0:
            raise MetastableError(
                f"gate image {gate_slope * eps} for {name} leaves the opposite component")
    cut_a, cut_b = -1.0 + eps_A, 1.0 - eps_B
    branches = [AffineBranch(-1.0, cut_a, gate_slope * eps_A, 0.0, 0)]
    for b in T.branches:
        if b.dom_hi <= cut_a or b.dom_lo >= cut_b:
            continue
        branches.append(b.clip(cut_a, cut_b))
    branches.append(AffineBranch(cut_b, 1.0, 0.0, -gate_slope * eps_B, 0))
    perturbed = PiecewiseLinearMap(T.domain, branches, cells=T.cells)
    return MetastableSystem(T, perturbed, eps_A, eps_B, gate_slope,
                            transition=transition,
                            infinitesimal_holes=infinitesimal_holes(T))


def infinitesimal_holes(T, b=0.0):
    """Preimages of the boundary point other than itself, sorted."""
    pts = []
    last = len(T.branches) - 1
    for k, br in enumerate(T.branches):
        if br.y_lo == b:
            x = br.dom_lo
        elif k == last and br.y_hi == b:
            x = br.dom_hi
        else:
            x = br.dom_lo + (b - br.y_lo) / br.slope
            if not br.dom_lo < x < br.dom_hi:
                continue
        pts.append(x)
    pts = np.unique(np.array(pts, dtype=float))
    pts = pts[np.abs(pts - b) > _TILE_TOL]
    if pts.size > 1:
        pts = pts[np.insert(np.diff(pts) > _TILE_TOL, 0, True)]
    return pts


@dataclass(frozen=True)
class HoleMeasures:
    mu_A_hole: float
    mu_B_hole: float
    lhr: float
    infinite: bool


def hole_measures(sys, f_A, f_B):
    """Invariant masses of the two holes and their ratio ``mu_B / mu_A``."""
    mu_a = integrate_over(f_A, sys.hole_A)
    mu_b = integrate_over(f_B, sys.hole_B)
    if mu_a == 0.0:
        return HoleMeasures(mu_a, mu_b, float("inf"), True)
    return HoleMeasures(mu_a, mu_b, mu_b / mu_a, False)


class ConditionReport(dict):
    """Per-condition results keyed ``I1``, ``I2``, ``I3``, ``I4a``, ``I4b``, ``P1``, ``P2``.

    Each value is a dict with at least ``status`` (``pass``, ``fail``,
    ``assumed`` or ``unverified``) and ``detail``.
    """

    HARD = ("I3",)

    @property
    def hard_failures(self):
        return [k for k in self.HARD if self[k]["status"] == "fail"]

    def status(self, key):
        return self[key]["status"]

    def to_json(self):
        return json.dumps(self, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _orbit(T, x, depth):
    out = []
    for _ in range(depth):
        x = float(T(x))
        out.append(x)
    return out


def validate_conditions(sys, f_A, f_B, max_depth=DEFAULT_DEPTH, tol=ORBIT_TOL):
    """Check the metastability conditions that can be checked numerically.

    Orbit-based conditions (I2, I4b) are followed for ``max_depth`` steps only
    and the report says so.
    """
    T, Te, b = sys.base, sys.perturbed, sys.boundary
    h0 = sys.infinitesimal_holes if sys.infinitesimal_holes is not None else infinitesimal_holes(T, b)
    # the gates shrink onto the domain ends, which need not lie in T^-1(b)
    gate_limits = np.array([sys.hole_A[0], sys.hole_B[1]])
    holes = np.union1d(h0, gate_limits)
    crit = T.breakpoints
    report = ConditionReport()

    report["I1"] = {
        "status": "assumed",
        "detail": "each half is semi-Markov and piecewise onto with slopes > 1, so its "
                  "piecewise-constant invariant density is the unique one; not checked beyond construction",
    }

    min_dist, witness = np.inf, None
    for c in crit:
        for k, y in enumerate(_orbit(T, float(c), max_depth), start=1):
            d = float(np.min(np.abs(holes - y)))
            if d < min_dist:
                min_dist, witness = d, {"critical_point": float(c), "k": k, "image": y}
    report["I2"] = {
        "status": "pass" if min_dist > tol else "fail",
        "detail": f"critical orbits followed to depth {max_depth} against infinitesimal holes "
                  "and gate limit points; checked to depth K, not proved",
        "depth": max_depth,
        "min_distance_to_holes": float(min_dist),
        "closest": witness,
    }

    bad = []
    for x in holes:
        side = f_A if x < b else f_B
        h = float(side(x))
        if not h > 0:
            bad.append({"point": float(x), "height": h})
    report["I3"] = {
        "status": "pass" if not bad else "fail",
        "detail": "density heights at every infinitesimal hole and gate limit point",
        "infinitesimal_holes": [float(x) for x in h0],
        "gate_limit_points": [float(x) for x in gate_limits],
        "zero_height_points": bad,
    }

    min_slope = float(np.min(np.abs(T.slopes)))
    i4a = {"status": "pass" if min_slope > 2.0 else "fail", "min_abs_slope": min_slope,
           "detail": f"min |T'| = {min_slope:.6g}"}
    if min_slope <= 2.0 and sys.transition is not None:
        v = np.asarray(sys.transition.v)
        j = int(np.argmax(v))
        col_max = float(np.max(sys.transition.entries[:, j]))
        i4a["detail"] += (
            f"; column {j + 1} carries mass v = {v[j]:.6g}, and v M = v forces some "
            f"m[i][{j + 1}] >= v_{j + 1} (here max {col_max:.6g}), so that branch has slope "
            f"<= {1.0 / col_max:.6g}")
        if v[j] > 0.5:
            i4a["detail"] += "; with v_j > 1/2 the bound |T'| > 2 is impossible"
        i4a["column"] = j + 1
        i4a["column_mass"] = float(v[j])
    report["I4a"] = i4a

    ends = {T.domain[0], b, T.domain[1]}
    periodic = []
    for c in crit:
        c = float(c)
        for k, y in enumerate(_orbit(T, c, max_depth), start=1):
            if abs(y - c) <= tol:
                if not (k == 1 and c in ends):
                    periodic.append({"critical_point": c, "period": k})
                break
    report["I4b"] = {
        "status": "pass" if not periodic else "fail",
        "detail": f"no periodic critical point found up to period {max_depth} "
                  "(fixed points at component ends excepted); checked to depth K, not proved"
        if not periodic else "periodic critical points found",
        "depth": max_depth,
        "periodic": periodic,
    }

    report["P1"] = {
        "status": "unverified",
        "detail": "uniqueness of the perturbed acim is not checked here; see the Ulam "
                  "second-eigenvalue diagnostic for numerical evidence",
    }

    gap = min(b - sys.hole_A[1], sys.hole_B[0] - b)
    fixed = float(Te(b)) == b and float(T(b)) == b
    report["P2"] = {
        "status": "pass" if fixed and gap > tol else "fail",
        "detail": "P2a: boundary point fixed by T and T_eps, gates away from it",
        "T_eps_at_b": float(Te(b)),
        "gate_distance_to_b": float(gap),
    }
    return report
