"""Invariant densities through the transfer (Frobenius-Perron) operator.

Two engines: the exact finite-dimensional action of a semi-Markov map on
piecewise-constant densities, and Ulam's discretisation for arbitrary
piecewise-linear maps. Ulam entries are computed from branch geometry in
closed form, never sampled.
"""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np
from scipy import sparse

from . import _kernels
from .density import CellPartition, PiecewiseConstantDensity, check_weights
from .errors import ConvergenceError, MetastableError

POWER_TOL = 1e-10
POWER_MAX_ITERS = 10**6
_BLOCK = 12


@dataclass(frozen=True, eq=False)
class UlamMatrix:
    """Cell-to-cell transition fractions of a map on ``n`` equal bins.

    ``matrix[i, j]`` is the fraction of bin ``i`` whose image lies in bin ``j``.
    Stored as CSR; each row has a few contiguous runs of nonzeros.
    """

    matrix: sparse.csr_matrix
    partition: CellPartition

    @property
    def n(self):
        return self.partition.n_cells

    def toarray(self):
        return self.matrix.toarray()

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """An invariant-density estimate with its provenance.

    ``method`` is one of ``exact-semi-markov``, ``ulam`` or ``orbit``.
    """

    density: PiecewiseConstantDensity
    method: str
    residual: float
    iterations: int
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        """Density CSV plus a ``.meta.json`` sidecar with the diagnostics."""
        path = Path(path)
        self.density.to_csv(path)
        info = {"method": self.method, "residual": self.residual, "iterations": self.iterations}
        info.update(self.meta)
        path.with_suffix(".meta.json").write_text(
            json.dumps(info, indent=2, sort_keys=True, default=_plain) + "\n")
        return path


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def exact_fp_density(m, partition=None):
    """Invariant density of the semi-Markov map built from ``m``.

    The heights are ``N v_i / length``; the transfer identity
    ``h_j = sum_i h_i m[i][j]`` is verified and its worst violation returned
    as the residual.

    Raises
    ------
    MetastableError
        If the identity fails by more than 1e-10 (``m`` was not built from ``v``).
    """
    v = check_weights(m.v)
    entries = np.asarray(m.entries)
    if partition is None:
        partition = CellPartition(0.0, 1.0, v.size)
    if partition.n_cells != v.size:
        raise MetastableError("partition size does not match the matrix")
    heights = v * partition.n_cells / partition.length
    residual = float(np.max(np.abs(heights @ entries - heights)))
    if residual > 1e-10:
        raise MetastableError(f"transfer identity violated by {residual:.3e}; inconsistent matrix")
    return DensityEstimate(PiecewiseConstantDensity(partition, heights),
                           "exact-semi-markov", residual, 0)


def ulam_matrix(pl_map, n):
    """Ulam matrix of a piecewise-linear map on ``n`` equal bins of its domain."""
    n = int(n)
    if n < 1:
        raise MetastableError("need at least one bin")
    lo, hi = pl_map.domain
    b_lo, b_hi, b_ylo, b_slope = pl_map.kernel_arrays()
    rows, cols, vals = _kernels.ulam_entries(
        np.ascontiguousarray(b_lo), np.ascontiguousarray(b_hi),
        np.ascontiguousarray(b_ylo), np.ascontiguousarray(b_slope), lo, hi, n)
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return UlamMatrix(mat, CellPartition(lo, hi, n))


def _left_power(mat_t, w, tol, max_iters):
    residual = math.inf
    for it in range(1, max_iters + 1):
        nxt = mat_t @ w
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - w).sum())
        w = nxt
        if residual <= tol:
            return w, residual, it
    raise ConvergenceError("Ulam power iteration did not converge", residual, max_iters, w)


def stationary_density(u, tol=POWER_TOL, max_iters=POWER_MAX_ITERS, start=None):
    """Stationary density of an Ulam matrix by left power iteration.

    Parameters
    ----------
    u : UlamMatrix
    tol : float
        Stop when ``||w U - w||_1 <= tol``.
    max_iters : int
    start : array_like, optional
        Initial probability vector; uniform by default.

    Raises
    ------
    ConvergenceError
        Carrying the last :class:`DensityEstimate` in ``last``. Expect this for
        very small gates, where the spectral gap closes.
    """
    n = u.n
    w = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    mat_t = u.matrix.T.tocsr()
    p = u.partition
    try:
        w, residual, it = _left_power(mat_t, w, tol, max_iters)
    except ConvergenceError as exc:
        last = DensityEstimate(_density_from_mass(p, exc.last), "ulam", exc.residual, exc.iterations)
        raise ConvergenceError("Ulam power iteration did not converge",
                               exc.residual, exc.iterations, last) from None
    return DensityEstimate(_density_from_mass(p, w), "ulam", residual, it)


def _density_from_mass(p, w):
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    return PiecewiseConstantDensity(p, w * p.n_cells / p.length)


@dataclass(frozen=True)
class SpectralDiagnostics:
    lambda2_modulus: float
    iteration_estimate: float
    converged: bool


def spectral_diagnostics(u, tol=POWER_TOL, max_iters=20000, seed=0, stationary=None):
    """Modulus of the second eigenvalue of an Ulam matrix.

    Deflated left power iteration: the stationary vector is projected out
    (the right eigenvector of eigenvalue one is the constant vector), and the
    mean log growth over blocks of steps estimates ``log|lambda_2|``. Block
    averaging also settles when several eigenvalues share the modulus
    ``|lambda_2|`` with different phases, where the per-step growth keeps
    oscillating.

    Returns
    -------
    SpectralDiagnostics
        ``iteration_estimate`` is ``ceil(log(tol) / log|lambda_2|)``, the number
        of power iterations needed to reach ``tol``. When the iteration does not
        settle, ``converged`` is False and the values are NaN.
    """
    n = u.n
    mat_t = u.matrix.T.tocsr()
    if stationary is None:
        try:
            pi = stationary_density(u, tol=tol).density.weights
        except ConvergenceError as exc:
            pi = exc.last.density.weights
    else:
        pi = np.asarray(stationary, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x -= x.sum() * pi
    x /= np.linalg.norm(x)
    prev = math.nan
    for _ in range(max(max_iters // _BLOCK, 1)):
        log_growth = 0.0
        for _ in range(_BLOCK):
            y = mat_t @ x
            y -= y.sum() * pi
            ny = np.linalg.norm(y)
            if ny < 1e-300:
                return SpectralDiagnostics(0.0, 1.0, True)
            log_growth += math.log(ny)
            x = y / ny
        est = math.exp(log_growth / _BLOCK)
        if abs(est - prev) <= 1e-10 * max(est, 1e-300):
            return SpectralDiagnostics(est, _iters_needed(est, tol), True)
        prev = est
    return SpectralDiagnostics(math.nan, math.nan, False)


def _iters_needed(lam, tol):
    if lam <= 0.0:
        return 1.0
    if lam >= 1.0:
        return math.inf
    return float(math.ceil(math.log(tol) / math.log(lam)))
