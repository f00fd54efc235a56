"""Row-stochastic matrices with a prescribed left-invariant vector.

Given cell masses ``v`` and retention parameters ``beta`` (each in (0, 1)),

    M = diag(beta) + (1 - beta) alpha^T / sum(alpha),   alpha_j = v_j (1 - beta_j)

is row-stochastic and ``v M = v``.
"""

from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from ._csvio import read_csv, write_csv
from .density import check_weights
from .errors import ConvergenceError, MetastableError

DEFAULT_BETA = 0.4


def check_beta(beta, n):
    """Broadcast and validate retention parameters; each must be in (0, 1)."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,)).copy()
    if np.any(beta <= 0) or np.any(beta >= 1) or not np.all(np.isfinite(beta)):
        raise MetastableError("retention parameters must satisfy 0 < beta_i < 1")
    return beta


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """The matrix ``M`` together with the ``v`` and ``beta`` that produced it."""

    entries: np.ndarray
    v: np.ndarray
    beta: np.ndarray

    @property
    def n(self):
        return self.entries.shape[0]

    def to_csv(self, path):
        """Write ``M`` as bare CSV plus a ``.meta.json`` sidecar holding v and beta."""
        path = Path(path)
        write_csv(path, None, (list(map(float, row)) for row in self.entries))
        meta = {"v": [float(x) for x in self.v], "beta": [float(x) for x in self.beta]}
        sidecar = path.with_suffix(".meta.json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        entries = np.array(read_csv(path), dtype=float)
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        return cls(_ro(entries), _ro(meta["v"]), _ro(meta["beta"]))


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_transition_matrix(v, beta=DEFAULT_BETA):
    """Build ``M`` from cell masses ``v`` and retention parameters ``beta``.

    Parameters
    ----------
    v : array_like
        Weight vector (non-negative, sums to one).
    beta : float or array_like
        Scalar or per-cell retention in (0, 1).

    Returns
    -------
    TransitionMatrix
    """
    v = check_weights(v)
    beta = check_beta(beta, v.size)
    alpha = v * (1.0 - beta)
    total = alpha.sum()
    if total <= 0:
        raise MetastableError("all weights are zero; the rank-one part is undefined")
    m = np.outer(1.0 - beta, alpha / total)
    m[np.diag_indices_from(m)] += beta
    return TransitionMatrix(_ro(m), _ro(v), _ro(beta))


def verify_left_invariant(m, v):
    """``max_j |(v M)_j - v_j|``."""
    m = np.asarray(getattr(m, "entries", m), dtype=float)
    v = np.asarray(v, dtype=float)
    if m.shape != (v.size, v.size):
        raise MetastableError(f"shape mismatch: M {m.shape}, v {v.shape}")
    return float(np.max(np.abs(v @ m - v)))


@dataclass(frozen=True)
class StationaryVector:
    weights: np.ndarray
    residual: float
    iterations: int
    unique: bool


def stationary_vector(m, tol=1e-12, max_iters=10**6):
    """Left power iteration for the stationary vector of a row-stochastic matrix.

    Starts from the uniform vector and stops when ``||w M - w||_inf <= tol``.
    The result is flagged non-unique when eigenvalue one is repeated (for
    instance the identity matrix, for which the start vector is returned).

    Raises
    ------
    ConvergenceError
        If ``max_iters`` is exhausted.
    """
    m = np.asarray(getattr(m, "entries", m), dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise MetastableError("matrix must be square")
    if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-10:
        raise MetastableError("matrix is not row-stochastic")
    w = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(1, max_iters + 1):
        nxt = w @ m
        nxt /= nxt.sum()
        residual = float(np.max(np.abs(nxt - w)))
        w = nxt
        if residual <= tol:
            break
    else:
        raise ConvergenceError("power iteration did not converge", residual, max_iters, w)
    ev = np.linalg.eigvals(m)
    unique = int(np.sum(np.abs(ev - 1.0) < 1e-9)) == 1
    return StationaryVector(_ro(w), residual, it, unique)
