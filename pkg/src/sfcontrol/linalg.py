"""Dense linear-algebra kernels used by every other module.

Thin, well-tested wrappers around numpy/scipy: Lyapunov solve, pseudoinverse,
Kalman controllability, Hurwitz test and regularized least squares.  All rank
decisions use the same relative singular-value cutoff so the modules agree on
what "numerically zero" means.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotHurwitz, RankDeficientWarning

#: Relative singular-value cutoff used for every rank decision in the package.
RANK_RTOL = 1e-10

#: Eigenvalues must satisfy Re(lambda) < -HURWITZ_MARGIN to count as stable.
HURWITZ_MARGIN = 1e-12


def as_matrix(a, name="matrix"):
    """Coerce to a 2-d float array and require finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def symmetrize(a):
    """Exact symmetrization (A + A^T)/2."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def is_hurwitz(a, margin=HURWITZ_MARGIN):
    """True iff every eigenvalue of the square matrix has real part < -margin."""
    a = as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"Hurwitz test needs a square matrix, got {a.shape}")
    if a.shape[0] == 0:
        return True
    return bool(np.max(np.linalg.eigvals(a).real) < -margin)


def solve_lyapunov(a, q, check_hurwitz=True):
    """Solve A S + S A^T + Q = 0 for symmetric S.

    Q must be symmetric PSD and A Hurwitz so that the solution is unique and
    PSD.  The result is symmetrized exactly before being returned.
    """
    a = as_matrix(a, "A")
    q = as_matrix(q, "Q")
    n = a.shape[0]
    if a.shape != (n, n) or q.shape != (n, n):
        raise DimensionMismatch(
            f"Lyapunov blocks must be square and conformable, got {a.shape} and {q.shape}"
        )
    if check_hurwitz and not is_hurwitz(a):
        raise NotHurwitz("Lyapunov solve requires a Hurwitz matrix")
    if n == 0:
        return np.zeros((0, 0))
    s = scipy.linalg.solve_continuous_lyapunov(a, -q)
    return symmetrize(s)


def pseudoinverse(c, rcond=RANK_RTOL):
    """Moore-Penrose pseudoinverse; total on any shape including all-zero."""
    c = as_matrix(c, "C")
    if c.size == 0:
        return np.zeros((c.shape[1], c.shape[0]))
    return np.linalg.pinv(c, rcond=rcond)


def matrix_rank(a, rtol=RANK_RTOL):
    """Numerical rank from singular values above rtol * s_max."""
    a = as_matrix(a, "matrix")
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def controllability_matrix(a, c):
    """Kalman block matrix [C | AC | ... | A^(n-1) C]."""
    a = as_matrix(a, "A")
    c = as_matrix(c, "C")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {a.shape}")
    if c.shape[0] != n:
        raise DimensionMismatch(f"C must have {n} rows, got {c.shape}")
    blocks = []
    block = c
    for _ in range(max(n, 1)):
        blocks.append(block)
        block = a @ block
    return np.hstack(blocks) if blocks else c


def kalman_controllable(a, c, rtol=RANK_RTOL):
    """Kalman rank condition: rank [C | AC | ... | A^(n-1)C] == n."""
    a = as_matrix(a, "A")
    n = a.shape[0]
    if n == 0:
        return True
    return matrix_rank(controllability_matrix(a, c), rtol=rtol) == n


@dataclass(frozen=True)
class LeastSquaresSolution:
    """Solution vector plus the numerical rank of the design matrix."""

    coeffs: np.ndarray
    rank: int

    @property
    def rank_deficient(self):
        return self.rank < self.coeffs.shape[0]


def ridge_lstsq(a, b, ridge):
    """Coefficients of the ridge problem via the augmented orthogonal solve."""
    k = a.shape[1]
    a_aug = np.vstack([a, np.sqrt(ridge) * np.eye(k)])
    b_aug = np.concatenate([np.asarray(b, dtype=float).reshape(-1), np.zeros(k)])
    x, _, _, _ = scipy.linalg.lstsq(a_aug, b_aug, lapack_driver="gelsy")
    return x


def solve_least_squares(a, b, ridge=0.0, rcond=RANK_RTOL, warn_rank_deficient=True):
    """Minimize ||A x - b||^2 + ridge * ||x||^2 via orthogonal factorization.

    Uses LAPACK's rank-revealing complete orthogonal decomposition (never the
    raw normal equations).  With ridge == 0 and a rank-deficient design the
    minimum-norm solution is returned and a RankDeficientWarning is issued;
    the reported rank always refers to the unregularized design matrix.
    """
    a = as_matrix(a, "A")
    b = np.asarray(b, dtype=float).reshape(-1)
    m, k = a.shape
    if b.shape[0] != m:
        raise DimensionMismatch(f"b has length {b.shape[0]}, expected {m}")
    if ridge < 0.0:
        raise ValueError("ridge must be nonnegative")

    if ridge > 0.0:
        rank = matrix_rank(a, rtol=rcond)
        x = ridge_lstsq(a, b, ridge)
    else:
        x, _, rank, _ = scipy.linalg.lstsq(a, b, cond=rcond, lapack_driver="gelsy")
        if rank < k and warn_rank_deficient:
            warnings.warn(
                f"design matrix rank {rank} < {k}; returning minimum-norm solution",
                RankDeficientWarning,
                stacklevel=2,
            )
    return LeastSquaresSolution(coeffs=x, rank=int(rank))
