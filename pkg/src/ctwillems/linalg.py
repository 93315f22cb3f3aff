"""Dense linear-algebra kernels with fixed tolerance conventions.

All rank decisions in the package go through :func:`numerical_rank`, which
counts singular values above ``tol_rel * sigma_max * max(rows, cols)``.
Pseudoinverses zero every singular value below ``cutoff_rel * sigma_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DEFAULT_CUTOFF_REL = 1e-10
DEFAULT_RANK_TOL = 1e-8
MAX_EIG_DIM = 16


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate ``M`` as a finite 2-D float64 array with at least one entry.

    1-D input is treated as a single row.
    """
    arr = np.array(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _as_square(A, name: str = "A") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class SvdResult:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1]) if self.singular_values.size else 0.0


def svd(M) -> SvdResult:
    """Thin SVD, ``M = U diag(s) V^T`` with ``s`` nonincreasing."""
    M = as_matrix(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdResult(s, U, Vt.T)


# Numerator coefficients of the [13/13] Pade approximant to exp, and the
# largest 1-norm for which it is accurate to double precision.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0,
    1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(A t)`` by scaling and squaring with a [13/13] Pade approximant.

    The mean eigenvalue ``trace/n`` is split off first and restored as a scalar
    factor, which keeps the number of squarings low for shifted spectra.
    """
    A = _as_square(A)
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    n = A.shape[0]
    I = np.eye(n)
    X = A * t
    mu = np.trace(X) / n
    X = X - mu * I
    norm = np.linalg.norm(X, 1)
    s = math.ceil(math.log2(norm / _THETA13)) if norm > _THETA13 else 0
    X = X / 2.0**s

    b = _PADE13
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * I)
    V = X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R * math.exp(mu)


def pseudoinverse(M, cutoff_rel: float = DEFAULT_CUTOFF_REL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``cutoff_rel * sigma_max`` are treated as zero.
    """
    if cutoff_rel <= 0:
        raise ValueError("cutoff_rel must be positive")
    res = svd(M)
    s = res.singular_values
    keep = s > cutoff_rel * res.sigma_max if s.size and res.sigma_max > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (res.right_vectors * inv) @ res.left_vectors.T


def numerical_rank(M, tol_rel: float = DEFAULT_RANK_TOL) -> int:
    """Count singular values above ``tol_rel * sigma_max * max(rows, cols)``."""
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    M = as_matrix(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol_rel * s[0] * max(M.shape)))


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a square matrix (with multiplicity), as complex numbers."""
    A = _as_square(A)
    if A.shape[0] > MAX_EIG_DIM:
        raise DimensionError(f"eigenvalues supports n <= {MAX_EIG_DIM}, got {A.shape[0]}")
    return np.linalg.eigvals(A).astype(complex)
