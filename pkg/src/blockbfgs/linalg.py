"""
Small dense linear-algebra substrate.

Matrices are plain numpy arrays with one fixed layout: float64, C-contiguous,
shape (rows, cols), row-major. `as_matrix` is the single entry point that
enforces it (and rejects NaN/Inf). The only factorization the recursions need is
the Cholesky factor of the small q×q products DᵀY; multiplication by their
inverse is always done with two triangular solves, never by forming it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from blockbfgs.config import ORACLE_MAX_DIM, PIVOT_TOLERANCE, SYMMETRY_TOLERANCE
from blockbfgs.errors import DimensionMismatch, NonFiniteEntries, NotPositiveDefinite, NotSymmetric, TooLarge


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Return `a` as a finite float64 C-contiguous 2-D array (1-D input becomes a column)."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntries(f"{name} has non-finite entries")
    return arr


def is_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOLERANCE) -> bool:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(a))))
    return bool(np.all(np.abs(a - a.T) <= tol * scale))


@dataclass(frozen=True)
class LowerTriangularFactor:
    """R with R·Rᵀ equal to the factored SPD matrix. Entries above the diagonal are zero."""

    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def product(self) -> np.ndarray:
        """R·Rᵀ, for checks."""
        return self.entries @ self.entries.T


def cholesky(a, *, pivot_tolerance: float = PIVOT_TOLERANCE) -> LowerTriangularFactor:
    """
    Cholesky factor of a symmetric q×q matrix.

    Raises NotPositiveDefinite when a pivot (squared diagonal of the factor) is
    <= pivot_tolerance × max diagonal entry of `a`. For DᵀY this means the
    sketch D is (numerically) rank deficient.
    """
    a = as_matrix(a, name="A")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {a.shape}")
    if not is_symmetric(a):
        raise NotSymmetric("cholesky input is not symmetric")

    max_diag = float(np.max(np.diag(a)))
    if max_diag <= 0.0:
        raise NotPositiveDefinite("no positive diagonal entry")
    try:
        r = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e)) from e

    pivots = np.diag(r) ** 2
    threshold = pivot_tolerance * max_diag
    if np.any(pivots <= threshold):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {j} = {pivots[j]:.3e} <= {threshold:.3e}")
    return LowerTriangularFactor(np.ascontiguousarray(np.tril(r)))


def _check_rows(r: LowerTriangularFactor, b: np.ndarray) -> None:
    if b.shape[0] != r.dim:
        raise DimensionMismatch(f"factor is {r.dim}×{r.dim} but right-hand side has {b.shape[0]} rows")


def solve_with_factor(r: LowerTriangularFactor, b) -> np.ndarray:
    """X with (R·Rᵀ)·X = B via forward then backward substitution. Keeps the shape of `b`."""
    b = np.asarray(b, dtype=np.float64)
    _check_rows(r, b)
    return scipy.linalg.cho_solve((r.entries, True), b, check_finite=False)


def solve_lower(r: LowerTriangularFactor, b) -> np.ndarray:
    """X with R·X = B."""
    b = np.asarray(b, dtype=np.float64)
    _check_rows(r, b)
    return scipy.linalg.solve_triangular(r.entries, b, lower=True, check_finite=False)


def solve_lower_transpose(r: LowerTriangularFactor, b) -> np.ndarray:
    """X with Rᵀ·X = B, i.e. X = R⁻ᵀB."""
    b = np.asarray(b, dtype=np.float64)
    _check_rows(r, b)
    return scipy.linalg.solve_triangular(r.entries, b, lower=True, trans="T", check_finite=False)


def sym_eigenvalues(a) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix. Test oracle only (d <= ORACLE_MAX_DIM)."""
    a = as_matrix(a, name="A")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"eigenvalues need a square matrix, got {a.shape}")
    if a.shape[0] > ORACLE_MAX_DIM:
        raise TooLarge(f"dimension {a.shape[0]} exceeds oracle limit {ORACLE_MAX_DIM}")
    if not is_symmetric(a):
        raise NotSymmetric("eigenvalue input is not symmetric")
    return np.sort(scipy.linalg.eigh(a, eigvals_only=True, check_finite=False))
