"""
ERM objectives f(w) = (1/n) Σ fᵢ(w).

LogisticModel is the benchmark problem: averaged logistic loss plus (reg/2)‖w‖².
The loss is averaged (not summed) so the constants λ, Λ of the convergence
theory apply directly; reg defaults to 1/n. Minimizers of the summed form with
regularizer (1/n)‖w‖² coincide with ours at reg = 2/n².

QuadraticModel fᵢ(x) = ½(x−cᵢ)ᵀG(x−cᵢ) shares the interface and is used where a
known, constant Hessian is needed (hand simulations, spectral-bound checks).

Both expose the subsampled Hessian only through its action on a thin d×q
block; a d×d Hessian is built only by the `dense_hessian` test oracle.
"""

from typing import Protocol

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.special import expit

from blockbfgs.config import ORACLE_MAX_DIM
from blockbfgs.dataset import Dataset, IndexSample
from blockbfgs.errors import BadConstants, DimensionMismatch, EmptySample, TooLarge


class Objective(Protocol):
    n: int
    d: int

    def value(self, w: np.ndarray) -> float: ...
    def full_gradient(self, w: np.ndarray) -> np.ndarray: ...
    def subsampled_gradient(self, w: np.ndarray, S: IndexSample) -> np.ndarray: ...
    def hessian_action(self, w: np.ndarray, T: IndexSample, D: np.ndarray) -> np.ndarray: ...
    def smoothness_constants(self) -> tuple[float, float]: ...


def _check_vector(w, d: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (d,):
        raise DimensionMismatch(f"expected a vector of length {d}, got shape {w.shape}")
    return w


def _check_block(D, d: int) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim not in (1, 2) or D.shape[0] != d:
        raise DimensionMismatch(f"expected {d} rows, got shape {D.shape}")
    return D


def _check_sample(S: IndexSample) -> None:
    if S.size == 0:
        raise EmptySample("sample is empty")


class LogisticModel:
    """(1/n) Σ ln(1 + exp(−yᵢ⟨aⁱ, w⟩)) + (reg/2)‖w‖²."""

    def __init__(self, data: Dataset, reg: float | None = None):
        if data.n == 0:
            raise EmptySample("dataset has no examples")
        self.data = data
        self.reg = 1.0 / data.n if reg is None else float(reg)
        if not self.reg > 0.0:
            raise BadConstants(f"reg must be > 0, got {self.reg}")
        self.n = data.n
        self.d = data.d
        self._X = data.X
        self._y = data.labels

    def _rows(self, S: IndexSample) -> tuple[scipy.sparse.csr_matrix, np.ndarray]:
        if S.size == self.n:
            return self._X, self._y
        return self._X[S.indices], self._y[S.indices]

    def value(self, w) -> float:
        w = _check_vector(w, self.d)
        z = self._y * (self._X @ w)
        # ln(1 + e^{-z}) without overflow for large |z|
        loss = np.mean(np.logaddexp(0.0, -z))
        return float(loss + 0.5 * self.reg * np.dot(w, w))

    def subsampled_gradient(self, w, S: IndexSample) -> np.ndarray:
        w = _check_vector(w, self.d)
        _check_sample(S)
        X, y = self._rows(S)
        z = y * (X @ w)
        coef = -y * expit(-z)
        return X.T @ coef / S.size + self.reg * w

    def full_gradient(self, w) -> np.ndarray:
        return self.subsampled_gradient(w, IndexSample.full(self.n))

    def hessian_action(self, w, T: IndexSample, D) -> np.ndarray:
        """[(1/|T|) Σ_{i∈T} σ′(zᵢ) aⁱaⁱᵀ + reg·I] D via two sparse passes."""
        w = _check_vector(w, self.d)
        D = _check_block(D, self.d)
        _check_sample(T)
        X, _ = self._rows(T)
        z = X @ w
        curvature = expit(z) * expit(-z)
        Z = X @ D
        scaled = curvature[:, None] * Z if Z.ndim == 2 else curvature * Z
        return X.T @ scaled / T.size + self.reg * D

    def smoothness_constants(self) -> tuple[float, float]:
        """(λ, Λ) with λI ⪯ ∇²f_T(x) ⪯ ΛI for every T and x."""
        sq_norms = np.asarray(self._X.multiply(self._X).sum(axis=1)).ravel()
        max_sq = float(sq_norms.max()) if sq_norms.size else 0.0
        return self.reg, self.reg + 0.25 * max_sq

    def dense_hessian(self, w, T: IndexSample) -> np.ndarray:
        if self.d > ORACLE_MAX_DIM:
            raise TooLarge(f"d={self.d} exceeds oracle limit {ORACLE_MAX_DIM}")
        return self.hessian_action(w, T, np.eye(self.d))


class QuadraticModel:
    """fᵢ(x) = ½(x−cᵢ)ᵀG(x−cᵢ) with a fixed SPD G and one center per example."""

    def __init__(self, G, centers):
        self.G = np.atleast_2d(np.asarray(G, dtype=np.float64))
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.n, self.d = self.centers.shape
        if self.G.shape != (self.d, self.d):
            raise DimensionMismatch(f"G is {self.G.shape} but centers have d={self.d}")
        eig = scipy.linalg.eigh(self.G, eigvals_only=True)
        if eig[0] <= 0.0:
            raise BadConstants("G must be positive definite")
        self._spectrum = (float(eig[0]), float(eig[-1]))

    def value(self, w) -> float:
        w = _check_vector(w, self.d)
        r = w - self.centers
        return float(0.5 * np.mean(np.einsum("ij,jk,ik->i", r, self.G, r)))

    def subsampled_gradient(self, w, S: IndexSample) -> np.ndarray:
        w = _check_vector(w, self.d)
        _check_sample(S)
        return self.G @ (w - self.centers[S.indices].mean(axis=0))

    def full_gradient(self, w) -> np.ndarray:
        return self.subsampled_gradient(w, IndexSample.full(self.n))

    def hessian_action(self, w, T: IndexSample, D) -> np.ndarray:
        _check_vector(w, self.d)
        D = _check_block(D, self.d)
        _check_sample(T)
        return self.G @ D

    def smoothness_constants(self) -> tuple[float, float]:
        return self._spectrum

    def minimizer(self) -> np.ndarray:
        return self.centers.mean(axis=0)

    def dense_hessian(self, w, T: IndexSample) -> np.ndarray:
        return self.G.copy()
