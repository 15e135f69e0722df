"""
Block BFGS metric machinery.

A block triple (D, Y, chol(DᵀY)) carries one block of curvature: Y = ∇²f_T·D for
a thin sketch D. The metric H satisfies the sketched inverse equation H·Y = D
after each update. Three ways of using the triples:

  dense_update        H⁺ = DΔDᵀ + (I − DΔYᵀ) H (I − YΔDᵀ), explicit d×d
  two_loop_apply      H_t·g from the last M triples with H_{t−M} = I
  factored_apply      L_t·V with L_t L_tᵀ = H_t and L_{t−M} = I

Δ = (DᵀY)⁻¹ is never formed: every multiplication by Δ is a pair of triangular
solves against the stored Cholesky factor R (R·Rᵀ = DᵀY). The factored form
uses R_fact = R⁻ᵀ, which satisfies R_fact·R_factᵀ = Δ; any such factor gives
L_t L_tᵀ = H_t because V_t·D_t = 0, so the symmetric root Δ^{1/2} is not needed.

The factored identity L(Lᵀv) = H v holds for buffers that have never evicted a
triple: after eviction the older sketches were drawn from a longer factor than
the truncated one the buffer can reproduce.
"""

from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from blockbfgs.config import ORACLE_MAX_DIM
from blockbfgs.errors import (
    BufferNotFactored,
    DimensionMismatch,
    NonFiniteIterate,
    NotPositiveDefinite,
    NotSymmetric,
    RankDeficient,
    TooLarge,
)
from blockbfgs.linalg import (
    LowerTriangularFactor,
    cholesky,
    solve_lower,
    solve_lower_transpose,
    solve_with_factor,
)

# DᵀY equals Dᵀ∇²f_T D, so anything less symmetric than this is a caller bug.
_PRODUCT_SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class BlockTriple:
    D: np.ndarray
    Y: np.ndarray
    chol: LowerTriangularFactor
    C: np.ndarray | None = None        # factored mode only: 0-based column indices

    @property
    def d(self) -> int:
        return self.D.shape[0]

    @property
    def q(self) -> int:
        return self.D.shape[1]

    @property
    def factored(self) -> bool:
        return self.C is not None

    def delta(self, b: np.ndarray) -> np.ndarray:
        """Δ·b."""
        return solve_with_factor(self.chol, b)

    def r_fact(self, b: np.ndarray) -> np.ndarray:
        """R_fact·b = R⁻ᵀ·b."""
        return solve_lower_transpose(self.chol, b)

    def r_fact_t(self, b: np.ndarray) -> np.ndarray:
        """R_factᵀ·b = R⁻¹·b."""
        return solve_lower(self.chol, b)

    def r_fact_matrix(self) -> np.ndarray:
        return self.r_fact(np.eye(self.q))


def _as_block(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def make_triple(D, Y, C=None) -> BlockTriple:
    """
    Build a triple: form DᵀY, symmetrize it, factor it. Passing `C` (the column
    set a self-conditioning sketch was drawn from) stores the factored extras.
    Raises RankDeficient when DᵀY is not positive definite and NonFiniteIterate
    when D, Y or DᵀY is not finite.
    """
    D = _as_block(D, "D")
    Y = _as_block(Y, "Y")
    if D.shape != Y.shape:
        raise DimensionMismatch(f"D is {D.shape} but Y is {Y.shape}")

    prod = D.T @ Y
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(Y)) and np.all(np.isfinite(prod))):
        raise NonFiniteIterate("sketch, Hessian action or DᵀY is not finite")
    asym = np.linalg.norm(prod - prod.T)
    if asym > _PRODUCT_SYMMETRY_RTOL * max(np.linalg.norm(prod), np.finfo(float).tiny):
        raise NotSymmetric(f"DᵀY asymmetric (‖DᵀY − YᵀD‖ = {asym:.3e})")
    prod = 0.5 * (prod + prod.T)
    try:
        chol = cholesky(prod)
    except NotPositiveDefinite as e:
        raise RankDeficient(f"sketch of rank < {D.shape[1]}: {e}") from e

    if C is not None:
        C = np.asarray(C, dtype=np.int64)
        if C.shape != (D.shape[1],) or len(np.unique(C)) != C.size:
            raise DimensionMismatch(f"C must hold {D.shape[1]} distinct indices, got {C}")
        if C.min() < 0 or C.max() >= D.shape[0]:
            raise DimensionMismatch(f"C indices must lie in [0, {D.shape[0]})")
    return BlockTriple(D=D, Y=Y, chol=chol, C=C)


def dense_update(H, t: BlockTriple) -> np.ndarray:
    """Block BFGS update of an explicit d×d metric (H = 0 gives the SDNA matrix)."""
    H = np.asarray(H, dtype=np.float64)
    d = t.d
    if H.shape != (d, d):
        raise DimensionMismatch(f"H is {H.shape} but the triple has d={d}")
    D, Y = t.D, t.Y
    A = t.delta((H @ Y).T)                        # ΔYᵀH
    K = Y.T @ H @ Y
    inner = t.delta(t.delta(K).T) + t.delta(np.eye(t.q))   # ΔKΔ + Δ
    out = H - D @ A - A.T @ D.T + D @ inner @ D.T
    return 0.5 * (out + out.T)


def sdna_matrix(t: BlockTriple) -> np.ndarray:
    """D(DᵀY)⁻¹Dᵀ."""
    return t.D @ t.delta(t.D.T)


class CurvatureBuffer:
    """The last `capacity` triples, oldest first. Pushing when full evicts the oldest."""

    def __init__(self, d: int, capacity: int, *, factored: bool = False):
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.d = d
        self.capacity = capacity
        self.factored = factored
        self._triples: deque[BlockTriple] = deque(maxlen=capacity)
        self.evicted = 0

    def push(self, t: BlockTriple) -> None:
        if t.d != self.d:
            raise DimensionMismatch(f"triple has d={t.d}, buffer has d={self.d}")
        if self.factored and not t.factored:
            raise BufferNotFactored("factored buffer needs triples carrying C")
        if self.capacity and len(self._triples) == self.capacity:
            self.evicted += 1
        self._triples.append(t)

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[BlockTriple]:
        return iter(self._triples)

    def __reversed__(self) -> Iterator[BlockTriple]:
        return reversed(self._triples)

    @property
    def newest(self) -> BlockTriple | None:
        return self._triples[-1] if self._triples else None


def _check_operand(buffer: CurvatureBuffer, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[0] != buffer.d:
        raise DimensionMismatch(f"operand has shape {v.shape}, buffer has d={buffer.d}")
    return v


def two_loop_apply(buffer: CurvatureBuffer, g) -> np.ndarray:
    """H_t·g by the block two-loop recursion. `g` may be a vector or a d×k block."""
    v = _check_operand(buffer, g).copy()
    alphas = []
    for t in reversed(buffer):
        alpha = t.delta(t.D.T @ v)
        v -= t.Y @ alpha
        alphas.append(alpha)
    for t, alpha in zip(buffer, reversed(alphas)):
        beta = t.delta(t.Y.T @ v)
        v += t.D @ (alpha - beta)
    return v


def _require_factored(buffer: CurvatureBuffer) -> None:
    if not buffer.factored or any(not t.factored for t in buffer):
        raise BufferNotFactored("buffer does not hold factored triples")


def factored_apply(buffer: CurvatureBuffer, V) -> np.ndarray:
    """
    L_t·V: oldest→newest, W ← W − DΔ(YᵀW) + D·R_fact·V[C].

    The rows picked by C are rows of the input V, not of the running W: the
    recursion L_i = (I − D_iΔ_iY_iᵀ)L_{i−1} + D_iR_fact·I_{C_i,:} applies the row
    selection to whatever L_i multiplies.
    """
    _require_factored(buffer)
    V = _check_operand(buffer, V)
    W = V.copy()
    for t in buffer:
        W = W - t.D @ t.delta(t.Y.T @ W) + t.D @ t.r_fact(V[t.C])
    return W


def factored_apply_transpose(buffer: CurvatureBuffer, V) -> np.ndarray:
    """L_tᵀ·V: newest→oldest, scattering R_factᵀDᵀu into rows C, then u ← u − YΔ(Dᵀu)."""
    _require_factored(buffer)
    u = _check_operand(buffer, V).copy()
    out = np.zeros_like(u)
    for t in reversed(buffer):
        Dt_u = t.D.T @ u
        out[t.C] += t.r_fact_t(Dt_u)
        u = u - t.Y @ t.delta(Dt_u)
    return out + u


def factored_gram_apply(buffer: CurvatureBuffer, v) -> np.ndarray:
    """L(Lᵀv); equals two_loop_apply(buffer, v) for a buffer that never evicted."""
    return factored_apply(buffer, factored_apply_transpose(buffer, v))


def dense_reconstruct(buffer: CurvatureBuffer) -> np.ndarray:
    """The implicit H_t as a d×d matrix, column j = H_t·e_j. Test oracle."""
    if buffer.d > ORACLE_MAX_DIM:
        raise TooLarge(f"d={buffer.d} exceeds oracle limit {ORACLE_MAX_DIM}")
    return two_loop_apply(buffer, np.eye(buffer.d))
