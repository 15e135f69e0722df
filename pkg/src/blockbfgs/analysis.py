"""
Executable convergence theory.

Under λI ⪯ ∇²f_T ⪯ ΛI (κ = Λ/λ) the limited-memory metric with memory M and
H_{t−M} = I satisfies γI ⪯ H_t ⪯ ΓI with

  γ ≥ 1 / (‖B_{t−M}‖ + MΛ)
  Γ ≤ α^M ‖H_{t−M}‖ + (1/λ)(α^M − 1)/(α − 1),      α = (1 + √κ)²

and the geometric-sum form of Γ is at most the closed form
(1 + √κ)^{2M}(‖H_{t−M}‖ + 1/(λ(2√κ + κ))). With the random-iterate outer
option, η < γλ/(2Γ²Λ²) and m > m_min, the expected optimality gap contracts by

  ρ = (1/(2mη) + ηΓ²Λ(Λ−λ)) / (γλ − ηΓ²Λ²) < 1

per outer iteration. The variance-reduced gradient obeys
E‖g‖² ≤ 4Λ(f(x) − f*) + 4(Λ − λ)(f(w) − f*), checked here by exact enumeration.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from blockbfgs.dataset import IndexSample
from blockbfgs.errors import (
    BadConstants,
    InnerLoopTooShort,
    NotPositiveDefinite,
    OptimumNotConverged,
    StepTooLarge,
    TooManySubsets,
)
from blockbfgs.linalg import cholesky, solve_with_factor, sym_eigenvalues
from blockbfgs.metric import CurvatureBuffer, dense_reconstruct
from blockbfgs.objective import Objective
from blockbfgs.optimizer import vr_gradient

# Exhaustive enumeration limit for verify_vr_bound.
MAX_SUBSETS = 100_000

# w* must satisfy ‖∇f(w*)‖ <= this before it is trusted.
OPTIMUM_GRAD_TOL = 1e-10

# Rounding slack when comparing two sides that are both ~0.
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class TheoryBounds:
    lam: float
    Lam: float
    M: int
    gamma_lb: float
    Gamma_ub: float

    @property
    def kappa(self) -> float:
        return self.Lam / self.lam

    def step_threshold(self) -> float:
        """η must stay below γλ/(2Γ²Λ²)."""
        return self.gamma_lb * self.lam / (2.0 * self.Gamma_ub ** 2 * self.Lam ** 2)


def _check_constants(lam: float, Lam: float, M: int) -> None:
    if not lam > 0.0 or not Lam >= lam:
        raise BadConstants(f"need 0 < lambda <= Lambda, got lambda={lam}, Lambda={Lam}")
    if M < 0:
        raise BadConstants(f"memory M must be >= 0, got {M}")


def metric_bounds(lam: float, Lam: float, M: int, *, h_norm: float = 1.0, b_norm: float = 1.0) -> TheoryBounds:
    """(γ_lb, Γ_ub) for memory M; h_norm/b_norm are ‖H_{t−M}‖ and ‖H_{t−M}⁻¹‖ (1 for H_{t−M} = I)."""
    _check_constants(lam, Lam, M)
    alpha = (1.0 + math.sqrt(Lam / lam)) ** 2
    gamma_lb = 1.0 / (b_norm + M * Lam)
    Gamma_ub = alpha ** M * h_norm + (alpha ** M - 1.0) / (alpha - 1.0) / lam
    return TheoryBounds(lam=lam, Lam=Lam, M=M, gamma_lb=gamma_lb, Gamma_ub=Gamma_ub)


def gamma_closed_form_bound(lam: float, Lam: float, M: int, *, h_norm: float = 1.0) -> float:
    """The looser closed form (1 + √κ)^{2M}(‖H_{t−M}‖ + 1/(λ(2√κ + κ)))."""
    _check_constants(lam, Lam, M)
    kappa = Lam / lam
    root = math.sqrt(kappa)
    return (1.0 + root) ** (2 * M) * (h_norm + 1.0 / (lam * (2.0 * root + kappa)))


def _check_step(eta: float, bounds: TheoryBounds) -> None:
    threshold = bounds.step_threshold()
    if not 0.0 < eta < threshold:
        raise StepTooLarge(f"eta={eta} must lie in (0, {threshold:.6g})")


def min_inner_loop(eta: float, bounds: TheoryBounds) -> float:
    """m_min = 1 / (2η(γλ − ηΓ²Λ(2Λ − λ)))."""
    _check_step(eta, bounds)
    b = bounds
    return 1.0 / (2.0 * eta * (b.gamma_lb * b.lam - eta * b.Gamma_ub ** 2 * b.Lam * (2.0 * b.Lam - b.lam)))


def convergence_rate(eta: float, m: int, bounds: TheoryBounds) -> float:
    """ρ of the linear rate; raises unless η and m satisfy its preconditions."""
    m_min = min_inner_loop(eta, bounds)
    if m <= m_min:
        raise InnerLoopTooShort(f"m={m} must exceed {m_min:.6g}")
    b = bounds
    G2 = b.Gamma_ub ** 2
    return (1.0 / (2.0 * m * eta) + eta * G2 * b.Lam * (b.Lam - b.lam)) / (b.gamma_lb * b.lam - eta * G2 * b.Lam ** 2)


# ── verifiers ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SpectrumReport:
    min_eig: float
    max_eig: float
    holds: bool


def verify_metric_bounds(buffer: CurvatureBuffer, bounds: TheoryBounds, *, atol: float = 1e-9) -> SpectrumReport:
    """Eigenvalues of the reconstructed metric against [γ_lb, Γ_ub]."""
    eig = sym_eigenvalues(dense_reconstruct(buffer))
    lo, hi = float(eig[0]), float(eig[-1])
    return SpectrumReport(lo, hi, lo >= bounds.gamma_lb - atol and hi <= bounds.Gamma_ub + atol)


def newton_optimum(model: Objective, *, tol: float = OPTIMUM_GRAD_TOL, max_iter: int = 100) -> np.ndarray:
    """w* by damped Newton with backtracking on the full objective. Small d only."""
    full = IndexSample.full(model.n)
    w = np.zeros(model.d)
    f = model.value(w)
    for _ in range(max_iter):
        g = model.full_gradient(w)
        if np.linalg.norm(g) <= tol:
            return w
        try:
            step = -solve_with_factor(cholesky(model.dense_hessian(w, full)), g)
        except NotPositiveDefinite as e:
            raise OptimumNotConverged(f"Hessian not positive definite: {e}") from e
        slope = float(g @ step)
        t = 1.0
        while t > 1e-12:
            w_new = w + t * step
            f_new = model.value(w_new)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # No decrease is representable any more; accept the full step and let
            # the gradient test decide.
            w_new = w + step
            f_new = model.value(w_new)
        w, f = w_new, f_new
    if np.linalg.norm(model.full_gradient(w)) <= tol:
        return w
    raise OptimumNotConverged(f"gradient norm still above {tol} after {max_iter} Newton steps")


@dataclass(frozen=True)
class VrBoundReport:
    lhs: float
    rhs: float
    holds: bool


def verify_vr_bound(model: Objective, x, w, s_size: int, *, w_star=None) -> VrBoundReport:
    """
    lhs = exact mean of ‖∇f_S(x) − ∇f_S(w) + ∇f(w)‖² over every size-s subset S;
    rhs = 4Λ(f(x) − f*) + 4(Λ − λ)(f(w) − f*).
    """
    n = model.n
    if math.comb(n, s_size) > MAX_SUBSETS:
        raise TooManySubsets(f"C({n}, {s_size}) exceeds {MAX_SUBSETS}")
    if w_star is None:
        w_star = newton_optimum(model)
    elif np.linalg.norm(model.full_gradient(w_star)) > OPTIMUM_GRAD_TOL:
        raise OptimumNotConverged(f"supplied w* has gradient norm above {OPTIMUM_GRAD_TOL}")

    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    mu = model.full_gradient(w)
    total, count = 0.0, 0
    for subset in itertools.combinations(range(n), s_size):
        S = IndexSample(np.fromiter(subset, dtype=np.int64, count=s_size))
        g = vr_gradient(model, x, w, mu, S)
        total += float(g @ g)
        count += 1
    lhs = total / count

    lam, Lam = model.smoothness_constants()
    f_star = model.value(w_star)
    rhs = 4.0 * Lam * (model.value(x) - f_star) + 4.0 * (Lam - lam) * (model.value(w) - f_star)
    return VrBoundReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs + _BOUND_SLACK)
