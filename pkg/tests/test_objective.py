"""Logistic and quadratic objectives: values, gradients, Hessian actions, constants."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blockbfgs.dataset import IndexSample, make_synthetic, parse_libsvm
from blockbfgs.errors import DimensionMismatch, EmptySample
from blockbfgs.objective import LogisticModel, QuadraticModel


def _one_example(a, y, reg):
    label = "+1" if y > 0 else "-1"
    feats = " ".join(f"{j + 1}:{v}" for j, v in enumerate(a))
    return LogisticModel(parse_libsvm(f"{label} {feats}\n", n_features=len(a)), reg=reg)


def _fd_gradient(model, w, h=1e-6):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (model.value(w + e) - model.value(w - e)) / (2 * h)
    return g


# ── value ─────────────────────────────────────────────────────────────────────

def test_value_at_zero_is_log_two(tiny_logistic):
    assert tiny_logistic.value(np.zeros(tiny_logistic.d)) == pytest.approx(np.log(2.0), abs=1e-15)


def test_value_scalar_cases():
    model = _one_example([1.0], +1, reg=0.2)
    assert model.value([0.0]) == pytest.approx(0.6931472, abs=1e-7)
    assert model.value([2.0]) == pytest.approx(0.5269280, abs=1e-7)


def test_value_does_not_overflow():
    model = _one_example([1.0], +1, reg=0.1)
    assert np.isfinite(model.value([-1000.0]))
    assert model.value([-1000.0]) == pytest.approx(1000.0 + 0.05 * 1e6, rel=1e-12)


def test_value_rejects_wrong_length(tiny_logistic):
    with pytest.raises(DimensionMismatch):
        tiny_logistic.value(np.zeros(tiny_logistic.d + 1))


def test_value_is_convex_along_segments(tiny_logistic, rng):
    for _ in range(20):
        w1, w2 = 3.0 * rng.standard_normal((2, tiny_logistic.d))
        for theta in (0.1, 0.5, 0.9):
            mixed = tiny_logistic.value(theta * w1 + (1 - theta) * w2)
            chord = theta * tiny_logistic.value(w1) + (1 - theta) * tiny_logistic.value(w2)
            assert mixed <= chord + 1e-12


def test_default_reg_is_one_over_n():
    ds = make_synthetic(50, 3, seed=0)
    assert LogisticModel(ds).reg == pytest.approx(1 / 50)


# ── gradient ──────────────────────────────────────────────────────────────────

def test_gradient_scalar_at_zero():
    assert_allclose(_one_example([1.0], +1, reg=0.7).full_gradient([0.0]), [-0.5 + 0.0])


def test_gradient_matches_finite_differences(tiny_logistic, rng):
    for _ in range(10):
        w = rng.standard_normal(tiny_logistic.d)
        g = tiny_logistic.full_gradient(w)
        fd = _fd_gradient(tiny_logistic, w)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_gradient_vanishes_at_one_example_optimum():
    # optimality: -y·a·σ(-y a w) + reg·w = 0 with a=1, y=+1, reg=0.5
    model = _one_example([1.0], +1, reg=0.5)
    lo, hi = 0.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if model.full_gradient([mid])[0] < 0:
            lo = mid
        else:
            hi = mid
    assert abs(model.full_gradient([0.5 * (lo + hi)])[0]) <= 1e-10


def test_subsampled_gradient_on_full_sample_equals_full_gradient(tiny_logistic, rng):
    w = rng.standard_normal(tiny_logistic.d)
    assert_allclose(tiny_logistic.subsampled_gradient(w, IndexSample.full(tiny_logistic.n)),
                    tiny_logistic.full_gradient(w))


def test_subsampled_gradient_averages_the_rows(tiny_logistic, rng):
    w = rng.standard_normal(tiny_logistic.d)
    S = IndexSample(np.array([1, 4, 9]))
    per_row = [tiny_logistic.subsampled_gradient(w, IndexSample(np.array([i]))) for i in S.indices]
    assert_allclose(tiny_logistic.subsampled_gradient(w, S), np.mean(per_row, axis=0), rtol=1e-12)


def test_empty_sample_is_rejected(tiny_logistic):
    with pytest.raises(EmptySample):
        tiny_logistic.subsampled_gradient(np.zeros(tiny_logistic.d), IndexSample(np.array([], dtype=np.int64)))


# ── Hessian action ────────────────────────────────────────────────────────────

def test_hessian_action_of_zero_block(tiny_logistic):
    T = IndexSample.full(tiny_logistic.n)
    out = tiny_logistic.hessian_action(np.ones(tiny_logistic.d), T, np.zeros((tiny_logistic.d, 3)))
    assert_allclose(out, 0.0)


def test_hessian_action_scalar_case():
    model = _one_example([1.0, 0.0], +1, reg=0.1)
    out = model.hessian_action(np.zeros(2), IndexSample.full(1), np.array([[1.0], [0.0]]))
    assert_allclose(out, [[0.35], [0.0]])


def test_hessian_action_matches_gradient_differences(tiny_logistic, rng):
    T = IndexSample(np.arange(0, tiny_logistic.n, 3))
    h = 1e-5
    for _ in range(10):
        w = rng.standard_normal(tiny_logistic.d)
        D = rng.standard_normal((tiny_logistic.d, 2))
        Y = tiny_logistic.hessian_action(w, T, D)
        for j in range(2):
            fd = (tiny_logistic.subsampled_gradient(w + h * D[:, j], T)
                  - tiny_logistic.subsampled_gradient(w - h * D[:, j], T)) / (2 * h)
            assert np.linalg.norm(Y[:, j] - fd) <= 1e-5 * np.linalg.norm(Y[:, j])


def test_hessian_action_accepts_vector(tiny_logistic, rng):
    w = rng.standard_normal(tiny_logistic.d)
    v = rng.standard_normal(tiny_logistic.d)
    T = IndexSample.full(tiny_logistic.n)
    assert_allclose(tiny_logistic.hessian_action(w, T, v), tiny_logistic.hessian_action(w, T, v[:, None])[:, 0])


def test_hessian_action_is_linear_in_the_block(tiny_logistic, rng):
    w = rng.standard_normal(tiny_logistic.d)
    T = IndexSample(np.array([1, 4, 9, 16, 25]))
    D1, D2 = rng.standard_normal((2, tiny_logistic.d, 3))
    alpha, beta = 0.7, -2.3
    combined = tiny_logistic.hessian_action(w, T, alpha * D1 + beta * D2)
    separate = alpha * tiny_logistic.hessian_action(w, T, D1) + beta * tiny_logistic.hessian_action(w, T, D2)
    assert_allclose(combined, separate, rtol=1e-12, atol=1e-12)


def test_dense_hessian_is_symmetric(tiny_logistic, rng):
    H = tiny_logistic.dense_hessian(rng.standard_normal(tiny_logistic.d), IndexSample.full(tiny_logistic.n))
    assert_allclose(H, H.T, atol=1e-14)


# ── smoothness constants ──────────────────────────────────────────────────────

def test_constants_zero_features():
    model = LogisticModel(parse_libsvm("1\n-1\n", n_features=3), reg=0.3)
    assert model.smoothness_constants() == pytest.approx((0.3, 0.3))


def test_constants_single_example():
    assert _one_example([2.0], +1, reg=0.1).smoothness_constants() == pytest.approx((0.1, 1.1))


def test_constants_two_examples():
    model = LogisticModel(parse_libsvm("1 1:1\n-1 1:3\n"), reg=0.5)
    assert model.smoothness_constants() == pytest.approx((0.5, 2.75))


def test_constants_bracket_the_hessian_spectrum(tiny_logistic, rng):
    lam, Lam = tiny_logistic.smoothness_constants()
    for _ in range(5):
        T = IndexSample(np.sort(rng.choice(tiny_logistic.n, 5, replace=False)))
        eig = np.linalg.eigvalsh(tiny_logistic.dense_hessian(rng.standard_normal(tiny_logistic.d), T))
        assert eig[0] >= lam - 1e-12 and eig[-1] <= Lam + 1e-12


# ── quadratic ─────────────────────────────────────────────────────────────────

def test_quadratic_model():
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    centers = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    model = QuadraticModel(G, centers)
    w_star = model.minimizer()
    assert_allclose(model.full_gradient(w_star), 0.0, atol=1e-14)
    lam, Lam = model.smoothness_constants()
    assert_allclose([lam, Lam], np.linalg.eigvalsh(G))
    D = np.eye(2)
    assert_allclose(model.hessian_action(w_star, IndexSample.full(3), D), G)
    assert_allclose(_fd_gradient(model, np.array([0.3, -0.2])), model.full_gradient(np.array([0.3, -0.2])),
                    rtol=1e-7)
