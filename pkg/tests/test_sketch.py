"""Gaussian sketches, the direction window, and the self-conditioning sketch."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blockbfgs.dataset import make_streams
from blockbfgs.errors import BadShape, BufferNotFactored, ZeroDirection
from blockbfgs.metric import CurvatureBuffer, make_triple
from blockbfgs.sketch import (
    DirectionWindow,
    SketchKind,
    SketchStrategy,
    default_L,
    default_q,
    gaussian_sketch,
    push_direction,
    self_conditioning_sketch,
)


# ── defaults / strategy ───────────────────────────────────────────────────────

@pytest.mark.parametrize("d,q", [(1, 1), (4, 2), (20, 5), (10_000, 32)])
def test_default_q(d, q):
    assert default_q(d) == q


@pytest.mark.parametrize("d,L", [(1, 1), (20, 3), (100, 4), (5000, 9)])
def test_default_L(d, L):
    assert default_L(d) == L


def test_strategy_validation():
    SketchStrategy(SketchKind.IDENTITY).validate(3)
    SketchStrategy(SketchKind.GAUSSIAN, 3).validate(3)
    for bad in (0, 4):
        with pytest.raises(BadShape):
            SketchStrategy(SketchKind.GAUSSIAN, bad).validate(3)


# ── gaussian ──────────────────────────────────────────────────────────────────

def test_gaussian_shape_and_determinism():
    a = gaussian_sketch(make_streams(4)["sketch"], 7, 3)
    b = gaussian_sketch(make_streams(4)["sketch"], 7, 3)
    assert a.shape == (7, 3)
    assert np.array_equal(a, b)


def test_gaussian_rejects_bad_q():
    with pytest.raises(BadShape):
        gaussian_sketch(make_streams(0)["sketch"], 3, 4)


def test_gaussian_moments():
    stream = make_streams(9)["sketch"]
    draws = np.concatenate([gaussian_sketch(stream, 1000, 1).ravel() for _ in range(10_000)])
    assert abs(draws.mean()) <= 0.05
    assert abs(draws.var() - 1.0) <= 0.05


# ── direction window ──────────────────────────────────────────────────────────

def test_window_emits_every_L_pushes():
    w = DirectionWindow(2)
    v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    assert push_direction(w, v1) is None
    assert_allclose(push_direction(w, v2), np.column_stack([v1, v2]))


def test_window_of_one_emits_each_push():
    w = DirectionWindow(1)
    for k in range(1, 4):
        assert_allclose(push_direction(w, np.array([float(k)])), [[float(k)]])


def test_window_emission_schedule():
    w = DirectionWindow(3)
    emitted = [push_direction(w, np.array([k + 1.0, 1.0])) is not None for k in range(7)]
    assert [i + 1 for i, e in enumerate(emitted) if e] == [3, 6]


def test_window_keeps_only_the_last_L():
    w = DirectionWindow(2)
    for k in range(1, 4):
        block = push_direction(w, np.array([float(k)]))
    assert block is None
    block = push_direction(w, np.array([4.0]))
    assert_allclose(block, [[3.0, 4.0]])


def test_window_rejects_zero_direction():
    w = DirectionWindow(2)
    with pytest.raises(ZeroDirection):
        push_direction(w, np.zeros(3))
    assert len(w) == 0 and w.counter == 0


def test_window_copies_the_direction():
    w = DirectionWindow(1)
    v = np.array([1.0, 2.0])
    block = push_direction(w, v)
    v[0] = 99.0
    assert block[0, 0] == 1.0


# ── self-conditioning ─────────────────────────────────────────────────────────

def test_self_conditioning_on_empty_buffer_gives_identity_columns():
    C, D = self_conditioning_sketch(make_streams(2)["sketch"], CurvatureBuffer(5, 3, factored=True), 5, 2)
    assert len(set(C.tolist())) == 2
    expected = np.eye(5)[:, C]
    assert_allclose(D, expected)


def test_self_conditioning_scalar_buffer():
    buffer = CurvatureBuffer(1, 1, factored=True)
    buffer.push(make_triple([[1.0]], [[4.0]], C=[0]))
    C, D = self_conditioning_sketch(make_streams(0)["sketch"], buffer, 1, 1)
    assert C.tolist() == [0]
    assert_allclose(D, [[0.5]])


def test_self_conditioning_needs_factored_buffer():
    with pytest.raises(BufferNotFactored):
        self_conditioning_sketch(make_streams(0)["sketch"], CurvatureBuffer(3, 2), 3, 1)
