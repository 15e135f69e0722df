"""
Sketching matrices D_t ∈ R^{d×q}.

  gauss   i.i.d. standard normal entries, redrawn every inner step
  prev    the last L search directions, emitted once every L inner steps
  fact    columns C of the current factor, D = L_{t−1}·I[:, C]

Sketch rank is never checked here: a deficient D shows up as a failed Cholesky
of DᵀY when the triple is built, and the optimizer applies the rank-repair
policy for the strategy in use.
"""

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from blockbfgs.config import SKETCH_Q_CAP
from blockbfgs.dataset import sample_indices
from blockbfgs.errors import BadShape, BufferNotFactored, ZeroDirection
from blockbfgs.metric import CurvatureBuffer, factored_apply


class SketchKind(str, Enum):
    IDENTITY = "identity"                # no sketch, H = I (plain SVRG)
    GAUSSIAN = "gauss"
    PREV_DIRECTIONS = "prev"
    SELF_CONDITIONING = "fact"


@dataclass(frozen=True)
class SketchStrategy:
    """Which sketch to draw; `size` is q (gauss, fact) or L (prev)."""

    kind: SketchKind
    size: int = 0

    def validate(self, d: int) -> None:
        if self.kind is SketchKind.IDENTITY:
            return
        if not 1 <= self.size <= d:
            raise BadShape(f"{self.kind.value} sketch size {self.size} outside [1, {d}]")

    @property
    def uses_metric(self) -> bool:
        return self.kind is not SketchKind.IDENTITY


def default_q(d: int) -> int:
    return max(1, min(math.ceil(math.sqrt(d)), SKETCH_Q_CAP, d))


def default_L(d: int) -> int:
    return max(1, min(math.ceil(d ** 0.25), d))


def gaussian_sketch(stream: np.random.Generator, d: int, q: int) -> np.ndarray:
    if not 1 <= q <= d:
        raise BadShape(f"gaussian sketch needs 1 <= q <= d, got q={q}, d={d}")
    return stream.standard_normal((d, q))


class DirectionWindow:
    """The last L search directions; emits them as a d×L block every L pushes."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise BadShape(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._directions: deque[np.ndarray] = deque(maxlen=capacity)
        self.counter = 0

    def __len__(self) -> int:
        return len(self._directions)

    def push(self, direction) -> np.ndarray | None:
        direction = np.asarray(direction, dtype=np.float64)
        if not np.any(direction):
            raise ZeroDirection("all-zero search direction")
        self._directions.append(direction.copy())
        self.counter += 1
        if self.counter < self.capacity:
            return None
        self.counter = 0
        return np.column_stack(self._directions)


def push_direction(window: DirectionWindow, direction) -> np.ndarray | None:
    return window.push(direction)


def self_conditioning_sketch(
    stream: np.random.Generator, buffer: CurvatureBuffer, d: int, q: int
) -> tuple[np.ndarray, np.ndarray]:
    """(C, D) with C a uniform q-subset of [d] and D = L_{t−1}·I[:, C]."""
    if not buffer.factored:
        raise BufferNotFactored("self-conditioning sketch needs a factored buffer")
    if not 1 <= q <= d:
        raise BadShape(f"self-conditioning sketch needs 1 <= q <= d, got q={q}, d={d}")
    C = sample_indices(stream, d, q).indices
    E = np.zeros((d, q))
    E[C, np.arange(q)] = 1.0
    return C, factored_apply(buffer, E)
