"""
LIBSVM datasets, the bias trick, and index sampling.

A Dataset is immutable after load: the examples aⁱ live as the rows of a CSR
matrix X (n × d), i.e. X = Aᵀ for the column-per-example A of the objective.
Feature indices are 1-based in text and 0-based in memory.

Random streams: every run derives its generators from one integer seed through
numpy's SeedSequence.spawn, and every generator is a PCG64 bit generator. This
is the documented stream algorithm that makes samples reproducible across runs
and platforms; the named children (see STREAM_NAMES) are statistically
independent, which is what the inner loop needs for S_t, T_t and D_t.
"""

import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse
from scipy.special import expit

from blockbfgs.errors import (
    BiasAlreadyAdded,
    DimensionMismatch,
    MalformedLine,
    NonFiniteValue,
    NonPositiveIndex,
    ParseError,
    SizeOutOfRange,
    UnrecognizedLabel,
)

# Raw labels accepted in LIBSVM files and what they become.
_LABEL_MAP = {0.0: -1.0, -1.0: -1.0, 1.0: 1.0}

STREAM_NAMES = ("s_sample", "t_sample", "sketch", "pick")


@dataclass(frozen=True)
class SparseExample:
    """One example aⁱ: strictly increasing 1-based indices with nonzero values."""

    indices: tuple[int, ...]
    values: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: scipy.sparse.csr_matrix          # n × d, row i is aⁱ
    labels: np.ndarray                  # n values in {-1.0, +1.0}
    bias_added: bool = False

    def __post_init__(self):
        self.X.data.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def example(self, i: int) -> SparseExample:
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return SparseExample(
            indices=tuple(int(j) + 1 for j in self.X.indices[lo:hi]),
            values=tuple(float(v) for v in self.X.data[lo:hi]),
        )

    @property
    def examples(self) -> list[SparseExample]:
        return [self.example(i) for i in range(self.n)]


@dataclass(frozen=True)
class IndexSample:
    """A without-replacement subset of [n], stored sorted and 0-based."""

    indices: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    @classmethod
    def full(cls, n: int) -> "IndexSample":
        return cls(np.arange(n, dtype=np.int64))


# ── parsing ─────────────────────────────────────────────────────────────────────

def _parse_label(token: str, line_number: int) -> float:
    try:
        raw = float(token)
    except ValueError:
        raise MalformedLine(line_number, f"label {token!r} is not numeric")
    if raw not in _LABEL_MAP:
        raise UnrecognizedLabel(line_number, f"label {token!r} is not one of 0, 1, -1, +1")
    return _LABEL_MAP[raw]


def _parse_feature(token: str, line_number: int) -> tuple[int, float]:
    idx_text, sep, val_text = token.partition(":")
    if not sep:
        raise MalformedLine(line_number, f"feature {token!r} has no colon")
    try:
        idx = int(idx_text)
        val = float(val_text)
    except ValueError:
        raise MalformedLine(line_number, f"feature {token!r} is not index:value")
    if idx < 1:
        raise NonPositiveIndex(line_number, f"feature index {idx} must be >= 1")
    if not math.isfinite(val):
        raise NonFiniteValue(line_number, f"feature {idx} has value {val_text!r}")
    return idx, val


def parse_libsvm(text, *, n_features: int | None = None) -> Dataset:
    """
    Parse LIBSVM text (a string, a text stream, or an iterable of lines).

    Labels {0, 1} and {-1, +1} map to -1/+1. Blank lines are skipped but still
    counted for error line numbers. d is the largest index seen unless
    `n_features` is given (it must cover every index).
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    lines: Iterable[str] = text

    labels: list[float] = []
    indptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    max_index = 0

    for line_number, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        labels.append(_parse_label(tokens[0], line_number))

        features: dict[int, float] = {}
        for token in tokens[1:]:
            idx, val = _parse_feature(token, line_number)
            if idx in features:
                raise MalformedLine(line_number, f"feature index {idx} repeated")
            features[idx] = val

        for idx in sorted(features):
            if features[idx] != 0.0:          # explicit zeros are not stored
                cols.append(idx - 1)
                vals.append(features[idx])
        if features:
            max_index = max(max_index, max(features))
        indptr.append(len(cols))

    d = max_index
    if n_features is not None:
        if n_features < max_index:
            raise DimensionMismatch(f"n_features={n_features} but index {max_index} was seen")
        d = n_features

    X = scipy.sparse.csr_matrix(
        (np.asarray(vals, dtype=np.float64), np.asarray(cols, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    return Dataset(X=X, labels=np.asarray(labels, dtype=np.float64))


def load_libsvm(path, *, n_features: int | None = None) -> Dataset:
    """parse_libsvm on a file; parse errors name the file."""
    with open(path, encoding="ascii") as fh:
        try:
            return parse_libsvm(fh, n_features=n_features)
        except ParseError as e:
            raise type(e)(e.line_number, f"{e.detail} (in {path})") from None


def to_libsvm(data: Dataset) -> str:
    """Serialize back to LIBSVM text; parse_libsvm(to_libsvm(ds)) reproduces ds."""
    out = []
    for i in range(data.n):
        ex = data.example(i)
        label = "+1" if data.labels[i] > 0 else "-1"
        feats = " ".join(f"{j}:{v:.17g}" for j, v in zip(ex.indices, ex.values))
        out.append(f"{label} {feats}".rstrip())
    return "\n".join(out) + ("\n" if out else "")


# ── transforms ──────────────────────────────────────────────────────────────────

def add_bias(data: Dataset) -> Dataset:
    """Append a constant feature d+1 = 1.0 to every example."""
    if data.bias_added:
        raise BiasAlreadyAdded("bias feature already appended")
    ones = scipy.sparse.csr_matrix(np.ones((data.n, 1)))
    X = scipy.sparse.hstack([data.X, ones], format="csr")
    X.sort_indices()
    return Dataset(X=X, labels=data.labels.copy(), bias_added=True)


def make_synthetic(n: int, d: int, *, density: float = 0.3, seed: int = 0) -> Dataset:
    """
    Planted logistic model: sparse Gaussian features, labels drawn from
    σ(⟨aⁱ, w_true⟩). Deterministic given `seed`.
    """
    rng = np.random.default_rng(seed)
    X = scipy.sparse.random(n, d, density=density, format="csr", random_state=rng,
                            data_rvs=rng.standard_normal)
    X.sort_indices()
    w_true = rng.standard_normal(d)
    p = expit(X @ w_true)
    labels = np.where(rng.random(n) < p, 1.0, -1.0)
    return Dataset(X=X, labels=labels)


# ── sampling ────────────────────────────────────────────────────────────────────

def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named PCG64 child streams of one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAM_NAMES, children)}


def sample_indices(stream: np.random.Generator, n: int, size: int) -> IndexSample:
    """Uniform without-replacement sample of `size` indices from [n]."""
    if not 0 <= size <= n:
        raise SizeOutOfRange(f"sample size {size} outside [0, {n}]")
    picked = stream.choice(n, size=size, replace=False)
    return IndexSample(np.sort(picked).astype(np.int64))
