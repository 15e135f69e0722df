import numpy as np
import pytest

from blockbfgs.dataset import make_synthetic
from blockbfgs.objective import LogisticModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def tiny_logistic():
    """40 examples, 5 features, reg 0.1: well conditioned and cheap."""
    return LogisticModel(make_synthetic(40, 5, density=0.6, seed=3), reg=0.1)


def random_spd(rng, d, *, lo=1.0, hi=None):
    """SPD matrix with eigenvalues spread over [lo, hi] (hi defaults to d)."""
    hi = float(d) if hi is None else hi
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q @ np.diag(np.linspace(lo, hi, d)) @ Q.T
