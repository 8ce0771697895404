import numpy as np
import pytest

from mmreg import Dataset


def planted(n=60, p=2, q=2, seed=0, noise=1.0, B=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    B = rng.standard_normal((p, q)) if B is None else np.asarray(B, dtype=float)
    Y = X @ B + noise * rng.standard_normal((n, q))
    return Dataset(X, Y), B


@pytest.fixture
def gaussian_data():
    return planted(n=100, p=2, q=2, seed=11, B=np.zeros((2, 2)))[0]


def random_scenario_dataset(seed):
    """Dataset with varied n, p, q and contamination, for invariant sweeps."""
    rng = np.random.default_rng([2024, seed])
    p = int(rng.integers(1, 4))
    q = int(rng.integers(1, 4))
    n = int(rng.integers(3 * (p + q + 1), 120))
    X = rng.standard_normal((n, p))
    if rng.random() < 0.5:
        X[:, -1] = 1.0  # intercept column
    B = rng.normal(scale=2.0, size=(p, q))
    Y = X @ B + rng.standard_normal((n, q)) * rng.uniform(0.1, 3.0)
    k = int(rng.uniform(0.0, 0.3) * n)
    if k:
        X[:k, 0] = rng.normal(10.0, 1.0, k)
        Y[:k] = rng.normal(rng.uniform(-50, 50), 1.0, (k, q))
    return Dataset(X, Y)
