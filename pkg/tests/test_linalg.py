import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmreg import ContractError, Dataset, RankDeficiencyError, SingularScatterError
from mmreg.linalg import (det_normalize, mahalanobis_norms, residuals, weighted_ls,
                          weighted_ls_column)


def test_dataset_validation():
    with pytest.raises(ContractError):
        Dataset(np.ones((2, 2)), np.ones((2, 1)))  # n < p + q
    with pytest.raises(ContractError):
        Dataset(np.ones((4, 1)), np.ones((3, 1)))
    X = np.ones((4, 1))
    X[0, 0] = np.nan
    with pytest.raises(ContractError):
        Dataset(X, np.ones((4, 1)))


def test_residuals_examples():
    rng = np.random.default_rng(0)
    X, Y = rng.standard_normal((5, 2)), rng.standard_normal((5, 3))
    d = Dataset(X, Y)
    assert np.array_equal(residuals(d, np.zeros((2, 3))), Y)
    B = rng.standard_normal((2, 3))
    assert np.allclose(residuals(Dataset(X, X @ B), B), 0.0, atol=1e-14)
    d1 = Dataset(np.array([[1.0], [2.0]]), np.array([[3.0], [5.0]]))
    assert np.allclose(residuals(d1, np.array([[2.0]])).ravel(), [1.0, 1.0])


def test_residuals_shape_mismatch():
    d = Dataset(np.ones((4, 1)), np.ones((4, 2)))
    with pytest.raises(ContractError):
        residuals(d, np.zeros((2, 2)))


def test_mahalanobis_examples():
    assert mahalanobis_norms(np.array([[3.0, 4.0]]), np.eye(2))[0] == pytest.approx(5.0)
    assert mahalanobis_norms(np.zeros((1, 2)), np.eye(2))[0] == 0.0
    v = mahalanobis_norms(np.array([[2.0, 1.0]]), np.diag([4.0, 1.0]))[0]
    assert v == pytest.approx(np.sqrt(2.0), rel=1e-14)


def test_mahalanobis_singular_and_asymmetric():
    with pytest.raises(SingularScatterError):
        mahalanobis_norms(np.ones((1, 2)), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(ContractError):
        mahalanobis_norms(np.ones((1, 2)), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_det_normalize_examples():
    assert np.allclose(det_normalize(np.eye(3)), np.eye(3))
    assert np.allclose(det_normalize(np.diag([4.0, 1.0])), np.diag([2.0, 0.5]))
    assert np.allclose(det_normalize(2 * np.eye(3)), np.eye(3))


spd = st.integers(1, 5).flatmap(lambda q: arrays(
    float, (q + 2, q), elements=st.floats(-3, 3))).map(
    lambda A: A.T @ A + 0.1 * np.eye(A.shape[1]))


@given(spd)
@settings(max_examples=60, deadline=None)
def test_det_normalize_unit_det_and_idempotent(S):
    G = det_normalize(S)
    assert np.linalg.det(G) == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(det_normalize(G), G, rtol=1e-10, atol=1e-12)


@given(spd, st.floats(0.1, 10))
@settings(max_examples=60, deadline=None)
def test_mahalanobis_scale_homogeneity(S, c):
    U = np.random.default_rng(1).standard_normal((4, S.shape[0]))
    a = mahalanobis_norms(U, S)
    b = mahalanobis_norms(U, c * c * S)
    assert np.allclose(b, a / c, rtol=1e-9)


def test_weighted_ls_examples():
    X = np.ones((2, 1))
    y = np.array([0.0, 2.0])
    assert weighted_ls_column(X, y, np.array([1.0, 1.0]))[0] == pytest.approx(1.0)
    assert weighted_ls_column(X, y, np.array([3.0, 1.0]))[0] == pytest.approx(0.5)
    rng = np.random.default_rng(3)
    Xs = rng.standard_normal((3, 3))
    beta = np.array([1.0, -2.0, 0.5])
    assert np.allclose(weighted_ls_column(Xs, Xs @ beta, np.ones(3)), beta, atol=1e-12)


def test_weighted_ls_matches_normal_equations():
    rng = np.random.default_rng(4)
    X, Y = rng.standard_normal((30, 3)), rng.standard_normal((30, 2))
    w = rng.uniform(0, 2, 30)
    ref = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w[:, None] * Y))
    assert np.allclose(weighted_ls(X, Y, w), ref, atol=1e-12)


def test_weighted_ls_rank_deficiency():
    X = np.ones((4, 2))
    with pytest.raises(RankDeficiencyError) as info:
        weighted_ls_column(X, np.arange(4.0), np.ones(4))
    assert info.value.rank == 1
    X = np.random.default_rng(0).standard_normal((4, 2))
    with pytest.raises(RankDeficiencyError):
        weighted_ls_column(X, np.arange(4.0), np.array([1.0, 0, 0, 0]))
    with pytest.raises(ContractError):
        weighted_ls_column(X, np.arange(4.0), np.array([1.0, -1, 1, 1]))
