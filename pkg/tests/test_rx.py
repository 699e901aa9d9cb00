import numpy as np
import pytest

from rxdet import rx_fit, rx_score
from rxdet.errors import DataError, NumericError

FOUR_POINTS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class TestFit:
    def test_four_point_hand_computation(self):
        m = rx_fit(FOUR_POINTS, ridge=0.0)
        assert np.array_equal(m.mean, [0.0, 0.0])
        cov = m.cov_factor.factor @ m.cov_factor.factor.T
        assert np.allclose(cov, np.diag([0.5, 0.5]), atol=1e-15)
        assert m.n_fit == 4 and m.d == 2

    def test_zero_variance_rescued_by_ridge(self):
        m = rx_fit(np.array([[3.0, 7.0], [3.0, 7.0]]), ridge=0.1)
        assert np.array_equal(m.mean, [3.0, 7.0])
        cov = m.cov_factor.factor @ m.cov_factor.factor.T
        assert np.allclose(cov, 0.1 * np.eye(2), atol=1e-15)

    def test_zero_variance_without_ridge_fails(self):
        with pytest.raises(NumericError):
            rx_fit(np.array([[3.0, 7.0], [3.0, 7.0]]), ridge=0.0)

    def test_matches_two_pass_covariance_oracle(self, gen):
        X = gen.normal(size=(500, 3))
        m = rx_fit(X, ridge=0.0)
        mu = X.sum(axis=0) / 500
        naive = np.zeros((3, 3))
        for row in X:
            naive += np.outer(row - mu, row - mu)
        naive /= 500
        cov = m.cov_factor.factor @ m.cov_factor.factor.T
        assert np.abs(cov - naive).max() < 1e-10

    def test_needs_two_samples(self):
        with pytest.raises(DataError):
            rx_fit(np.ones((1, 3)))


class TestScore:
    def test_mean_scores_zero(self):
        m = rx_fit(FOUR_POINTS, ridge=0.0)
        assert rx_score(m, np.array([0.0, 0.0]))[0] == 0.0

    def test_hand_computed_value(self):
        # Sigma = 0.5*I so score(1,1) = (1,1) . 2I . (1,1) = 4
        m = rx_fit(FOUR_POINTS, ridge=0.0)
        assert rx_score(m, np.array([[1.0, 1.0]]))[0] == pytest.approx(4.0, rel=1e-12)

    def test_whitened_data_is_squared_euclidean(self, gen):
        # data with identity covariance: score == squared distance to mean
        X = gen.normal(size=(20_000, 3))
        m = rx_fit(X, ridge=0.0)
        pts = gen.normal(size=(50, 3))
        direct = ((pts - m.mean) ** 2).sum(axis=1)
        # sample covariance deviates from I at ~1/sqrt(n)
        assert np.allclose(rx_score(m, pts), direct, rtol=0.05)

    def test_matches_explicit_inverse_oracle(self, gen):
        for d in (1, 2, 3, 5):
            X = gen.normal(size=(40, d)) @ gen.normal(size=(d, d))
            m = rx_fit(X, ridge=1e-2)
            pts = gen.normal(size=(10, d))
            mu = X.mean(axis=0)
            Xc = X - mu
            S = Xc.T @ Xc / X.shape[0] + 1e-2 * np.eye(d)
            Sinv = np.linalg.inv(S)
            oracle = np.einsum("ij,ij->i", pts - mu, (pts - mu) @ Sinv)
            assert np.abs(rx_score(m, pts) - oracle).max() < 1e-10

    def test_nonnegative(self, gen):
        X = gen.normal(size=(100, 4))
        m = rx_fit(X)
        assert (rx_score(m, gen.normal(size=(200, 4)) * 10) >= 0).all()

    def test_monotone_radial_growth(self, gen):
        X = gen.normal(size=(200, 3))
        m = rx_fit(X, ridge=0.0)
        u = np.array([0.3, -0.5, 0.8])
        ts = np.linspace(0.1, 5.0, 25)
        scores = rx_score(m, m.mean + ts[:, None] * u)
        assert (np.diff(scores) > 0).all()

    def test_affine_equivariance_of_scores(self, gen):
        X = gen.normal(size=(300, 3))
        pts = gen.normal(size=(40, 3))
        A = gen.normal(size=(3, 3)) + 3 * np.eye(3)
        b = gen.normal(size=3)
        base = rx_score(rx_fit(X, ridge=0.0), pts)
        mapped = rx_score(rx_fit(X @ A.T + b, ridge=0.0), pts @ A.T + b)
        assert np.abs(mapped - base).max() / np.abs(base).max() < 1e-8

    def test_dimension_mismatch(self):
        m = rx_fit(FOUR_POINTS)
        with pytest.raises(DataError):
            rx_score(m, np.ones((2, 3)))
