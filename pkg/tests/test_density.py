import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from daedl import data, density
from daedl.errors import DomainError


def toy():
    Z = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
    return Z, np.array([0, 0, 1, 1])


def mixture_mp(model, z):
    """Direct mixture sum in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    total = mpmath.mpf(0)
    for c in range(model.n_classes):
        cov = mpmath.matrix(density.covariance(model, c).tolist())
        diff = mpmath.matrix((z - model.means[c]).tolist())
        maha = (diff.T * mpmath.inverse(cov) * diff)[0]
        norm = (2 * mpmath.pi) ** (-len(z) / 2) * mpmath.det(cov) ** mpmath.mpf(-0.5)
        total += model.weights[c] * norm * mpmath.exp(-maha / 2)
    return float(mpmath.log(total))


class TestFit:
    def test_means_and_weights(self):
        m = density.fit(*toy())
        np.testing.assert_array_equal(m.weights, [0.5, 0.5])
        np.testing.assert_array_equal(m.means, [[1.0, 0.0], [0.0, 3.0]])

    def test_singular_covariance_jitter(self):
        m = density.fit(*toy())
        cov = density.covariance(m, 0)
        # raw covariance is [[2, 0], [0, 0]]; jitter is 1e-6 * trace / H
        np.testing.assert_allclose(cov, [[2 + 1e-6, 0], [0, 1e-6]], rtol=1e-9, atol=1e-15)
        assert m.d_min <= m.d_max

    def test_sample_covariance(self, rng):
        Z = rng.normal(size=(200, 3)) @ np.diag([1.0, 2.0, 0.5])
        y = np.repeat([0, 1], 100)
        m = density.fit(Z, y)
        for c in (0, 1):
            np.testing.assert_allclose(density.covariance(m, c), np.cov(Z[y == c].T), rtol=1e-5, atol=1e-6)
        assert abs(m.weights.sum() - 1.0) < 1e-12

    def test_permutation_invariant(self, rng):
        Z = rng.normal(size=(60, 3))
        y = rng.integers(0, 3, 60)
        perm = rng.permutation(60)
        a, b = density.fit(Z, y), density.fit(Z[perm], y[perm])
        np.testing.assert_allclose(a.means, b.means, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(a.cov_factors, b.cov_factors, rtol=1e-12, atol=1e-15)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_duplication(self, rng):
        Z = rng.normal(size=(40, 2))
        y = np.repeat([0, 1], 20)
        a, b = density.fit(Z, y), density.fit(np.vstack([Z, Z]), np.r_[y, y])
        np.testing.assert_allclose(a.means, b.means, rtol=1e-13, atol=1e-15)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_small_class(self):
        with pytest.raises(DomainError, match="class 1"):
            density.fit(np.zeros((3, 2)), np.array([0, 0, 1]))

    def test_range_from_training_features(self, rng):
        Z = rng.normal(size=(50, 2))
        y = np.repeat([0, 1], 25)
        m = density.fit(Z, y)
        lp = density.log_density(m, Z)
        assert m.d_min == lp.min() and m.d_max == lp.max()

    def test_diagonal_flag(self, rng):
        Z = rng.normal(size=(50, 3))
        m = density.fit(Z, np.repeat([0, 1], 25), diagonal=True)
        L = m.cov_factors[0]
        np.testing.assert_array_equal(L, np.diag(np.diag(L)))


class TestLogDensity:
    def test_single_class_at_mean(self, rng):
        Z = rng.normal(size=(30, 3))
        m = density.fit(Z, np.zeros(30, dtype=int))
        expected = -1.5 * math.log(2 * math.pi) - 0.5 * m.log_dets[0]
        assert density.log_density(m, m.means[0]) == pytest.approx(expected, abs=1e-12)

    def test_extended_precision_oracle(self, rng):
        Z = np.vstack([rng.normal(loc=c, size=(30, 2)) for c in (-2, 0, 3)])
        m = density.fit(Z, np.repeat([0, 1, 2], 30))
        for z in rng.normal(scale=2.0, size=(20, 2)):
            assert density.log_density(m, z) == pytest.approx(mixture_mp(m, z), abs=1e-9)

    def test_tail_monotone(self, rng):
        Z = rng.normal(size=(40, 2))
        m = density.fit(Z, np.repeat([0, 1], 20))
        direction = np.array([0.6, 0.8])
        values = density.log_density(m, np.outer(np.geomspace(5, 1e4, 40), direction))
        assert np.all(np.diff(values) < 0)
        assert np.all(np.isfinite(values))

    def test_errors(self):
        m = density.fit(*toy())
        with pytest.raises(DomainError):
            density.log_density(m, [np.nan, 0.0])
        with pytest.raises(DomainError):
            density.log_density(m, [0.0, 0.0, 0.0])

    def test_batch_matches_single(self, rng):
        m = density.fit(rng.normal(size=(20, 2)), np.repeat([0, 1], 10))
        Z = rng.normal(size=(5, 2))
        np.testing.assert_allclose(density.log_density(m, Z), [density.log_density(m, z) for z in Z], rtol=1e-14)


class TestNormalize:
    @pytest.fixture
    def model(self):
        return density.fit(*toy())

    def test_boundaries(self, model):
        assert density.normalize(model, model.d_max) == 1.0
        assert density.normalize(model, model.d_min) == 0.0
        assert density.normalize(model, model.d_min - 10) == 0.0
        assert density.normalize(model, (model.d_min + model.d_max) / 2) == pytest.approx(0.5)

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_monotone(self, a, b):
        m = density.fit(*toy())
        lo, hi = min(a, b), max(a, b)
        assert density.normalize(m, lo) <= density.normalize(m, hi)

    def test_degenerate_range(self, caplog):
        Z = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 6.0]])
        m = density.fit(Z, np.array([0, 0, 1, 1]))
        m = density.GdaModel(m.weights, m.means, m.cov_factors, m.log_dets, 1.0, 1.0)
        assert density.normalize(m, 1.0) == 1.0
        assert density.normalize(m, 0.5) == 0.0
        assert "degenerate" in caplog.text


class TestTrainedFeatures:
    def test_id_denser_than_noise(self, moons_model):
        net, gda, tr, _ = moons_model
        held = data.two_moons(200, 0.1, seed=99)
        noise = data.uniform_ood(200, [[-4, 5], [-3, 3.5]], seed=1)
        s_id = density.normalize(gda, density.log_density(gda, net.features(held.X)))
        s_ood = density.normalize(gda, density.log_density(gda, net.features(noise.X)))
        assert s_id.mean() > s_ood.mean()
