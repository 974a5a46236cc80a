import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from daedl import density, predict
from daedl.dirichlet import expected_probs
from daedl.errors import DomainError

logit_vectors = hnp.arrays(np.float64, st.integers(2, 10), elements=st.floats(-30, 30))


class TestConcentration:
    def test_alpha_train(self):
        np.testing.assert_array_equal(predict.alpha_train(np.zeros(3)), np.ones(3))
        np.testing.assert_allclose(predict.alpha_train([math.log(2), 0.0]), [2.0, 1.0], rtol=1e-15)

    def test_alpha_predict(self):
        np.testing.assert_array_equal(predict.alpha_predict([5.0, -3.0], 0.0), [1.0, 1.0])
        np.testing.assert_allclose(predict.alpha_predict([2.0, -1.0], 0.5), [math.e, math.exp(-0.5)], rtol=1e-15)
        z = np.array([0.3, -1.2, 2.0])
        np.testing.assert_array_equal(predict.alpha_predict(z, 1.0), predict.alpha_train(z))

    def test_scale_domain(self):
        for s in (-0.1, 1.5, np.nan):
            with pytest.raises(DomainError):
                predict.alpha_predict([1.0, 0.0], s)
        with pytest.raises(DomainError):
            predict.alpha_train([np.inf, 0.0])

    def test_conventional(self):
        np.testing.assert_array_equal(predict.alpha_edl_conventional([1, 0, 0], "relu"), [2, 1, 1])
        np.testing.assert_array_equal(predict.alpha_edl_conventional([-1, -5, -0.1], "relu"), [1, 1, 1])
        np.testing.assert_allclose(predict.alpha_edl_conventional([0.0, 0.0], "softplus"), 1 + math.log(2))
        with pytest.raises(DomainError):
            predict.alpha_edl_conventional([0.0, 0.0], "exp")

    def test_clamped(self):
        a = predict.alpha_train([1e4, -1e4])
        np.testing.assert_allclose(a, [1e300, 1e-30], rtol=1e-12)

    def test_per_row_scale(self):
        z = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(predict.concentration(z, "exp", np.array([0.0, 1.0])), [[1, 1], np.exp([3, 4])])


class TestTemperature:
    @given(logit_vectors, st.floats(1e-6, 1.0))
    def test_softmax_identity(self, z, s):
        np.testing.assert_allclose(expected_probs(predict.alpha_predict(z, s)), predict.softmax(z * s),
                                   rtol=0, atol=1e-12)

    @given(logit_vectors, st.floats(1e-6, 1.0))
    def test_argmax_invariant(self, z, s):
        top = np.sort(z)[-2:]
        assume((top[1] - top[0]) * s > 1e-9)
        out = predict.scores(predict.alpha_predict(z, s), s)
        assert out.predicted_class == np.argmax(z * s)

    def test_softmax_train(self, rng):
        z = rng.normal(size=(10, 4))
        np.testing.assert_allclose(expected_probs(predict.alpha_train(z)), predict.softmax(z), atol=1e-12)


class TestPseudoCounts:
    def test_values(self):
        np.testing.assert_array_equal(predict.pseudo_counts([2, 1, 1], "ones"), [1, 0, 0])
        np.testing.assert_array_equal(predict.pseudo_counts([2, 1, 1], "zeros"), [2, 1, 1])
        with pytest.raises(DomainError):
            predict.pseudo_counts([0.5, 0.5], "ones")
        with pytest.raises(DomainError):
            predict.pseudo_counts([1, 1], "half")


class TestScores:
    def test_fields(self):
        out = predict.scores(np.array([[2.0, 1.0, 1.0]]))
        np.testing.assert_allclose(out.probs, [[0.5, 0.25, 0.25]])
        assert out.aleatoric_conf[0] == 0.5
        assert out.epistemic_conf[0] == 4.0
        assert out.predicted_class[0] == 0
        assert out.variance[0] == pytest.approx((0.25 + 2 * 0.1875) / 5)

    def test_tie_lowest_index(self):
        assert predict.scores(np.array([1.0, 3.0, 3.0])).predicted_class == 1

    @given(logit_vectors, st.floats(0.0, 1.0))
    def test_bounds(self, z, s):
        out = predict.scores(predict.alpha_predict(z, s), s)
        c = len(z)
        assert 1.0 / c - 1e-12 <= out.aleatoric_conf <= 1.0
        assert out.epistemic_conf >= c * np.exp(np.min(z) * s) * (1 - 1e-12)


class TestPredict:
    def test_far_point_uniform(self, moons_model):
        net, gda, _, _ = moons_model
        out = predict.predict(net, gda, np.array([40.0, -40.0]))
        assert out.s == 0.0
        np.testing.assert_allclose(out.probs, [0.5, 0.5], rtol=0, atol=1e-12)
        assert out.epistemic_conf == 2.0
        assert out.entropy == pytest.approx(math.log(2), abs=1e-12)

    def test_densest_training_point(self, moons_model):
        net, gda, tr, _ = moons_model
        z = net.features(tr.X)
        i = int(np.argmax(density.log_density(gda, z)))
        out = predict.predict(net, gda, tr.X[i])
        _, logits = net.forward(tr.X[i])
        assert out.s == 1.0
        np.testing.assert_allclose(out.alpha, predict.alpha_train(logits), rtol=1e-15)

    def test_temperature_view(self, moons_model, rng):
        net, gda, _, _ = moons_model
        X = rng.uniform(-3, 3, size=(200, 2))
        out = predict.predict(net, gda, X)
        _, logits = net.forward(X)
        np.testing.assert_allclose(out.probs, predict.softmax(logits * out.s[:, None]), rtol=0, atol=1e-12)

    def test_no_density(self, moons_model):
        net, _, tr, _ = moons_model
        out = predict.predict(net, None, tr.X[:5])
        np.testing.assert_array_equal(out.s, 1.0)

    def test_dimension_mismatch(self, moons_model):
        net, gda, _, _ = moons_model
        with pytest.raises(DomainError):
            predict.predict(net, gda, np.zeros(3))
        bad = density.fit(np.random.default_rng(0).normal(size=(10, 3)), np.repeat([0, 1], 5))
        with pytest.raises(DomainError):
            predict.predict(net, bad, np.zeros(2))
