import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airfed.model import (LeastSquares, OneHiddenLayer, SoftmaxRegression,
                          build_model, data_importance, finite_difference_grad,
                          global_update, local_gradient, local_loss)


def test_quadratic_exact_fit_loss_zero():
    m = LeastSquares(1)
    assert local_loss(m, np.array([0.0]), np.array([[1.0]]), np.array([0.0])) == 0.0


def test_quadratic_two_sample_loss():
    m = LeastSquares(1)
    X = np.array([[1.0], [1.0]])
    y = np.array([0.0, 2.0])
    assert local_loss(m, np.array([1.0]), X, y) == pytest.approx(0.5, abs=1e-15)


def test_softmax_uniform_logits_loss_log10():
    m = SoftmaxRegression(4, 10)
    w = np.zeros(m.n_params)
    X = np.random.default_rng(0).normal(size=(7, 4)) * 0.0  # zero inputs -> uniform
    y = np.arange(7) % 10
    assert local_loss(m, w, X, y) == pytest.approx(np.log(10), rel=1e-12)


def test_empty_shard_errors():
    m = LeastSquares(1)
    with pytest.raises(ValueError, match="empty dataset"):
        local_loss(m, np.zeros(1), np.empty((0, 1)), np.empty(0))


def test_quadratic_full_batch_gradient():
    m = LeastSquares(1)
    g = local_gradient(m, np.array([1.0]), np.array([[1.0]]), np.array([0.0]), 1)
    assert g == pytest.approx([1.0])


def test_full_batch_deterministic():
    m = SoftmaxRegression(3, 4)
    rng = np.random.default_rng(1)
    X = rng.normal(size=(9, 3))
    y = rng.integers(0, 4, 9)
    w = rng.normal(size=m.n_params)
    g1 = local_gradient(m, w, X, y, 9, np.random.default_rng(5))
    g2 = local_gradient(m, w, X, y, 9, np.random.default_rng(6))
    np.testing.assert_array_equal(g1, g2)


def test_batch_exceeds_shard_errors():
    m = LeastSquares(1)
    with pytest.raises(ValueError, match="batch exceeds shard"):
        local_gradient(m, np.zeros(1), np.ones((2, 1)), np.zeros(2), 3,
                       np.random.default_rng(0))


@pytest.mark.parametrize("kind,width", [("softmax", 0), ("mlp", 5), ("quadratic", 0)])
def test_gradient_matches_finite_differences(kind, width):
    rng = np.random.default_rng(42)
    model = build_model(kind, 4, 3, width) if kind != "quadratic" else LeastSquares(4)
    X = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, 6) if kind != "quadratic" else rng.normal(size=6)
    w = rng.normal(size=model.n_params) * 0.5
    analytic = model.grad(w, X, y)
    numeric = finite_difference_grad(lambda v: model.loss(v, X, y), w)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_softmax_single_sample_tight_fd_check():
    rng = np.random.default_rng(3)
    m = SoftmaxRegression(3, 4)
    X = rng.normal(size=(1, 3))
    y = np.array([2])
    w = rng.normal(size=m.n_params) * 0.3
    analytic = m.grad(w, X, y)
    numeric = finite_difference_grad(lambda v: m.loss(v, X, y), w, h=1e-5)
    denom = max(np.linalg.norm(numeric), 1e-12)
    assert np.linalg.norm(analytic - numeric) / denom < 1e-6


def test_per_sample_grads_average_to_grad():
    rng = np.random.default_rng(9)
    for model, ymaker in [
        (SoftmaxRegression(4, 3), lambda n: rng.integers(0, 3, n)),
        (OneHiddenLayer(4, 3, 6), lambda n: rng.integers(0, 3, n)),
        (LeastSquares(4), lambda n: rng.normal(size=n)),
    ]:
        X = rng.normal(size=(8, 4))
        y = ymaker(8)
        w = rng.normal(size=model.n_params) * 0.4
        np.testing.assert_allclose(model.per_sample_grads(w, X, y).mean(axis=0),
                                   model.grad(w, X, y), rtol=1e-12, atol=1e-12)


def test_device_average_of_full_batches_matches_pooled_gradient():
    rng = np.random.default_rng(11)
    m = SoftmaxRegression(5, 3)
    w = rng.normal(size=m.n_params) * 0.2
    X = rng.normal(size=(30, 5))
    y = rng.integers(0, 3, 30)
    shards = np.split(np.arange(30), 6)
    per_device = [m.grad(w, X[s], y[s]) for s in shards]
    np.testing.assert_allclose(np.mean(per_device, axis=0), m.grad(w, X, y),
                               rtol=0, atol=1e-10)


def test_global_update_arithmetic():
    np.testing.assert_allclose(global_update(np.array([1.0]), np.array([2.0]), 0.1),
                               [0.8], rtol=1e-15)
    w = np.array([1.0, -1.0])
    np.testing.assert_allclose(global_update(w, np.array([2.0, 2.0]), 0.5),
                               [0.0, -2.0], rtol=1e-15)
    np.testing.assert_array_equal(global_update(w, np.zeros(2), 0.3), w)


def test_global_update_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        global_update(np.zeros(2), np.zeros(3), 0.1)


def test_global_update_is_affine():
    rng = np.random.default_rng(2)
    w = rng.normal(size=4)
    g1, g2 = rng.normal(size=4), rng.normal(size=4)
    combined = global_update(w, g1 + g2, 0.05)
    sequential = global_update(global_update(w, g1, 0.05), g2, 0.05)
    np.testing.assert_allclose(combined, sequential, atol=1e-12, rtol=0)


class _FixedProbModel:
    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def predict_proba(self, w, X):
        return self.probs


def test_importance_uniform_is_log_classes():
    m = _FixedProbModel(np.full((5, 10), 0.1))
    assert data_importance(m, None, np.zeros((5, 1))) == pytest.approx(np.log(10))


def test_importance_one_hot_is_near_zero():
    p = np.full((4, 3), 1e-12)
    p[:, 0] = 1.0 - 2e-12
    m = _FixedProbModel(p)
    assert data_importance(m, None, np.zeros((4, 1))) == pytest.approx(0.0, abs=1e-9)


def test_importance_hand_value_two_samples():
    m = _FixedProbModel(np.array([[0.5, 0.5], [1.0, 0.0]]))
    expected = (np.log(2) + 0.0) / 2
    assert data_importance(m, None, np.zeros((2, 1))) == pytest.approx(expected, rel=1e-9)


def test_importance_rejects_unnormalized_probs():
    m = _FixedProbModel(np.array([[0.6, 0.6]]))
    with pytest.raises(ValueError, match="sum to 1"):
        data_importance(m, None, np.zeros((1, 1)))


def test_importance_order_invariant_and_bounded():
    rng = np.random.default_rng(8)
    model = SoftmaxRegression(3, 5)
    w = rng.normal(size=model.n_params)
    X = rng.normal(size=(20, 3))
    v1 = data_importance(model, w, X)
    v2 = data_importance(model, w, X[::-1])
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert 0.0 <= v1 <= np.log(5)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_softmax_gradient_check_property(seed):
    rng = np.random.default_rng(seed)
    m = SoftmaxRegression(3, 3)
    X = rng.normal(size=(4, 3))
    y = rng.integers(0, 3, 4)
    w = rng.normal(size=m.n_params)
    numeric = finite_difference_grad(lambda v: m.loss(v, X, y), w)
    np.testing.assert_allclose(m.grad(w, X, y), numeric, rtol=1e-5, atol=1e-6)
