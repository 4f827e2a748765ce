"""Projection MLP: initialization, forward/backward, gradient checks."""

import numpy as np
import pytest

from catalog_core.errors import (
    CacheMismatchError,
    ConfigError,
    DimMismatchError,
    InvalidDimsError,
)
from catalog_core.mlp import (
    MlpParams,
    backward,
    forward,
    gelu,
    init_params,
    zeros_like_params,
)

from conftest import finite_difference, max_relative_error


class TestInit:
    def test_glorot_bound(self):
        # limit for fan_in = fan_out = 4 is sqrt(6/8) ~ 0.8660254
        params = init_params([4, 4], seed=11)
        assert np.all(np.abs(params.weights[0]) <= 0.8660254037844387)

    def test_biases_zero(self):
        params = init_params([5, 7, 2], seed=0)
        assert all(np.all(b == 0.0) for b in params.biases)

    def test_deterministic(self):
        a = init_params([6, 9, 3], seed=42)
        b = init_params([6, 9, 3], seed=42)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_published_hidden_width_shapes(self):
        params = init_params([768, 1045, 512], seed=0)
        assert [w.shape for w in params.weights] == [(768, 1045), (1045, 512)]

    @pytest.mark.parametrize("dims", [[4], [], [4, 0, 2], [0, 3]])
    def test_bad_dims(self, dims):
        with pytest.raises(InvalidDimsError):
            init_params(dims)

    def test_bad_dropout(self):
        with pytest.raises(ConfigError):
            init_params([3, 3], dropout_rate=1.0)


class TestGelu:
    def test_zero(self):
        assert gelu(0.0) == 0.0

    def test_at_one(self):
        # 1 * Phi(1), Phi from erf
        assert gelu(1.0) == pytest.approx(0.8413447460685429, abs=1e-14)

    def test_deep_negative_tail(self):
        assert abs(gelu(-10.0)) < 1e-8

    def test_array_matches_scalar(self):
        xs = np.linspace(-4, 4, 23)
        np.testing.assert_allclose(gelu(xs), [gelu(float(v)) for v in xs], atol=1e-15)


def _identity_params(dim: int) -> MlpParams:
    return MlpParams(layer_dims=[dim, dim], weights=[np.eye(dim)], biases=[np.zeros(dim)])


class TestForward:
    def test_identity_single_layer(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        out, _ = forward(x, _identity_params(3))
        assert np.array_equal(out, x)

    def test_eval_equals_train_without_dropout(self):
        params = init_params([4, 6, 2], dropout_rate=0.0, seed=1)
        x = np.random.default_rng(2).normal(size=(7, 4))
        train_out, _ = forward(x, params, mode="train", seed=5)
        eval_out, _ = forward(x, params, mode="eval")
        assert np.array_equal(train_out, eval_out)

    def test_train_mode_deterministic_given_seed(self):
        params = init_params([4, 6, 2], dropout_rate=0.4, seed=1)
        x = np.random.default_rng(3).normal(size=(7, 4))
        out1, cache1 = forward(x, params, mode="train", seed=99)
        out2, cache2 = forward(x, params, mode="train", seed=99)
        assert np.array_equal(out1, out2)
        assert all(np.array_equal(m1, m2) for m1, m2 in zip(cache1.dropout_masks, cache2.dropout_masks))

    def test_different_seeds_differ(self):
        params = init_params([4, 8, 2], dropout_rate=0.5, seed=1)
        x = np.random.default_rng(4).normal(size=(6, 4))
        out1, _ = forward(x, params, mode="train", seed=0)
        out2, _ = forward(x, params, mode="train", seed=1)
        assert not np.array_equal(out1, out2)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            forward(np.ones((2, 5)), _identity_params(3))

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            forward(np.ones((2, 3)), _identity_params(3), mode="predict")

    def test_dropout_preserves_expectation(self):
        # inverted dropout: mean over many masks converges to the eval output
        params = init_params([3, 16, 2], dropout_rate=0.3, seed=7)
        x = np.random.default_rng(8).normal(size=(2, 3))
        eval_out, _ = forward(x, params, mode="eval")
        n_samples = 10_000
        acc = np.zeros_like(eval_out)
        sq = np.zeros_like(eval_out)
        for seed in range(n_samples):
            out, _ = forward(x, params, mode="train", seed=seed)
            acc += out
            sq += out * out
        mean = acc / n_samples
        std_err = np.sqrt((sq / n_samples - mean**2) / n_samples)
        assert np.all(np.abs(mean - eval_out) <= 3.0 * std_err + 1e-12)


class TestBackward:
    def test_zero_grad_out_gives_zero_grads(self):
        params = init_params([4, 5, 3], seed=0)
        x = np.random.default_rng(1).normal(size=(6, 4))
        out, cache = forward(x, params)
        grads, grad_x = backward(cache, params, np.zeros_like(out))
        assert all(np.all(g == 0.0) for g in grads.weights + grads.biases)
        assert np.all(grad_x == 0.0)

    def test_linear_layer_closed_form(self):
        # loss = sum(X @ W + b): dW = X^T @ 1, db = B * 1
        rng = np.random.default_rng(2)
        params = init_params([4, 3], seed=3)
        x = rng.normal(size=(5, 4))
        out, cache = forward(x, params)
        grads, grad_x = backward(cache, params, np.ones_like(out))
        np.testing.assert_allclose(grads.weights[0], x.T @ np.ones((5, 3)), atol=1e-12)
        np.testing.assert_allclose(grads.biases[0], np.full(3, 5.0), atol=1e-12)
        np.testing.assert_allclose(grad_x, np.ones((5, 3)) @ params.weights[0].T, atol=1e-12)

    @pytest.mark.parametrize("dims,dropout", [([3, 4, 2], 0.0), ([5, 4, 3, 2], 0.0), ([4, 6, 3], 0.35)])
    def test_finite_difference_check(self, dims, dropout):
        rng = np.random.default_rng(sum(dims))
        params = init_params(dims, dropout_rate=dropout, seed=13)
        x = rng.normal(size=(4, dims[0]))
        target = rng.normal(size=(4, dims[-1]))
        mode = "train" if dropout else "eval"

        def loss_value() -> float:
            out, _ = forward(x, params, mode=mode, seed=21)
            return float(np.sum(out * target))

        out, cache = forward(x, params, mode=mode, seed=21)
        grads, grad_x = backward(cache, params, target)

        for layer in range(len(params.weights)):
            numeric_w = finite_difference(loss_value, params.weights[layer])
            assert max_relative_error(grads.weights[layer], numeric_w) < 1e-5
            numeric_b = finite_difference(loss_value, params.biases[layer])
            assert max_relative_error(grads.biases[layer], numeric_b) < 1e-5
        numeric_x = finite_difference(loss_value, x)
        assert max_relative_error(grad_x, numeric_x) < 1e-5

    def test_cache_mismatch(self):
        params = init_params([4, 5, 3], seed=0)
        other = init_params([4, 7, 3], seed=0)
        x = np.random.default_rng(1).normal(size=(2, 4))
        out, cache = forward(x, params)
        with pytest.raises(CacheMismatchError):
            backward(cache, other, np.zeros_like(out))
        with pytest.raises(CacheMismatchError):
            backward(cache, params, np.zeros((3, 3)))

    def test_zeros_like_params_shapes(self):
        params = init_params([4, 5, 3], seed=0)
        grads = zeros_like_params(params)
        assert [g.shape for g in grads.weights] == [w.shape for w in params.weights]
        assert [g.shape for g in grads.biases] == [b.shape for b in params.biases]
