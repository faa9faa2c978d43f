"""Layers, gradient checker and optimizer."""

import numpy as np
import pytest

from phonmap import nn
from phonmap.errors import InvalidArgumentError, InvalidStateError, TrainingError
from phonmap.gradsuite import (
    BATCHNORM_TOL,
    SMOOTH_TOL,
    check_batchnorm,
    check_conv,
    check_dropout,
    check_linear,
    check_relu,
    check_softmax,
)
from phonmap.nn.layers import INFER, TRAIN, RunningStats


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestLinear:
    def test_matches_matmul(self, rng):
        x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)
        np.testing.assert_allclose(nn.linear(x, w, b), x @ w + b, rtol=0, atol=1e-14)

    def test_zero_input_gives_bias(self, rng):
        b = rng.normal(size=4)
        np.testing.assert_array_equal(nn.linear(np.zeros((2, 3)), rng.normal(size=(3, 4)), b), [b, b])

    def test_identity_weight(self, rng):
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(nn.linear(x, np.eye(3), np.zeros(3)), x)

    def test_shape_error_names_both_shapes(self, rng):
        with pytest.raises(InvalidArgumentError, match=r"\(5, 3\).*\(4, 2\)"):
            nn.linear(rng.normal(size=(5, 3)), rng.normal(size=(4, 2)), np.zeros(2))

    def test_gradients(self, rng):
        assert check_linear(rng) < SMOOTH_TOL


class TestConv1dTime:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.normal(size=(7, 3))
        k = np.zeros((3, 3, 3))
        k[1] = np.eye(3)
        np.testing.assert_array_equal(nn.conv1d_time(x, k), x)

    def test_length_preserved_and_zero_padded(self):
        # K=3 summing kernel over one channel: edges see one zero pad
        x = np.arange(1.0, 6.0)[:, None]
        y = nn.conv1d_time(x, np.ones((3, 1, 1)))
        np.testing.assert_allclose(y[:, 0], [3.0, 6.0, 9.0, 12.0, 9.0])

    def test_hand_example(self):
        y = nn.conv1d_time(np.array([[1.0], [2.0], [3.0]]), np.ones((3, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(y[:, 0], [3.0, 6.0, 5.0])

    def test_single_frame_input(self, rng):
        y = nn.conv1d_time(rng.normal(size=(1, 2)), rng.normal(size=(5, 2, 4)))
        assert y.shape == (1, 4)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            nn.conv1d_time(rng.normal(size=(4, 2)), rng.normal(size=(2, 2, 2)))

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            nn.conv1d_time(rng.normal(size=(4, 2)), rng.normal(size=(3, 3, 2)))

    @pytest.mark.parametrize("K", [1, 3, 5])
    def test_gradients(self, rng, K):
        assert check_conv(rng, K) < SMOOTH_TOL


class TestBatchNorm:
    def test_train_mode_normalizes(self, rng):
        x = rng.normal(3.0, 2.0, size=(50, 4))
        st = RunningStats.fresh(4)
        y = nn.batchnorm_time(x, np.ones(4), np.zeros(4), TRAIN, st)
        np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(y.std(axis=0), 1.0, atol=1e-5)

    def test_standardized_input_is_fixed_point(self, rng):
        x = rng.normal(size=(40, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        # eps shrinks the output by 1/sqrt(1 + eps); keep it well below the tolerance
        y = nn.batchnorm_time(x, np.ones(3), np.zeros(3), TRAIN, RunningStats.fresh(3), eps=1e-9)
        np.testing.assert_allclose(y, x, rtol=0, atol=1e-6)

    def test_zero_gamma_gives_beta(self, rng):
        beta = rng.normal(size=3)
        y = nn.batchnorm_time(rng.normal(size=(5, 3)), np.zeros(3), beta, TRAIN, RunningStats.fresh(3))
        np.testing.assert_array_equal(y, np.broadcast_to(beta, (5, 3)))

    def test_running_stats_update(self, rng):
        x = rng.normal(size=(10, 2))
        st = RunningStats.fresh(2)
        nn.batchnorm_time(x, np.ones(2), np.zeros(2), TRAIN, st)
        np.testing.assert_allclose(st.mean, 0.1 * x.mean(axis=0))
        np.testing.assert_allclose(st.var, 0.9 + 0.1 * x.var(axis=0, ddof=1))

    def test_infer_mode_uses_running_stats_only(self, rng):
        x = rng.normal(size=(6, 2))
        st = RunningStats(np.array([1.0, -1.0]), np.array([4.0, 0.25]))
        y = nn.batchnorm_time(x, np.ones(2), np.zeros(2), INFER, st)
        np.testing.assert_allclose(y, (x - st.mean) / np.sqrt(st.var + 1e-5))
        np.testing.assert_array_equal(st.mean, [1.0, -1.0])

    def test_single_frame_train_rejected(self):
        with pytest.raises(InvalidArgumentError):
            nn.batchnorm_time(np.ones((1, 2)), np.ones(2), np.zeros(2), TRAIN, RunningStats.fresh(2))

    def test_unknown_mode_rejected(self):
        with pytest.raises(InvalidArgumentError):
            nn.batchnorm_time(np.ones((3, 2)), np.ones(2), np.zeros(2), "eval", RunningStats.fresh(2))

    @pytest.mark.parametrize("mode", [TRAIN, INFER])
    def test_gradients(self, rng, mode):
        assert check_batchnorm(rng, mode) < BATCHNORM_TOL


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(nn.relu(np.array([[-1.0, 0.0, 2.0]])), [[0.0, 0.0, 2.0]])

    def test_relu_gradients(self, rng):
        # inputs kept away from the kink
        assert check_relu(rng) < 1e-8

    def test_dropout_infer_is_identity(self, rng):
        x = rng.normal(size=(4, 4))
        assert nn.dropout(x, 0.4, INFER) is x

    def test_dropout_preserves_expectation(self):
        x = np.ones((1000, 1000))
        y = nn.dropout(x, 0.4, TRAIN, np.random.default_rng(0))
        assert abs(y.mean() - 1.0) < 0.01
        assert set(np.unique(y)) == {0.0, 1.0 / 0.6}

    def test_dropout_rate_zero_is_identity(self, rng):
        x = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(nn.dropout(x, 0.0, TRAIN, np.random.default_rng(0)), x)
        np.testing.assert_array_equal(nn.dropout(x, 0.0, INFER), x)

    def test_dropout_rate_validated(self):
        with pytest.raises(InvalidArgumentError):
            nn.dropout(np.ones((2, 2)), 1.0, TRAIN, np.random.default_rng(0))

    def test_dropout_gradients(self, rng):
        assert check_dropout(rng) < SMOOTH_TOL

    def test_softmax_equal_row(self):
        np.testing.assert_allclose(nn.softmax_rows(np.full((1, 4), 2.5)), [[0.25] * 4], atol=1e-15)

    def test_exp_log_softmax_matches_softmax(self, rng):
        x = rng.normal(0, 5, size=(10, 6))
        np.testing.assert_allclose(np.exp(nn.log_softmax_rows(x)), nn.softmax_rows(x), rtol=0, atol=1e-12)

    def test_softmax_rows_sum_to_one(self, rng):
        p = nn.softmax_rows(rng.normal(0, 30, size=(20, 7)))
        assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12

    def test_log_softmax_stable_for_large_logits(self):
        out = nn.log_softmax_rows(np.array([[1000.0, 0.0]]))
        np.testing.assert_allclose(out, [[0.0, -1000.0]])

    def test_softmax_permutation_equivariant(self, rng):
        x = rng.normal(size=(4, 9))
        perm = rng.permutation(9)
        np.testing.assert_allclose(nn.softmax_rows(x)[:, perm], nn.softmax_rows(x[:, perm]), rtol=0, atol=1e-15)

    def test_softmax_gradients(self, rng):
        assert check_softmax(rng) < SMOOTH_TOL


class TestGradCheck:
    def test_detects_wrong_gradient(self, rng):
        p = {"w": rng.normal(size=3)}
        assert nn.grad_check(lambda: (float(np.sum(p["w"] ** 2)), {"w": p["w"]}), p) > 0.1

    def test_restores_parameters(self, rng):
        w = rng.normal(size=(3, 2))
        p = {"w": w.copy()}
        nn.grad_check(lambda: (float(np.sum(p["w"] ** 3)), {"w": 3 * p["w"] ** 2}), p)
        np.testing.assert_array_equal(p["w"], w)

    def test_nondeterministic_loss_rejected(self, rng):
        p = {"w": rng.normal(size=3)}
        noise = np.random.default_rng(0)
        with pytest.raises(InvalidStateError):
            nn.grad_check(lambda: (float(noise.normal()), {"w": np.zeros(3)}), p)

    def test_constant_loss(self, rng):
        p = {"w": rng.normal(size=5)}
        assert nn.grad_check(lambda: (3.0, {"w": np.zeros(5)}), p) == 0.0

    def test_large_parameters_subsampled(self, rng):
        p = {"w": rng.normal(size=200)}
        calls = []

        def fn():
            calls.append(1)
            return float(np.sum(p["w"] ** 2)), {"w": 2 * p["w"]}
        assert nn.grad_check(fn, p, max_elements=10) < 1e-6
        assert len(calls) == 2 + 2 * 10


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = {"w": np.array([1.0, -2.0])}
        nn.adam_step(p, {"w": np.array([0.5, -3.0])}, nn.OptimizerState(lr=0.1))
        np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-7)

    def test_minimizes_quadratic(self):
        p = {"w": np.array([5.0, -3.0])}
        st = nn.OptimizerState(lr=0.1)
        for _ in range(500):
            nn.adam_step(p, {"w": 2 * p["w"]}, st)
        assert np.abs(p["w"]).max() < 1e-2
        assert st.step == 500

    def test_nonfinite_gradient_names_parameter_and_leaves_state(self):
        p = {"a": np.ones(2), "b": np.ones(2)}
        st = nn.OptimizerState()
        with pytest.raises(TrainingError) as info:
            nn.adam_step(p, {"a": np.ones(2), "b": np.array([np.nan, 0.0])}, st)
        assert info.value.param == "b"
        assert st.step == 0
        np.testing.assert_array_equal(p["a"], 1.0)

    def test_zero_gradient_first_step_is_noop(self):
        p = {"w": np.array([1.5, -0.5])}
        nn.adam_step(p, {"w": np.zeros(2)}, nn.OptimizerState())
        np.testing.assert_array_equal(p["w"], [1.5, -0.5])

    def test_deterministic(self):
        def run():
            r = np.random.default_rng(5)
            p = {"w": r.normal(size=4)}
            st = nn.OptimizerState()
            for _ in range(100):
                nn.adam_step(p, {"w": np.sin(p["w"]) + r.normal(size=4)}, st)
            return p["w"]
        np.testing.assert_array_equal(run(), run())

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            nn.adam_step({"a": np.ones(2)}, {"a": np.ones(3)}, nn.OptimizerState())
