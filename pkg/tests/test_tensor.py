"""Tests for the autodiff tensor engine: forward values, gradients, optimisers."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import graphx.tensor as gt
from graphx.errors import (
    DegenerateRowError,
    ShapeError,
    ValidationError,
)
from graphx.tensor import (
    Adam,
    SGD,
    Tensor,
    activate,
    adam_step,
    astensor,
    bce_loss,
    concat,
    grad_check,
    init_adam,
    mae_loss,
    matmul,
    maximum,
    mse_loss,
    row_softmax,
    sigmoid,
    take,
)


class TestForwardValues:
    def test_sigmoid_known_points(self):
        x = Tensor([0.0, 2.0])
        assert_allclose(sigmoid(x).data, [0.5, 0.880797], atol=1e-5)

    def test_relu_known_points(self):
        x = Tensor([-3.0, 0.0, 3.0])
        assert_allclose(activate(x, "relu").data, [0.0, 0.0, 3.0])

    def test_leaky_relu_slope(self):
        x = Tensor([-2.0, 2.0])
        assert_allclose(activate(x, "leaky_relu", alpha=0.2).data, [-0.4, 2.0])

    def test_tanh_matches_numpy(self):
        x = np.linspace(-2, 2, 7)
        assert_allclose(activate(Tensor(x), "tanh").data, np.tanh(x), rtol=1e-12)

    def test_matmul_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert_allclose(matmul(a, b).data, b.data)

    def test_matmul_known_product(self):
        a = Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = Tensor([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
        assert_allclose(matmul(a, b).data, [[58.0, 64.0], [139.0, 154.0]])

    def test_matmul_batched_matches_loop(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 4, 3))
        w = rng.normal(size=(3, 2))
        got = matmul(Tensor(x), Tensor(w)).data
        want = np.stack([x[i] @ w for i in range(5)])
        assert_allclose(got, want, rtol=1e-12)

    def test_matmul_associativity(self):
        rng = np.random.default_rng(1)
        a, b, c = (Tensor(rng.normal(size=(4, 4))) for _ in range(3))
        left = matmul(matmul(a, b), c).data
        right = matmul(a, matmul(b, c)).data
        assert_allclose(left, right, atol=1e-9)

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_mse_known_value(self):
        loss = mse_loss(Tensor([1.0, 2.0, 3.0]), Tensor([2.0, 2.0, 5.0]))
        assert_allclose(loss.item(), 5.0 / 3.0, rtol=1e-12)

    def test_mae_known_value(self):
        loss = mae_loss(Tensor([1.0, 2.0, 3.0]), Tensor([2.0, 2.0, 5.0]))
        assert_allclose(loss.item(), 1.0, rtol=1e-12)

    def test_bce_known_value(self):
        loss = bce_loss(Tensor([0.9, 0.2]), Tensor([1.0, 0.0]))
        assert_allclose(loss.item(), 0.164252, atol=1e-5)

    def test_bce_rejects_fractional_labels(self):
        with pytest.raises(ValidationError):
            bce_loss(Tensor([0.5]), Tensor([0.3]))

    def test_bce_clamps_extreme_probabilities(self):
        loss = bce_loss(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]))
        assert np.isfinite(loss.item())
        assert loss.item() < 1e-6

    def test_bce_mask_restricts_mean(self):
        probs = Tensor([0.9, 0.5, 0.2])
        labels = Tensor([1.0, 1.0, 0.0])
        masked = bce_loss(probs, labels, mask=np.array([1.0, 0.0, 1.0]))
        want = -(np.log(0.9) + np.log(0.8)) / 2.0
        assert_allclose(masked.item(), want, rtol=1e-12)

    def test_row_softmax_uniform_rows(self):
        x = Tensor(np.zeros((2, 3)))
        s = row_softmax(x, np.ones((2, 3)))
        assert_allclose(s.data, np.full((2, 3), 1.0 / 3.0), rtol=1e-12)

    def test_row_softmax_masked_entries_get_zero(self):
        x = Tensor([[1.0, 2.0, 3.0]])
        s = row_softmax(x, np.array([[1.0, 0.0, 1.0]]))
        assert s.data[0, 1] == 0.0
        assert_allclose(s.data.sum(axis=-1), [1.0], rtol=1e-12)

    def test_row_softmax_fully_masked_row_raises(self):
        with pytest.raises(DegenerateRowError):
            row_softmax(Tensor(np.zeros((2, 2))), np.array([[1.0, 1.0], [0.0, 0.0]]))

    def test_row_softmax_rejects_fractional_mask(self):
        with pytest.raises(ValidationError):
            row_softmax(Tensor(np.zeros((1, 2))), np.array([[0.5, 1.0]]))

    def test_constructor_rejects_nan(self):
        with pytest.raises(ValidationError):
            Tensor([1.0, np.nan])

    def test_take_gathers_rows(self):
        x = Tensor(np.arange(12.0).reshape(4, 3))
        got = take(x, [2, 0], axis=0)
        assert_allclose(got.data, x.data[[2, 0]])

    def test_concat_stacks_rows(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.zeros((1, 3)))
        assert concat([a, b], axis=0).shape == (3, 3)


class TestBackward:
    def test_fanout_gradient_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = Tensor(3.0, requires_grad=True)
        z = x * y + x
        z.backward()
        assert_allclose(x.grad, 4.0)
        assert_allclose(y.grad, 2.0)

    def test_backward_rejects_nonscalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_two_backward_calls_accumulate(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        (x * x).backward()
        assert_allclose(x.grad, 12.0)

    def test_detach_blocks_gradient(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * 3.0
        z = y.detach() * x
        z.backward()
        assert_allclose(x.grad, 6.0)

    def test_bias_broadcast_gradient_sums_rows(self):
        h = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        (h + b).sum().backward()
        assert b.grad.shape == (3,)
        assert_allclose(b.grad, np.full(3, 4.0))

    def test_take_repeated_indices_accumulate(self):
        x = Tensor(np.ones(3), requires_grad=True)
        take(x, [0, 0, 2], axis=0).sum().backward()
        assert_allclose(x.grad, [2.0, 0.0, 1.0])

    def test_concat_backward_splits(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((3, 2)), requires_grad=True)
        (concat([a, b], axis=0) * 2.0).sum().backward()
        assert_allclose(a.grad, np.full((2, 2), 2.0))
        assert_allclose(b.grad, np.full((3, 2), 2.0))

    def test_maximum_tie_routes_to_first(self):
        a = Tensor([1.0, 5.0], requires_grad=True)
        b = Tensor([1.0, 2.0], requires_grad=True)
        maximum(a, b).sum().backward()
        assert_allclose(a.grad, [1.0, 1.0])
        assert_allclose(b.grad, [0.0, 0.0])

    def test_mean_gradient_uniform(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.mean().backward()
        assert_allclose(x.grad, np.full((2, 3), 1.0 / 6.0))

    def test_batched_matmul_weight_gradient(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 4, 3))
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        matmul(Tensor(x), w).sum().backward()
        want = sum(x[i].T @ np.ones((4, 2)) for i in range(5))
        assert_allclose(w.grad, want, rtol=1e-10)


class TestGradCheck:
    def test_random_composites_match_finite_differences(self):
        """Smooth composite programs agree with central differences to 1e-4."""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            w1 = Tensor(rng.normal(size=(3, 4)) * 0.7, requires_grad=True)
            b1 = Tensor(rng.normal(size=4) * 0.3, requires_grad=True)
            w2 = Tensor(rng.normal(size=(4, 2)) * 0.7, requires_grad=True)
            x = Tensor(rng.normal(size=(5, 3)))
            t = Tensor(rng.normal(size=(5, 2)))
            labels = Tensor((rng.random((5, 5)) < 0.4).astype(float))
            mask = np.ones((5, 5))

            def f():
                h = activate(matmul(x, w1) + b1, "tanh")
                out = matmul(h, w2)
                scores = row_softmax(matmul(out, out.T), mask)
                fit = mse_loss(out, t)
                link = bce_loss(sigmoid(matmul(out, out.T)), labels)
                return fit + link + scores.mean() * 0.5

            assert grad_check(f, [w1, b1, w2]) < 1e-4

    def test_relu_gradient_away_from_kink(self):
        x = Tensor([-1.0, -0.3, 0.4, 2.0], requires_grad=True)

        def f():
            return activate(x * 1.0, "relu").sum()

        assert grad_check(f, [x]) < 1e-6

    def test_take_and_concat_gradients(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)

        def f():
            joined = concat([a, b], axis=0)
            picked = take(joined, [0, 5, 2, 2], axis=0)
            return mse_loss(picked, Tensor(np.zeros((4, 2))))

        assert grad_check(f, [a, b]) < 1e-6

    def test_corrupted_backward_rule_is_caught(self, monkeypatch):
        monkeypatch.setattr(gt, "_dsigmoid", lambda y: y)
        x = Tensor([0.3, -0.8, 1.2], requires_grad=True)

        def f():
            return sigmoid(x * 1.0).sum()

        assert grad_check(f, [x]) > 1e-4

    def test_constant_function_has_zero_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)

        def f():
            return Tensor(5.0)

        assert grad_check(f, [x]) == 0.0


class TestOptimisers:
    def test_adam_first_step_size(self):
        x = Tensor(1.0, requires_grad=True)
        opt = Adam([x], learning_rate=1e-3)
        (x * x).backward()
        opt.step()
        assert_allclose(x.item(), 1.0 - 1e-3, atol=1e-6)

    def test_adam_zero_gradient_leaves_params(self):
        x = Tensor(2.5, requires_grad=True)
        state = init_adam([x])
        adam_step([x], [np.zeros(())], state)
        assert x.item() == 2.5
        assert state.step_count == 1

    def test_adam_none_gradient_counts_as_zero(self):
        x = Tensor(1.5, requires_grad=True)
        state = init_adam([x])
        adam_step([x], [None], state)
        assert x.item() == 1.5

    def test_adam_decreases_quadratic(self):
        x = Tensor(3.0, requires_grad=True)
        opt = Adam([x], learning_rate=0.1)
        for _ in range(200):
            opt.zero_grad()
            loss = x * x
            loss.backward()
            opt.step()
        assert abs(x.item()) < 0.05

    def test_adam_length_mismatch_raises(self):
        x = Tensor(1.0, requires_grad=True)
        state = init_adam([x])
        with pytest.raises(ShapeError):
            adam_step([x], [np.zeros(()), np.zeros(())], state)

    def test_sgd_step(self):
        x = Tensor(1.0, requires_grad=True)
        opt = SGD([x], learning_rate=0.5)
        (x * x).backward()
        opt.step()
        assert_allclose(x.item(), 0.0)

    def test_identical_runs_are_bit_identical(self):
        def run():
            rng = np.random.default_rng(11)
            w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
            x = Tensor(rng.normal(size=(4, 3)))
            opt = Adam([w], learning_rate=1e-2)
            for _ in range(20):
                opt.zero_grad()
                mse_loss(matmul(x, w), Tensor(np.zeros((4, 3)))).backward()
                opt.step()
            return w.data.copy()

        first, second = run(), run()
        assert np.array_equal(first, second)


class TestCoercion:
    def test_astensor_passthrough(self):
        t = Tensor([1.0])
        assert astensor(t) is t

    def test_scalar_arithmetic(self):
        x = Tensor([2.0])
        assert_allclose((2.0 * x + 1.0).data, [5.0])
        assert_allclose((1.0 - x).data, [-1.0])
