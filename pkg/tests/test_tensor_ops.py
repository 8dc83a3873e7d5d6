"""Forward-value contracts of the tensor ops: hand-computable cases."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hipgraf.autodiff import (
    Tensor,
    bce_loss,
    concat,
    conv2d,
    layer_norm,
    matmul,
    maxpool2d,
    mse_loss,
    pad_edge,
    pointwise,
    relu,
    reshape,
    sigmoid,
    softmax,
    transpose,
    transpose_conv2d,
    window_stack,
)
from hipgraf.errors import ConfigError, ContractError, DimensionError


def rnd(*shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


class TestMatmul:
    def test_identity_leaves_operand_unchanged(self):
        b = rnd(3, 3, seed=1)
        out = matmul(Tensor(np.eye(3, dtype=np.float32)), Tensor(b))
        np.testing.assert_allclose(out.data, b, rtol=1e-6)

    def test_row_sums(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_allclose(out.data, [[3.0], [7.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(Tensor(rnd(2, 3)), Tensor(rnd(4, 5)))

    def test_batched_against_numpy(self):
        a, b = rnd(2, 3, 4, seed=2), rnd(2, 4, 5, seed=3)
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, a @ b, rtol=1e-6)


class TestConv2d:
    def test_one_by_one_unit_kernel_is_identity(self):
        x = rnd(1, 2, 5, 5, seed=4)
        w = np.zeros((2, 2, 1, 1), dtype=np.float32)
        w[0, 0] = w[1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(w))
        np.testing.assert_allclose(out.data, x)

    def test_ones_kernel_counts_neighbors(self):
        x = Tensor(np.ones((1, 1, 5, 5), dtype=np.float32))
        w = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        out = conv2d(x, w, padding=1)
        assert out.data[0, 0, 2, 2] == 9.0
        assert out.data[0, 0, 0, 0] == 4.0  # zero pad corner

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(DimensionError, match="larger than padded input"):
            conv2d(Tensor(rnd(1, 1, 2, 2)), Tensor(rnd(1, 1, 5, 5)))

    def test_stride_two_shape(self):
        out = conv2d(Tensor(rnd(1, 1, 8, 8, seed=5)), Tensor(rnd(3, 1, 2, 2, seed=6)), stride=2)
        assert out.shape == (1, 3, 4, 4)


class TestTransposeConv2d:
    def test_unit_kernel_stride_one_is_identity(self):
        x = rnd(1, 1, 4, 4, seed=7)
        out = transpose_conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1), dtype=np.float32)))
        np.testing.assert_allclose(out.data, x)

    def test_stride_two_broadcasts_single_pixel(self):
        v = 3.5
        x = Tensor(np.full((1, 1, 1, 1), v, dtype=np.float32))
        w = Tensor(np.ones((1, 1, 2, 2), dtype=np.float32))
        out = transpose_conv2d(x, w, stride=2)
        np.testing.assert_allclose(out.data, np.full((1, 1, 2, 2), v))

    def test_output_dims_track_stride(self):
        out = transpose_conv2d(Tensor(rnd(1, 2, 5, 5, seed=8)), Tensor(rnd(2, 3, 2, 2, seed=9)), stride=2)
        assert out.shape == (1, 3, 10, 10)


class TestSoftmax:
    def test_equal_inputs_give_uniform_weights(self):
        n = 3
        out = softmax(Tensor(np.zeros(n * n, dtype=np.float32)), axis=0)
        np.testing.assert_allclose(out.data, np.full(n * n, 1.0 / (n * n)), atol=1e-7)

    def test_log_two_case(self):
        out = softmax(Tensor(np.array([0.0, math.log(2.0)])), axis=0)
        np.testing.assert_allclose(out.data, [1.0 / 3.0, 2.0 / 3.0], atol=1e-7)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.floats(-50, 50))
    @settings(max_examples=40, deadline=None)
    def test_shift_invariance(self, values, shift):
        x = np.asarray(values, dtype=np.float64)
        a = softmax(Tensor(x), axis=0).data
        b = softmax(Tensor(x + shift), axis=0).data
        assert np.abs(a - b).max() < 1e-6

    def test_rows_sum_to_one_and_positive(self):
        out = softmax(Tensor(rnd(4, 7, seed=10)), axis=1).data
        np.testing.assert_allclose(out.sum(axis=1), np.ones(4), atol=1e-6)
        assert (out > 0).all() and (out < 1).all()


class TestPointwise:
    def test_relu_values(self):
        out = pointwise(Tensor(np.array([-1.0, 2.0])), "relu")
        np.testing.assert_allclose(out.data, [0.0, 2.0])

    def test_sigmoid_at_zero(self):
        assert sigmoid(Tensor(np.array([0.0]))).data[0] == pytest.approx(0.5)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="unknown pointwise kind"):
            pointwise(Tensor(np.array([1.0])), "tanh")


class TestLayerNorm:
    def test_normalizes_slices(self):
        out = layer_norm(Tensor(rnd(3, 16, seed=11)), axis=-1).data
        np.testing.assert_allclose(out.mean(axis=-1), np.zeros(3), atol=1e-5)
        np.testing.assert_allclose(out.var(axis=-1), np.ones(3), atol=1e-3)


class TestLosses:
    def test_mse_of_identical_inputs_is_zero(self):
        x = Tensor(rnd(4, 4, seed=12))
        assert mse_loss(x, x.data).item() == 0.0

    def test_mse_hand_case(self):
        assert mse_loss(Tensor(np.array([0.0, 2.0])), np.array([1.0, 1.0])).item() == pytest.approx(1.0)

    def test_mse_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse_loss(Tensor(rnd(2, 2)), np.zeros((2, 3)))

    def test_bce_at_zero_logit(self):
        assert bce_loss(Tensor(np.array([0.0])), np.array([1.0])).item() == pytest.approx(math.log(2.0), abs=1e-6)

    def test_bce_rejects_soft_labels(self):
        with pytest.raises(ContractError, match="labels must be 0 or 1"):
            bce_loss(Tensor(np.array([0.0])), np.array([0.5]))

    def test_bce_stable_at_huge_logits(self):
        val = bce_loss(Tensor(np.array([500.0])), np.array([0.0])).item()
        assert val == pytest.approx(500.0)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = Tensor(rnd(3, 4, seed=13), requires_grad=True)
        w.sum().backward()
        np.testing.assert_allclose(w.grad, np.ones((3, 4)))

    def test_non_scalar_loss_rejected(self):
        w = Tensor(rnd(3), requires_grad=True)
        with pytest.raises(ContractError, match="scalar"):
            w.backward()

    def test_repeated_backward_accumulates(self):
        w = Tensor(rnd(2, 2, seed=14), requires_grad=True)
        loss = w.sum()
        loss.backward()
        loss.backward()
        np.testing.assert_allclose(w.grad, 2 * np.ones((2, 2)))

    def test_tensor_used_twice_sums_contributions(self):
        w = Tensor(np.array([[2.0]]), requires_grad=True)
        loss = (matmul(w, w)).sum()  # d/dw (w*w) = 2w
        loss.backward()
        np.testing.assert_allclose(w.grad, [[4.0]])


class TestShapeOps:
    def test_maxpool_values(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        out = maxpool2d(Tensor(x), 2)
        np.testing.assert_allclose(out.data[0, 0], [[5, 7], [13, 15]])

    def test_maxpool_rejects_odd_dims(self):
        with pytest.raises(DimensionError):
            maxpool2d(Tensor(rnd(1, 1, 3, 4)), 2)

    def test_concat_and_split_gradients(self):
        a = Tensor(rnd(1, 2, 2, 2, seed=15), requires_grad=True)
        b = Tensor(rnd(1, 3, 2, 2, seed=16), requires_grad=True)
        out = concat([a, b], axis=1)
        assert out.shape == (1, 5, 2, 2)
        out.sum().backward()
        np.testing.assert_allclose(a.grad, np.ones_like(a.data))
        np.testing.assert_allclose(b.grad, np.ones_like(b.data))

    def test_transpose_reshape_round_trip(self):
        x = Tensor(rnd(2, 3, 4, seed=17), requires_grad=True)
        out = reshape(transpose(x, (2, 0, 1)), (4, 6))
        assert out.shape == (4, 6)
        out.sum().backward()
        np.testing.assert_allclose(x.grad, np.ones_like(x.data))

    def test_pad_edge_replicates_border(self):
        x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
        out = pad_edge(Tensor(x), 1).data
        assert out.shape == (1, 1, 4, 4)
        assert out[0, 0, 0, 0] == 0.0 and out[0, 0, 3, 3] == 3.0

    def test_window_stack_center_slot_is_input(self):
        x = Tensor(rnd(1, 2, 6, 6, seed=18))
        padded = pad_edge(x, 1)
        stacked = window_stack(padded, 3)
        assert stacked.shape == (1, 9, 2, 4 + 2, 4 + 2)
        np.testing.assert_allclose(stacked.data[:, 4], x.data)
