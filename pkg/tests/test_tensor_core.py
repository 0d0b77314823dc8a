"""Tests for the tensor engine: operators, the gradient tape and precision control."""

import numpy as np
import pytest
from scipy import ndimage

from cscfuse.errors import ShapeError
from cscfuse.imaging import kernels
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor, corrupt_gradient, default_dtype, grad, no_grad, precision
from cscfuse.tensor.gradcheck import check_gradients
from cscfuse.tensor.ops import ConvFilter


def test_default_dtype_is_float32():
    """Test that tensors are 32-bit unless created inside precision()."""
    assert Tensor([1.0, 2.0]).dtype == np.float32
    with precision(np.float64):
        assert default_dtype() == np.float64
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_broadcast_gradient_is_summed():
    """Test that a broadcast operand receives the sum over broadcast axes."""
    with precision(np.float64):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.arange(4.0), requires_grad=True)
        grads = grad(ops.sum(a + b), [a, b])
    np.testing.assert_array_equal(grads[a], np.ones((3, 4)))
    np.testing.assert_array_equal(grads[b], np.full(4, 3.0))


def test_fan_out_gradients_accumulate():
    """Test that a tensor used twice accumulates both contributions."""
    with precision(np.float64):
        x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
        grads = grad(ops.sum(x * x + x), [x])
    np.testing.assert_allclose(grads[x], 2 * x.data + 1)


def test_unreached_parameter_gets_zeros():
    """Test that parameters off the tape get zero gradients."""
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(3), requires_grad=True)
    grads = grad(ops.sum(x * 2.0), [x, y])
    np.testing.assert_array_equal(grads[y], np.zeros(3))


def test_no_grad_records_nothing():
    """Test that operations under no_grad are not recorded."""
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.sum(x * 3.0)
    assert not y.requires_grad
    assert np.all(grad(y, [x])[x] == 0)


def test_grad_rejects_non_scalar_loss():
    """Test that grad() needs a single-element loss."""
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        grad(x * 2.0, [x])


def test_conv2d_matches_zero_padded_correlation(rng):
    """Test conv2d against scipy correlation with zero padding."""
    with precision(np.float64):
        x = Tensor(rng.standard_normal((1, 2, 7, 6)))
        f = ConvFilter(Tensor(rng.standard_normal((3, 2, 3, 3))), Tensor(rng.standard_normal(3)))
        out = ops.conv2d(x, f).data
    assert out.shape == (1, 3, 7, 6)
    for o in range(3):
        expected = sum(ndimage.correlate(x.data[0, c], f.weight.data[o, c], mode="constant") for c in range(2))
        np.testing.assert_allclose(out[0, o], expected + f.bias.data[o], atol=1e-12)


def test_conv2d_transpose_is_adjoint(rng):
    """Test <conv(x), y> == <x, conv_transpose(y)> for a bias-free filter."""
    with precision(np.float64):
        x = Tensor(rng.standard_normal((2, 3, 6, 5)))
        y = Tensor(rng.standard_normal((2, 4, 6, 5)))
        f = ConvFilter(Tensor(rng.standard_normal((4, 3, 5, 5))))
        lhs = np.vdot(ops.conv2d(x, f).data, y.data)
        rhs = np.vdot(x.data, ops.conv2d_transpose(y, f).data)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_conv2d_channel_mismatch_reports_shapes():
    """Test that a channel mismatch raises ShapeError naming both shapes."""
    x = Tensor(np.zeros((1, 2, 4, 4)))
    f = ConvFilter(Tensor(np.zeros((3, 5, 3, 3))))
    with pytest.raises(ShapeError, match=r"\(1, 2, 4, 4\)"):
        ops.conv2d(x, f)


def test_filter_size_must_be_odd():
    """Test that even kernels are rejected."""
    with pytest.raises(ShapeError):
        ConvFilter(Tensor(np.zeros((1, 1, 2, 2))))


def test_sst_values_and_negative_threshold():
    """Test soft shrinkage values and the nonnegative threshold check."""
    x = Tensor(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]))
    np.testing.assert_allclose(ops.sst(x, 1.0).data, [-1.0, 0.0, 0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        ops.sst(x, -0.1)


def test_prelu_scales_negative_part():
    """Test PReLU keeps positives and scales negatives."""
    x = Tensor(np.array([-2.0, 0.0, 3.0]))
    np.testing.assert_allclose(ops.prelu(x, 0.25).data, [-0.5, 0.0, 3.0])


def test_batch_norm_training_updates_running_stats(rng):
    """Test batch norm normalizes in training mode and moves the running statistics."""
    with precision(np.float64):
        x = Tensor(rng.normal(3.0, 2.0, size=(4, 2, 5, 5)))
        gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
        mean, var = np.zeros(2), np.ones(2)
        out = ops.batch_norm(x, gamma, beta, mean, var, training=True, momentum=0.5).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=(0, 2, 3)), 1.0, atol=1e-3)
    np.testing.assert_allclose(mean, 0.5 * x.data.mean(axis=(0, 2, 3)))
    assert np.all(var > 1.0)


def test_batch_norm_eval_uses_running_stats():
    """Test eval-mode batch norm is the affine map given by the running statistics."""
    with precision(np.float64):
        x = Tensor(np.full((1, 1, 2, 2), 3.0))
        out = ops.batch_norm(x, Tensor(np.array([2.0])), Tensor(np.array([1.0])),
                             np.array([1.0]), np.array([4.0]), training=False, eps=0.0).data
    np.testing.assert_allclose(out, np.full((1, 1, 2, 2), 3.0))


def test_softmax_over_set_sums_to_one(rng):
    """Test that position-wise softmax weights sum to one."""
    xs = [Tensor(rng.standard_normal((2, 3))) for _ in range(4)]
    total = sum(w.data for w in ops.softmax_over_set(xs))
    np.testing.assert_allclose(total, 1.0, atol=1e-6)


def test_softmax_is_shift_invariant():
    """Test that large logits do not overflow."""
    out = ops.softmax(Tensor(np.array([[1000.0, 1001.0]])), axis=1).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(), 1.0, atol=1e-6)


def test_separable_matches_numpy_filter(rng):
    """Test the separable operator against the numpy matrices it wraps."""
    with precision(np.float64):
        x = Tensor(rng.uniform(size=(2, 9, 8)))
        mh, mw = kernels.box_matrix(9, 2), kernels.gaussian_matrix(8, 1.0)
        np.testing.assert_allclose(ops.separable(x, mh, mw).data, kernels.apply(x.data, mh, mw))
        with pytest.raises(ShapeError):
            ops.separable(x, kernels.box_matrix(5, 1), mw)


def test_patches_window_count():
    """Test that patches returns every valid window."""
    x = Tensor(np.arange(20.0).reshape(4, 5))
    windows = ops.patches(x, 3).data
    assert windows.shape == (2, 3, 3, 3)
    np.testing.assert_array_equal(windows[1, 2], x.data[1:4, 2:5])


def test_stack_rejects_mixed_shapes():
    """Test that stack needs equally shaped tensors."""
    with pytest.raises(ShapeError):
        ops.stack([Tensor(np.zeros(2)), Tensor(np.zeros(3))])


def test_corrupt_gradient_doubles_one_operator():
    """Test the negative-control hook and that it is undone after the block."""
    with precision(np.float64):
        x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
        clean = grad(ops.sum(ops.exp(x)), [x])[x]
        with corrupt_gradient("exp"):
            doubled = grad(ops.sum(ops.exp(x)), [x])[x]
        again = grad(ops.sum(ops.exp(x)), [x])[x]
    np.testing.assert_allclose(doubled, 2 * clean)
    np.testing.assert_allclose(again, clean)


def test_check_gradients_detects_corruption(rng):
    """Test that the finite-difference checker flags a wrong backward."""
    with precision(np.float64):
        x = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 4)))
        assert check_gradients(lambda: ops.sum(ops.sigmoid(x) * w), [x]).max_error < 1e-6
        with corrupt_gradient("sigmoid"):
            assert check_gradients(lambda: ops.sum(ops.sigmoid(x) * w), [x]).max_error > 0.1


def test_check_gradients_needs_float64():
    """Test that 32-bit parameters are refused."""
    x = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ValueError):
        check_gradients(lambda: ops.sum(x), [x])


def test_check_gradients_excludes_kinks():
    """Test that elements sitting on an SST kink are excluded, not failed."""
    with precision(np.float64):
        x = Tensor(np.array([0.5, 1.5, -2.0]), requires_grad=True)
        result = check_gradients(lambda: ops.sum(ops.sst(x, 0.5)), [x])
    assert result.excluded == 1
    assert result.checked == 2
    assert result.max_error < 1e-6


def test_check_gradients_excludes_kinks_reached_through_the_graph():
    """Test that a kink moved by every perturbation excludes every element."""
    with precision(np.float64):
        x = Tensor(np.array([1.0, 3.0, 5.0]), requires_grad=True)
        on_kink = check_gradients(lambda: ops.sum(ops.relu(x - ops.mean(x))), [x])
        away = check_gradients(lambda: ops.sum(ops.relu(x - ops.mean(x) + 0.5)), [x])
    assert (on_kink.checked, on_kink.excluded) == (0, 3)
    assert (away.checked, away.excluded) == (3, 0)
    assert away.max_error < 1e-6


def test_check_gradients_kink_radius_is_ten_eps():
    """Test that an input 5 eps from the PReLU kink is excluded and one 20 eps away is not."""
    with precision(np.float64):
        x = Tensor(np.array([5e-4, 2e-3]), requires_grad=True)
        result = check_gradients(lambda: ops.sum(ops.prelu(x, 0.25)), [x], eps=1e-4)
    assert (result.checked, result.excluded) == (1, 1)
    assert result.max_error < 1e-6
