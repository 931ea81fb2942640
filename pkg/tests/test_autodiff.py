"""Autodiff engine tests: hand-checked derivatives, finite-difference checks
for every op, accumulation semantics, and the convolution contract."""

import zlib

import numpy as np
import pytest

from ipnav import autodiff as A
from ipnav.autodiff import Tensor, gradcheck, no_grad


def fd_check(build_loss, tensors, h=1e-6, tol=1e-7):
    worst = gradcheck(build_loss, tensors, h=h)
    assert worst < tol, f"worst relative FD error {worst:.3e}"


class TestBackwardBasics:
    def test_square(self):
        w = Tensor(np.array([3.0]), requires_grad=True)
        A.sum_(w**2.0).backward()
        np.testing.assert_allclose(w.grad, [6.0])

    def test_requires_scalar(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (w * 2.0).backward()

    def test_two_losses_accumulate(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        A.sum_(w**2.0).backward()
        A.sum_(w * 3.0).backward()
        np.testing.assert_allclose(w.grad, [4.0 + 3.0])

    def test_no_grad_suppresses_graph(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        with no_grad():
            out = w * 3.0
        assert not out.requires_grad and out._parents == ()

    def test_dense_tanh_matches_fd(self):
        rng = np.random.default_rng(0)
        w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        x = Tensor(rng.standard_normal((5, 4)))
        fd_check(lambda: A.sum_(A.tanh(x @ w + b)), [w, b])


class TestElementwiseOps:
    @pytest.mark.parametrize(
        "name,op,lo,hi",
        [
            ("exp", A.exp, -2, 2),
            ("log", A.log, 0.5, 5),
            ("tanh", A.tanh, -3, 3),
            ("sigmoid", A.sigmoid, -4, 4),
            ("softplus", A.softplus, -4, 4),
            ("relu", A.relu, -2, 2),
            ("lrelu", lambda t: A.leaky_relu(t, 0.07), -2, 2),
            ("pow", lambda t: t**-1.5, 0.5, 4),
        ],
    )
    def test_unary_fd(self, name, op, lo, hi):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        x = Tensor(rng.uniform(lo, hi, (3, 4)) + 0.011, requires_grad=True)
        w = Tensor(rng.standard_normal((3, 4)))
        fd_check(lambda: A.sum_(A.mul(op(x), w)), [x])

    def test_binary_broadcast_fd(self):
        rng = np.random.default_rng(10)
        a = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        b = Tensor(rng.standard_normal(5), requires_grad=True)  # broadcasts over rows
        c = Tensor(rng.standard_normal((1,)), requires_grad=True)
        fd_check(lambda: A.sum_(A.mul(a + b, a * 0.5) + A.mul(a, c)), [a, b, c])

    def test_minimum_fd_and_tie_routing(self):
        rng = np.random.default_rng(11)
        a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        fd_check(lambda: A.sum_(A.minimum(a, b)), [a, b])
        t1 = Tensor(np.array([1.0]), requires_grad=True)
        t2 = Tensor(np.array([1.0]), requires_grad=True)
        A.sum_(A.minimum(t1, t2)).backward()
        np.testing.assert_allclose(t1.grad, [1.0])
        np.testing.assert_allclose(t2.grad, [0.0])

    def test_clip_gradient_mask(self):
        x = Tensor(np.array([-2.0, 0.0, 2.0]), requires_grad=True)
        A.sum_(A.clip(x, -1.0, 1.0)).backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])


class TestShapeOps:
    def test_matmul_fd(self):
        rng = np.random.default_rng(12)
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        fd_check(lambda: A.sum_((a @ b) ** 2.0), [a, b])

    def test_matmul_requires_2d(self):
        with pytest.raises(ValueError, match="2D"):
            A.matmul(Tensor(np.ones((2, 2, 2))), Tensor(np.ones((2, 2))))

    def test_sum_axis_keepdims_fd(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 1)))
        fd_check(lambda: A.sum_(A.mul(A.sum_(x, axis=1, keepdims=True), w)), [x])

    def test_mean_fd(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.standard_normal((5, 2)), requires_grad=True)
        fd_check(lambda: A.mean(x**2.0), [x])

    def test_concat_narrow_reshape_fd(self):
        rng = np.random.default_rng(15)
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 2)), requires_grad=True)

        def loss():
            cat = A.concat([a, b], axis=1)
            left = A.narrow(cat, 1, 1, 3)
            return A.sum_(A.reshape(left, (9, 1)) ** 2.0)

        fd_check(loss, [a, b])


class TestConv1d:
    def test_identity_kernel(self):
        x = Tensor(np.arange(6, dtype=float).reshape(1, 1, 6))
        w = Tensor(np.ones((1, 1, 1)))
        out = A.conv1d(x, w, None, stride=1)
        np.testing.assert_array_equal(out.data, x.data)

    def test_all_ones(self):
        x = Tensor(np.ones((1, 1, 3)))
        w = Tensor(np.ones((1, 1, 3)))
        out = A.conv1d(x, w, None, stride=1)
        np.testing.assert_array_equal(out.data, [[[3.0]]])

    def test_stride_output_length(self):
        x = Tensor(np.ones((2, 3, 11)))
        w = Tensor(np.ones((4, 3, 5)))
        out = A.conv1d(x, w, Tensor(np.zeros(4)), stride=2)
        assert out.data.shape == (2, 4, 4)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channel"):
            A.conv1d(Tensor(np.ones((1, 2, 5))), Tensor(np.ones((1, 3, 3))))

    def test_fd_gradients(self):
        rng = np.random.default_rng(16)
        x = Tensor(rng.standard_normal((2, 3, 9)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        mix = Tensor(rng.standard_normal((2, 4, 4)))

        def loss():
            y = A.conv1d(x, w, b, stride=2)
            return A.sum_(A.reshape(A.mul(y, mix), (-1, 1)))

        fd_check(loss, [x, w, b], tol=1e-7)


class TestGradcheckHelper:
    def test_linear_model_near_exact(self):
        rng = np.random.default_rng(17)
        w = Tensor(rng.standard_normal((6, 1)), requires_grad=True)
        x = Tensor(rng.standard_normal((4, 6)))
        worst = gradcheck(lambda: A.sum_(x @ w), [w], h=1e-5)
        assert worst < 1e-9

    def test_sampled_subset(self):
        rng = np.random.default_rng(18)
        w = Tensor(rng.standard_normal((20, 20)), requires_grad=True)
        x = Tensor(rng.standard_normal((2, 20)))
        worst = gradcheck(
            lambda: A.sum_(A.tanh(x @ w)), [w], samples_per_tensor=10, rng=np.random.default_rng(0)
        )
        assert worst < 1e-7
