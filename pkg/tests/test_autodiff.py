"""Reverse-mode gradients: analytic cases, finite differences, edge rules."""

import numpy as np
import numpy.testing as npt
import pytest

from stmix.tensor import (
    Tensor,
    conv3d,
    cross_entropy_logits,
    gelu,
    grad_check,
    gradients,
    layer_norm,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax_lastdim,
)


class TestBackwardBasics:
    def test_sum_gradient_all_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.sum().backward()
        npt.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_half_sum_of_squares_gradient_is_x(self):
        data = np.arange(5.0) - 2.0
        x = Tensor(data, requires_grad=True)
        ((x * x).sum() * 0.5).backward()
        npt.assert_allclose(x.grad, data, rtol=0, atol=1e-15)

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_grad_accumulates_over_reuse(self):
        x = Tensor([2.0], requires_grad=True)
        (x + x).sum().backward()
        npt.assert_array_equal(x.grad, [2.0])

    def test_unreachable_input_zero_grad_and_flagged(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = Tensor(np.ones(2), requires_grad=True)
        loss = x.sum()
        grads, reached = gradients(loss, [x, y])
        npt.assert_array_equal(grads[0], np.ones(3))
        npt.assert_array_equal(grads[1], np.zeros(2))
        assert reached == [True, False]

    def test_no_grad_suppresses_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            out = (x * x).sum()
        assert not out.requires_grad
        grads, reached = gradients(out, [x])
        npt.assert_array_equal(grads[0], np.zeros(3))
        assert reached == [False]


class TestBroadcastGradients:
    def test_broadcast_add_sums_grad(self):
        x = Tensor(np.zeros((4, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        (x + b).sum().backward()
        npt.assert_array_equal(b.grad, np.full(3, 4.0))
        npt.assert_array_equal(x.grad, np.ones((4, 3)))

    def test_broadcast_mul_finite_difference(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((3, 4)))
        g = Tensor(rng.standard_normal(4))
        err = grad_check(lambda a, b: (a * b).sum(), [x, g])
        assert err < 1e-8


class TestGradCheck:
    def test_sum_error_zero(self):
        # integer-valued input and a power-of-two step keep every perturbed
        # sum exactly representable, so the central difference is exact
        x = Tensor(np.array([1.0, 2.0, -3.0, 4.0]))
        assert grad_check(lambda t: t.sum(), x, step=2.0 ** -17) == 0.0

    def test_sum_error_tiny_at_default_step(self):
        x = Tensor(np.random.default_rng(1).standard_normal(6))
        assert grad_check(lambda t: t.sum(), x) < 1e-9

    def test_softmax_cross_entropy_under_1e6(self):
        logits = Tensor(np.random.default_rng(2).standard_normal(7))
        err = grad_check(lambda z: cross_entropy_logits(z, 3), logits)
        assert err < 1e-6

    def test_rejects_non_scalar(self):
        with pytest.raises(ValueError, match="scalar"):
            grad_check(lambda t: t * t, Tensor(np.ones(3)))

    def test_kink_outside_supported_class(self):
        # relu is non-differentiable at 0; grad_check's contract excludes
        # such points, and the mismatch it reports there shows why.
        x = Tensor(np.array([0.0]))
        err = grad_check(lambda t: relu(t).sum(), x)
        assert err > 1e-2

    def test_smooth_ops_pass(self):
        # the probe functions must not be (near-)constant, or the relative
        # error denominator floor dominates; weight the outputs
        rng = np.random.default_rng(3)
        w = Tensor(rng.standard_normal((3, 5)))
        for fn in (lambda t: (sigmoid(t) * w).sum(),
                   lambda t: (gelu(t) * w).sum(),
                   lambda t: (softmax_lastdim(t) * w).sum(),
                   lambda t: (layer_norm(t) * w).sum()):
            err = grad_check(fn, Tensor(rng.standard_normal((3, 5))))
            assert err < 1e-6


class TestOpGradients:
    def test_matmul_gradcheck(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.standard_normal((3, 4)))
        b = Tensor(rng.standard_normal((4, 2)))
        err = grad_check(lambda x, y: (matmul(x, y) * matmul(x, y)).sum(), [a, b])
        assert err < 1e-7

    def test_conv3d_gradcheck(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        k = Tensor(rng.standard_normal((2, 2, 3, 3, 3)))
        b = Tensor(rng.standard_normal(2))
        err = grad_check(lambda xx, kk, bb: (conv3d(xx, kk, bb) * conv3d(xx, kk, bb)).sum(),
                         [x, k, b])
        assert err < 1e-4

    def test_layer_norm_gradcheck(self):
        x = Tensor(np.random.default_rng(6).standard_normal((4, 7)))
        err = grad_check(lambda t: (layer_norm(t) * layer_norm(t) * layer_norm(t)).sum(), x)
        assert err < 1e-5
