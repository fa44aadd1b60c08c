import math

import numpy as np
import pytest

from focalorder import autodiff as ad
from focalorder.autodiff import Tape, Tensor, backward, grad_check


def test_masked_log_softmax_uniform():
    tape = Tape()
    logits = Tensor(np.zeros(4))
    out = ad.masked_log_softmax(tape, logits, np.ones(4, dtype=bool))
    assert np.allclose(out.data, math.log(0.25))


def test_masked_log_softmax_masks_entries():
    tape = Tape()
    logits = Tensor(np.array([1.0, 2.0, 3.0]))
    out = ad.masked_log_softmax(tape, logits, np.array([True, False, True]))
    assert out.data[1] == -np.inf
    assert np.isclose(np.exp(out.data[[0, 2]]).sum(), 1.0)
    with pytest.raises(ValueError, match="masked"):
        ad.masked_log_softmax(tape, logits, np.zeros(3, dtype=bool))


def test_hinge_examples():
    tape = Tape()
    assert ad.hinge(tape, Tensor(np.float64(-0.5))).item() == 0.0
    assert ad.hinge(tape, Tensor(np.float64(0.2))).item() == pytest.approx(0.2)


def test_gather_example():
    tape = Tape()
    v = Tensor(np.array([10.0, 20.0, 30.0]))
    assert ad.gather(tape, v, 1).item() == 20.0


def test_shape_mismatch_errors():
    tape = Tape()
    with pytest.raises(ValueError):
        ad.add(tape, Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    with pytest.raises(ValueError):
        ad.matvec(tape, Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


def test_product_rule():
    tape = Tape()
    x = Tensor(np.float64(2.0), requires_grad=True)
    y = Tensor(np.float64(3.0), requires_grad=True)
    out = ad.mul(tape, x, y)
    backward(tape, out)
    assert x.grad == pytest.approx(3.0)
    assert y.grad == pytest.approx(2.0)


def test_backward_requires_scalar():
    tape = Tape()
    v = Tensor(np.zeros(3), requires_grad=True)
    out = ad.scale(tape, v, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        backward(tape, out)


def test_softmax_gradient_rows_sum_to_zero():
    tape = Tape()
    logits = Tensor(np.array([0.3, -1.0, 2.0, 0.0]), requires_grad=True)
    out = ad.masked_log_softmax(tape, logits, np.ones(4, dtype=bool))
    picked = ad.gather(tape, out, 2)
    backward(tape, picked)
    assert logits.grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_hinge_subgradient_at_zero_is_zero():
    tape = Tape()
    x = Tensor(np.float64(0.0), requires_grad=True)
    out = ad.hinge(tape, x)
    backward(tape, out)
    assert x.grad == 0.0


def test_unconnected_tensor_keeps_no_grad():
    tape = Tape()
    x = Tensor(np.float64(1.0), requires_grad=True)
    unused = Tensor(np.float64(5.0), requires_grad=True)
    out = ad.mul(tape, x, x)
    backward(tape, out)
    assert unused.grad is None


def two_layer_net(params):
    """f = mean(tanh(W2 @ tanh(W1 @ x)) * target)."""
    w1, w2 = params
    tape = Tape()
    x = Tensor(np.array([0.3, -0.7, 1.1]))
    target = Tensor(np.array([0.5, -0.25]))
    h = ad.tanh(tape, ad.matvec(tape, w1, x))
    y = ad.tanh(tape, ad.matvec(tape, w2, h))
    return tape, ad.tmean(tape, ad.mul(tape, y, target))


def test_two_layer_tanh_matches_finite_differences():
    rng = np.random.default_rng(0)
    w1 = Tensor(rng.normal(size=(4, 3)) * 0.5, requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 4)) * 0.5, requires_grad=True)
    err = grad_check(two_layer_net, [w1, w2], step=1e-5)
    assert err < 1e-6


def test_grad_check_quadratic():
    def f(params):
        tape = Tape()
        (x,) = params
        return tape, ad.mul(tape, x, x)

    x = Tensor(np.float64(3.0), requires_grad=True)
    tape, out = f([x])
    backward(tape, out)
    assert x.grad == pytest.approx(6.0)
    assert grad_check(f, [x], step=1e-5) < 1e-9


def test_grad_check_stationary_point():
    def f(params):
        tape = Tape()
        (x,) = params
        return tape, ad.mul(tape, x, x)

    x = Tensor(np.float64(0.0), requires_grad=True)
    tape, out = f([x])
    backward(tape, out)
    assert abs(float(x.grad)) < 1e-6
    # central difference of x^2 at 0 is exactly 0 as well
    assert grad_check(f, [x], step=1e-5) == 0.0


def test_linearity_of_backward():
    rng = np.random.default_rng(1)
    a, b = 1.7, -0.6

    def run(coeff_f, coeff_g):
        x = Tensor(rng.normal(size=5), requires_grad=True)
        x_data = x.data.copy()
        tape = Tape()
        f = ad.tsum(tape, ad.tanh(tape, x))
        g = ad.tmean(tape, ad.mul(tape, x, x))
        combined = ad.add(tape, ad.scale(tape, f, coeff_f), ad.scale(tape, g, coeff_g))
        backward(tape, combined)
        return x_data, x.grad

    data, grad_combined = run(a, b)
    x = Tensor(data, requires_grad=True)
    tape = Tape()
    f = ad.tsum(tape, ad.tanh(tape, x))
    backward(tape, f)
    gf = x.grad.copy()
    tape = Tape()
    g = ad.tmean(tape, ad.mul(tape, x, x))
    backward(tape, g)
    gg = x.grad.copy()
    assert np.allclose(grad_combined, a * gf + b * gg)


def test_concat_and_stack_round_gradients():
    tape = Tape()
    u = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    v = Tensor(np.array([3.0]), requires_grad=True)
    cat = ad.concat(tape, [u, v])
    assert np.allclose(cat.data, [1.0, 2.0, 3.0])
    out = ad.tsum(tape, ad.mul(tape, cat, Tensor(np.array([1.0, 10.0, 100.0]))))
    backward(tape, out)
    assert np.allclose(u.grad, [1.0, 10.0])
    assert np.allclose(v.grad, [100.0])

    tape = Tape()
    r1 = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    r2 = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    m = ad.stack_rows(tape, [r1, r2])
    picked = ad.gather(tape, ad.row_select(tape, m, 1), 0)
    backward(tape, picked)
    assert np.allclose(r1.grad, [0.0, 0.0])
    assert np.allclose(r2.grad, [1.0, 0.0])


def test_forward_recompute_after_backward_identical():
    x = Tensor(np.array([0.5, -0.5]), requires_grad=True)

    def build():
        tape = Tape()
        return tape, ad.tsum(tape, ad.tanh(tape, x))

    tape, out = build()
    first = float(out.data)
    backward(tape, out)
    _, again = build()
    assert float(again.data) == first
