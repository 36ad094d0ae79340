import numpy as np
import pytest

from ci_coder.exceptions import GraphError, NonFiniteError, ShapeMismatchError
from ci_coder.gradient_check import numerical_gradient, relative_error
from ci_coder.Tensor import Tensor, mean, no_grad, relu, sigmoid, tanh, tensor_sum
from ci_coder.tensor_ops import bce_with_logits, conv1d, mse_loss, softmax_rows


def check_gradient(build, *leaves: Tensor) -> None:  # type: ignore
    """compare the analytic gradient of build() against central differences for every leaf"""
    build().backward()
    for leaf in leaves:
        assert leaf.grad is not None

        def value() -> float:
            with no_grad():
                return build().item()

        numeric = numerical_gradient(value, leaf.data)
        assert relative_error(leaf.grad, numeric) < 1e-5, leaf.name


def test_broadcast_add_and_mul_gradients() -> None:
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="a")
    b = Tensor(rng.normal(size=(4,)), requires_grad=True, name="b")
    check_gradient(lambda: tensor_sum((a + b) * a - b), a, b)


def test_matmul_and_activation_gradients() -> None:
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True, name="x")
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="w")
    check_gradient(lambda: mean(tanh(x @ w)) + mean(sigmoid(x @ w) * 2.0), x, w)


def test_transpose_and_axis_sum_gradients() -> None:
    x = Tensor(np.random.default_rng(2).normal(size=(2, 3)), requires_grad=True, name="x")
    check_gradient(lambda: tensor_sum(tensor_sum(x.T * x.T, axis=0) * np.array([1.0, -2.0])), x)


def test_conv1d_gradients() -> None:
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(2, 9)), requires_grad=True, name="x")
    w = Tensor(rng.normal(size=(3, 2, 3)), requires_grad=True, name="w")
    b = Tensor(rng.normal(size=3), requires_grad=True, name="b")
    check_gradient(lambda: tensor_sum(tanh(conv1d(x, w, b, dilation=2))), x, w, b)


def test_softmax_and_losses_gradients() -> None:
    rng = np.random.default_rng(4)
    s = Tensor(rng.normal(size=(4, 5)), requires_grad=True, name="s")
    target = rng.uniform(size=(4, 5))
    mask = rng.uniform(size=(4, 5)) > 0.3
    mask[:, 0] = True
    check_gradient(lambda: mse_loss(softmax_rows(s, mask), target) + bce_with_logits(s, target > 0.5), s)


def test_masked_mse_averages_over_the_selected_entries() -> None:
    rng = np.random.default_rng(5)
    p = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="p")
    target = rng.normal(size=(3, 4))
    mask = rng.uniform(size=(3, 4)) > 0.5
    mask[0, 0] = True

    expected = np.sum(np.square(p.data - target)[mask]) / np.count_nonzero(mask)
    assert mse_loss(p, target, mask).item() == pytest.approx(expected)
    check_gradient(lambda: mse_loss(tanh(p), target, mask), p)
    assert mse_loss(p, target, np.zeros((3, 4), dtype=bool)).item() == 0.0


def test_relu_passes_gradient_only_where_active() -> None:
    x = Tensor(np.array([-1.0, 2.0, 3.0]), requires_grad=True)
    tensor_sum(relu(x)).backward()
    assert x.grad is not None
    assert x.grad.tolist() == [0.0, 1.0, 1.0]


def test_conv1d_matches_naive_sum() -> None:
    rng = np.random.default_rng(5)
    x, w, b = rng.normal(size=(1, 8)), rng.normal(size=(1, 1, 3)), rng.normal(size=1)
    dilation = 2
    out = conv1d(x, w, b, dilation).data
    for t in range(8):
        expected = b[0]
        for j in range(3):
            source = t - dilation * (2 - j)
            if source >= 0:
                expected += w[0, 0, j] * x[0, source]
        assert out[0, t] == pytest.approx(expected, abs=1e-12)


def test_conv1d_identity_kernel() -> None:
    x = np.arange(6, dtype=float)[None, :]
    out = conv1d(x, np.array([[[0.0, 0.0, 1.0]]]), np.zeros(1), dilation=3)
    assert out.data.tolist() == x.tolist()


def test_conv1d_rejects_mismatched_shapes() -> None:
    with pytest.raises(ShapeMismatchError):
        conv1d(np.zeros((2, 5)), np.zeros((1, 3, 2)), np.zeros(1))


def test_gradients_accumulate_across_passes() -> None:
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    tensor_sum(x * 3.0).backward()
    tensor_sum(x * 3.0).backward()
    assert x.grad is not None
    assert x.grad.tolist() == [6.0, 6.0]
    x.zero_grad()
    assert x.grad is None


def test_second_backward_on_a_released_graph_fails() -> None:
    x = Tensor(np.array([1.0]), requires_grad=True)
    loss = tensor_sum(x * x)
    loss.backward()
    with pytest.raises(GraphError):
        loss.backward()


def test_backward_on_a_leaf_fails() -> None:
    with pytest.raises(GraphError):
        Tensor(np.array(1.0), requires_grad=True).backward()


def test_no_grad_records_nothing() -> None:
    x = Tensor(np.array([1.0]), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert y.is_leaf
    assert not y.requires_grad


def test_non_finite_values_are_rejected() -> None:
    with pytest.raises(NonFiniteError):
        Tensor(np.array([np.inf]))


def test_non_scalar_backward_needs_a_seed() -> None:
    x = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ShapeMismatchError):
        (x * 2.0).backward()


def test_bce_is_stable_for_large_logits() -> None:
    loss = bce_with_logits(np.array([1000.0, -1000.0]), np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_bce_of_a_zero_logit_is_log_two() -> None:
    assert bce_with_logits(np.zeros((1, 1)), np.ones((1, 1))).item() == pytest.approx(np.log(2))


def test_relative_error_of_vanishing_gradients_is_zero() -> None:
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
