"""
Tests for the tensor and reverse-mode autograd engine
"""

import numpy as np
import pytest

from autograd.gradcheck import gradcheck, gradcheck_report
from autograd.ops import (
    add,
    activation,
    binary_cross_entropy,
    concat,
    concat_columns,
    gather_fields,
    linear,
    matmul,
    mul,
    project,
    reshape,
    scale_rows,
    segment_softmax,
    segment_weighted_sum,
    softmax_weights,
    split_segments,
    total,
)
from autograd.optim import Adagrad, AdagradState, adagrad_step
from autograd.tensor import Tape, Tensor, backward
from errors import ArgumentError, DimensionError, EmptySequenceError, GradientStateError


def _param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_from_values_row_major():
    t = Tensor.from_values([2, 3], [1, 2, 3, 4, 5, 6])
    assert t.shape == [2, 3]
    assert t.data[1, 0] == 4.0
    np.testing.assert_array_equal(t.values, [1, 2, 3, 4, 5, 6])


def test_from_values_size_mismatch():
    with pytest.raises(DimensionError):
        Tensor.from_values([2, 2], [1, 2, 3])


def test_zero_dimension_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        add(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_no_graph_without_tape():
    a = Tensor(np.ones(3), requires_grad=True)
    out = mul(a, a)
    assert not out.requires_grad


def test_backward_simple_product():
    a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    b = Tensor([4.0, 5.0, 6.0], requires_grad=True)
    with Tape() as tape:
        loss = total(mul(a, b))
    backward(loss, tape)
    np.testing.assert_array_equal(a.grad, [4.0, 5.0, 6.0])
    np.testing.assert_array_equal(b.grad, [1.0, 2.0, 3.0])


def test_backward_accumulates_on_replay():
    a = Tensor([1.0, -2.0], requires_grad=True)
    with Tape() as tape:
        loss = total(mul(a, a))
    backward(loss, tape)
    backward(loss, tape)
    np.testing.assert_allclose(a.grad, 2 * 2 * a.data)


def test_backward_needs_scalar():
    a = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        out = mul(a, a)
    with pytest.raises(ArgumentError):
        backward(out, tape)


def test_constant_inputs_get_no_grad():
    a = Tensor(np.ones(2), requires_grad=True)
    c = Tensor(np.full(2, 3.0))
    with Tape() as tape:
        loss = total(mul(a, c))
    backward(loss, tape)
    assert c.grad is None
    np.testing.assert_array_equal(a.grad, [3.0, 3.0])


def test_reshape_to_scalar():
    t = Tensor([[2.5]])
    s = reshape(t)
    assert s.shape == []
    assert s.item() == 2.5


def test_concat_requires_parts():
    with pytest.raises(ArgumentError):
        concat([])


def test_softmax_sums_to_one_and_is_stable():
    weights = softmax_weights(Tensor([1000.0, 1001.0, 999.0]))
    assert np.all(np.isfinite(weights.data))
    assert abs(weights.data.sum() - 1.0) < 1e-12
    assert np.argmax(weights.data) == 1


def test_softmax_of_one_score():
    weights = softmax_weights(Tensor([-3.7]))
    np.testing.assert_array_equal(weights.data, [1.0])


def test_softmax_empty_rejected():
    with pytest.raises(EmptySequenceError):
        softmax_weights([])


def test_softmax_needs_a_vector():
    with pytest.raises(DimensionError):
        softmax_weights(Tensor(np.ones((2, 2))))


def test_segment_softmax_per_segment():
    scores = Tensor([0.0, 1.0, 5.0, 2.0, 2.0])
    segments = np.array([0, 0, 2, 3, 3])
    weights = segment_softmax(scores, segments, 4)
    parts = split_segments(weights.data, segments, 4)
    assert abs(parts[0].sum() - 1.0) < 1e-12
    assert parts[1].size == 0
    np.testing.assert_array_equal(parts[2], [1.0])
    np.testing.assert_allclose(parts[3], [0.5, 0.5])


def test_segment_weighted_sum_empty_segment_is_zero():
    rows = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    weights = Tensor([0.25, 0.75])
    out = segment_weighted_sum(weights, rows, np.array([1, 1]), 3)
    np.testing.assert_array_equal(out.data[0], [0.0, 0.0])
    np.testing.assert_allclose(out.data[1], [2.5, 3.5])
    np.testing.assert_array_equal(out.data[2], [0.0, 0.0])


def test_activation_unknown_kind():
    with pytest.raises(ArgumentError):
        activation(Tensor([1.0]), "tanh")


def test_gather_fields_mean_pools():
    table = Tensor(np.arange(12, dtype=float).reshape(2, 6))
    index = np.array([[[1, 0], [2, 4]]])
    weights = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    out = gather_fields(table, index, weights)
    np.testing.assert_allclose(out.data[0], [1.0, 7.0, 3.0, 9.0])


def test_gradcheck_matmul_chain():
    rng = np.random.default_rng(0)
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    err = gradcheck(lambda: total(mul(matmul(a, b), matmul(a, b))), [a, b])
    assert err < 1e-6


def test_gradcheck_segment_attention():
    rng = np.random.default_rng(1)
    scores = _param(rng, 5)
    rows = _param(rng, 5, 3)
    segments = np.array([0, 0, 1, 1, 1])

    def fn():
        weights = segment_softmax(scores, segments, 3)
        pooled = segment_weighted_sum(weights, rows, segments, 3)
        return total(mul(pooled, pooled))

    assert gradcheck(fn, [scores, rows]) < 1e-6


def test_gradcheck_gather_and_scale():
    rng = np.random.default_rng(2)
    table = _param(rng, 2, 6)
    gate = _param(rng, 2)
    index = np.array([[[1, 3], [2, 0]], [[5, 5], [4, 1]]])
    weights = np.array([[[0.5, 0.5], [1.0, 0.0]], [[1.0, 0.0], [0.5, 0.5]]])

    def fn():
        rows = gather_fields(table, index, weights)
        scaled = scale_rows(rows, activation(gate, "exp"))
        return total(mul(scaled, scaled))

    assert gradcheck(fn, [table, gate]) < 1e-6


def test_gradcheck_linear_bce():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 3)))
    W = _param(rng, 2, 3)
    v = _param(rng, 2)
    b = Tensor(np.zeros(2), requires_grad=True)
    labels = [1, 0, 0, 1]

    def fn():
        hidden = activation(linear(x, W, b), "relu")
        probs = activation(reshape(project(hidden, v), 4), "sigmoid")
        return binary_cross_entropy(probs, labels)

    errors = gradcheck_report(fn, {"W": W, "v": v, "b": b})
    assert max(errors.values()) < 1e-5


def test_concat_columns_gradient():
    rng = np.random.default_rng(4)
    a, b = _param(rng, 2, 2), _param(rng, 2, 3)
    assert gradcheck(lambda: total(mul(concat_columns([a, b]), concat_columns([b, a]))), [a, b]) < 1e-6


def test_adagrad_step_formula():
    param = Tensor([1.0, 2.0], requires_grad=True)
    param.grad = np.array([0.5, 0.0])
    state = AdagradState.for_param(param, learning_rate=0.1, epsilon=1e-8)
    adagrad_step(param, state)
    np.testing.assert_allclose(param.data, [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 2.0])
    np.testing.assert_allclose(state.accumulator, [0.25, 0.0])
    assert param.grad is None


def test_adagrad_step_without_grad():
    param = Tensor([1.0], requires_grad=True)
    with pytest.raises(GradientStateError):
        adagrad_step(param, AdagradState.for_param(param))


def test_adagrad_skips_untouched_params():
    used = Tensor([1.0], requires_grad=True)
    unused = Tensor([5.0], requires_grad=True)
    optimizer = Adagrad({"used": used, "unused": unused}, learning_rate=0.1)
    with Tape() as tape:
        loss = total(mul(used, used))
    backward(loss, tape)
    assert optimizer.step() == 1
    assert unused.data[0] == 5.0
    assert used.data[0] < 1.0


def test_matmul_hand_cases():
    a = Tensor([[1.5, -2.0], [0.25, 3.0]])
    np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), a).data, a.data)
    np.testing.assert_array_equal(matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data, [[11.0]])


def test_relu_values_and_gradient_at_zero():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = activation(x, "relu")
        loss = total(out)
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])
    backward(loss, tape)
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_at_zero():
    np.testing.assert_array_equal(activation(Tensor([0.0]), "sigmoid").data, [0.5])


def test_exp_gradcheck():
    rng = np.random.default_rng(6)
    x = Tensor(rng.uniform(-2.0, 2.0, size=5), requires_grad=True)
    assert gradcheck(lambda: total(activation(x, "exp")), [x]) < 1e-6


def test_concat_routes_gradient_to_parts():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    weights = Tensor([10.0, 20.0, 30.0])
    with Tape() as tape:
        loss = total(mul(concat([a, b]), weights))
    backward(loss, tape)
    np.testing.assert_array_equal(a.grad, [10.0, 20.0])
    np.testing.assert_array_equal(b.grad, [30.0])


def test_tensor_used_twice_gets_summed_gradient():
    a = Tensor([0.5, -1.0, 4.0], requires_grad=True)
    with Tape() as tape:
        loss = total(add(a, a))
    backward(loss, tape)
    np.testing.assert_array_equal(a.grad, [2.0, 2.0, 2.0])


@pytest.mark.parametrize("c", [-50.0, 0.0, 3.25, 700.0])
def test_softmax_of_equal_scores_is_uniform(c):
    np.testing.assert_allclose(softmax_weights(Tensor([c, c, c])).data, np.full(3, 1.0 / 3.0), rtol=0, atol=1e-15)


def test_softmax_shift_invariance_and_direct_formula():
    rng = np.random.default_rng(8)
    for _ in range(20):
        scores = rng.uniform(-3.0, 3.0, size=5)
        weights = softmax_weights(Tensor(scores)).data
        direct = np.exp(scores) / np.exp(scores).sum()
        assert np.max(np.abs(weights - direct)) < 1e-12
        assert abs(weights.sum() - 1.0) < 1e-12
        assert np.all((weights > 0) & (weights <= 1))
        shifted = softmax_weights(Tensor(scores + rng.uniform(-100.0, 100.0))).data
        assert np.max(np.abs(weights - shifted)) < 1e-12


def test_softmax_large_gap_does_not_overflow():
    weights = softmax_weights(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(weights))
    assert weights[0] == pytest.approx(1.0)
    assert weights[1] < 1e-300


def test_adagrad_reference_step():
    param = Tensor([1.0], requires_grad=True)
    param.grad = np.array([2.0])
    state = AdagradState.for_param(param, learning_rate=0.1, epsilon=0.0)
    adagrad_step(param, state)
    assert param.data[0] == pytest.approx(0.9, abs=1e-15)


def test_adagrad_accumulator_grows_and_steps_shrink():
    param = Tensor([1.0, -1.0], requires_grad=True)
    state = AdagradState.for_param(param, learning_rate=0.1, epsilon=0.0)
    previous = state.accumulator.copy()
    steps = []
    for _ in range(3):
        before = param.data.copy()
        param.grad = np.array([2.0, -0.5])
        adagrad_step(param, state)
        assert np.all(state.accumulator >= previous)
        previous = state.accumulator.copy()
        steps.append(np.abs(param.data - before))
    assert np.all(steps[1] < steps[0])
    assert np.all(steps[2] < steps[1])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
