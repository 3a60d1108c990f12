"""
Tests for the tensor tape: forward values, reverse-mode gradients and the
error contracts of the primitives.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from backend.app.core.exceptions import NonFiniteError, ShapeError, SNMTError, TapeError
from backend.app.modules.tensor import (
    Tape,
    add,
    check_gradients,
    concat,
    embedding_lookup,
    expand,
    gather_rows,
    log_softmax_rows,
    matmul,
    mul,
    primitive_forward,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax_rows,
    sub,
    sum_,
    tanh,
)


def weighted_sum(x, seed=1):
    """Scalar readout with fixed random weights, so no gradient vanishes by symmetry"""
    weights = np.random.default_rng(seed).normal(size=x.shape)
    return sum_(mul(x, x.tape.constant(weights)))


# ----------------------------------------------------------------------------
# Forward values
# ----------------------------------------------------------------------------

def test_matmul_identity():
    tape = Tape()
    a = tape.constant([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(a, tape.constant(np.eye(2)))
    assert_array_equal(out.value, a.value)


def test_softmax_of_equal_logits_is_uniform():
    tape = Tape()
    out = softmax_rows(tape.constant([[0.0, 0.0]]))
    assert_allclose(out.value, [[0.5, 0.5]])


def test_masked_softmax_zeroes_padding():
    tape = Tape()
    out = softmax_rows(tape.constant([[1.0, 2.0, 3.0]]), mask=np.array([[1.0, 1.0, 0.0]]))
    assert out.value[0, 2] == 0.0
    assert_allclose(out.value.sum(), 1.0)
    assert_allclose(out.value[0, :2], np.exp([1.0, 2.0]) / np.exp([1.0, 2.0]).sum())


def test_tanh_and_sigmoid_at_zero():
    tape = Tape()
    x = tape.constant([0.0])
    assert tanh(x).item() == 0.0
    assert sigmoid(x).item() == 0.5


def test_log_softmax_matches_log_of_softmax():
    tape = Tape()
    x = tape.constant([[0.3, -1.2, 2.0], [5.0, 5.0, -3.0]])
    assert_allclose(log_softmax_rows(x).value, np.log(softmax_rows(x).value), atol=1e-12)


def test_add_broadcasts_bias_row():
    tape = Tape()
    out = add(tape.constant(np.zeros((2, 3))), tape.constant([1.0, 2.0, 3.0]))
    assert_array_equal(out.value, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])


def test_embedding_lookup_and_gather():
    tape = Tape()
    table = tape.constant(np.arange(12.0).reshape(4, 3))
    rows = embedding_lookup(table, [[3, 0]])
    assert rows.shape == (1, 2, 3)
    assert_array_equal(rows.value[0, 0], [9.0, 10.0, 11.0])
    picked = gather_rows(table, [2, 0, 1, 2])
    assert_array_equal(picked.value, [2.0, 3.0, 7.0, 11.0])


def test_values_are_read_only():
    tape = Tape()
    x = tape.parameter("x", [1.0, 2.0])
    with pytest.raises(ValueError):
        x.value[0] = 5.0


def test_primitive_forward_alias_records_entry():
    tape = Tape()
    a = tape.constant([1.0, 2.0])
    out = primitive_forward(tape, "scale", [a], factor=3.0)
    assert_array_equal(out.value, [3.0, 6.0])
    assert tape.entries[-1].kind == "scale"


# ----------------------------------------------------------------------------
# Gradients
# ----------------------------------------------------------------------------

def test_gradient_of_sum_of_squares():
    tape = Tape()
    x = tape.parameter("x", [1.0, 2.0])
    grads = tape.backward(sum_(mul(x, x)))
    assert_allclose(grads["x"], [2.0, 4.0])
    assert_allclose(grads[x], [2.0, 4.0])


def test_sigmoid_gradient_at_zero():
    tape = Tape()
    x = tape.parameter("x", [0.0])
    grads = tape.backward(sum_(sigmoid(x)))
    assert_allclose(grads["x"], [0.25])


def test_unreached_parameter_gets_zero_gradient():
    tape = Tape()
    x = tape.parameter("x", [1.0, 2.0])
    unused = tape.parameter("unused", np.ones((2, 2)))
    grads = tape.backward(sum_(x)).named()
    assert_array_equal(grads["unused"], np.zeros((2, 2)))
    assert unused.name == "unused"


def test_fan_out_accumulates():
    tape = Tape()
    x = tape.parameter("x", [3.0])
    y = add(scale(x, 2.0), mul(x, x))
    assert_allclose(tape.backward(sum_(y))["x"], [2.0 + 6.0])


def test_replay_reproduces_recorded_values():
    tape = Tape()
    x = tape.parameter("x", np.random.default_rng(0).normal(size=(3, 4)))
    w = tape.parameter("w", np.random.default_rng(1).normal(size=(4, 2)))
    softmax_rows(tanh(matmul(x, w)))
    for recorded, replayed in zip((e.value for e in tape.entries), tape.replay()):
        assert_array_equal(recorded, replayed)


# ----------------------------------------------------------------------------
# Contract errors
# ----------------------------------------------------------------------------

def test_backward_requires_scalar_loss():
    tape = Tape()
    x = tape.parameter("x", [1.0, 2.0])
    with pytest.raises(TapeError):
        tape.backward(mul(x, x))


def test_backward_rejects_foreign_node():
    tape, other = Tape(), Tape()
    x = other.parameter("x", [1.0])
    with pytest.raises(TapeError):
        tape.backward(sum_(x))


def test_inputs_from_another_tape_are_rejected():
    tape, other = Tape(), Tape()
    with pytest.raises(TapeError):
        add(tape.constant([1.0]), other.constant([1.0]))


def test_backward_on_non_recording_tape():
    tape = Tape(record=False)
    x = tape.parameter("x", [1.0])
    with pytest.raises(TapeError):
        tape.backward(sum_(x))


def test_duplicate_parameter_name():
    tape = Tape()
    tape.parameter("w", [1.0])
    with pytest.raises(TapeError):
        tape.parameter("w", [2.0])


def test_shape_error_names_primitive_and_shapes():
    tape = Tape()
    with pytest.raises(ShapeError) as exc:
        matmul(tape.constant(np.zeros((2, 3))), tape.constant(np.zeros((2, 3))))
    assert exc.value.details["primitive"] == "matmul"
    assert exc.value.details["shapes"] == [[2, 3], [2, 3]]


@pytest.mark.parametrize("build", [
    lambda t: sub(t.constant(np.zeros(3)), t.constant(np.zeros(4))),
    lambda t: concat([t.constant(np.zeros((2, 3))), t.constant(np.zeros((3, 3)))], axis=1),
    lambda t: slice_(t.constant(np.zeros((2, 3))), 2, 5),
    lambda t: reshape(t.constant(np.zeros((2, 3))), (4, 2)),
    lambda t: expand(t.constant(np.zeros((2, 3))), axis=0, size=4),
    lambda t: embedding_lookup(t.constant(np.zeros((4, 2))), [4]),
    lambda t: gather_rows(t.constant(np.zeros((2, 3))), [0, 1, 2]),
    lambda t: softmax_rows(t.constant(np.zeros((1, 2))), mask=np.zeros((1, 2))),
])
def test_contract_violations_raise_shape_error(build):
    with pytest.raises(ShapeError):
        build(Tape())


def test_non_finite_forward_is_reported():
    tape = Tape()
    with pytest.raises(NonFiniteError):
        scale(tape.constant([1.0]), float("inf"))


# ----------------------------------------------------------------------------
# Finite differences
# ----------------------------------------------------------------------------

def test_gradcheck_linear_layer(rng):
    params = {"x": rng.normal(size=(3, 4)), "W": rng.normal(size=(4, 2)), "b": rng.normal(size=(2,))}

    def loss(tape, p):
        return weighted_sum(add(matmul(p["x"], p["W"]), p["b"]))

    assert check_gradients(loss, params, floor=1e-6) < 1e-6


def test_gradcheck_softmax_cross_entropy(rng):
    params = {"x": rng.normal(size=(4, 3)), "W": rng.normal(size=(3, 5))}
    labels = np.array([0, 4, 2, 2])

    def loss(tape, p):
        return scale(sum_(gather_rows(log_softmax_rows(matmul(p["x"], p["W"])), labels)), -1.0)

    assert check_gradients(loss, params, floor=1e-6) < 1e-5


@pytest.mark.parametrize("name,build", [
    ("batched-matmul", lambda p: matmul(p["a"], reshape(p["b"], (2, 3, 3)))),
    ("concat-slice", lambda p: concat([slice_(p["a"], 0, 2), slice_(p["a"], 1, 3)], axis=-1)),
    ("concat-rows", lambda p: concat([slice_(p["a"], 2, 3, axis=1), slice_(p["a"], 0, 1, axis=1)], axis=1)),
    ("expand", lambda p: expand(reshape(p["a"], (2, 1, 9)), axis=1, size=3)),
    ("gates", lambda p: mul(sigmoid(p["a"]), tanh(sub(p["a"], reshape(p["b"], (2, 3, 3)))))),
    ("masked-softmax", lambda p: softmax_rows(p["a"], mask=np.array([[[1, 1, 0]] * 3, [[1, 0, 0]] * 3]))),
    ("lookup", lambda p: embedding_lookup(reshape(p["b"], (6, 3)), [[0, 5, 5], [2, 0, 1]])),
])
def test_gradcheck_primitives(rng, name, build):
    params = {"a": rng.normal(size=(2, 3, 3)), "b": rng.normal(size=(18,))}

    def loss(tape, p):
        return weighted_sum(build(p))

    assert check_gradients(loss, params, floor=1e-6) < 1e-5, name


def test_gradcheck_rejects_bad_step():
    with pytest.raises(SNMTError):
        check_gradients(lambda tape, p: sum_(p["x"]), {"x": np.ones(2)}, h=1e-2)
