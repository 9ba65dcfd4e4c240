import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semicl import autodiff as ad
from semicl.autodiff import Tape, Tensor, grad_check
from semicl.errors import (
    ContractError,
    DimensionError,
    DomainError,
    TapeStateError,
)

import oracles

RNG = np.random.default_rng(7)


def probe(shape):
    return Tensor(RNG.normal(size=shape))


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------

def test_matmul_identity():
    a = RNG.normal(size=(2, 2))
    out = ad.matmul(Tensor(np.eye(2)), Tensor(a))
    assert np.array_equal(out.data, a)


def test_softmax_uniform_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    assert np.allclose(out.data, 1.0 / 3.0, atol=1e-15)


def test_conv1d_direct_example():
    out = ad.conv1d(Tensor([[1.0, 2.0, 3.0, 4.0]]), Tensor([[[1.0, 0.0, -1.0]]]))
    assert np.allclose(out.data, [[-2.0, -2.0]])


@pytest.mark.parametrize("dilation,stride,padding", [(1, 1, 0), (2, 1, 2), (3, 2, 1), (1, 3, 0)])
def test_conv1d_matches_loop_oracle(dilation, stride, padding):
    x = RNG.normal(size=(2, 3, 17))
    w = RNG.normal(size=(4, 3, 3))
    b = RNG.normal(size=4)
    out = ad.conv1d(Tensor(x), Tensor(w), Tensor(b), dilation=dilation, stride=stride,
                    padding=padding)
    expected = oracles.conv1d_direct(x, w, b, dilation=dilation, stride=stride, padding=padding)
    assert np.allclose(out.data, expected, atol=1e-12)


def test_conv1d_leading_batch_axes():
    x = RNG.normal(size=(2, 5, 3, 10))
    w = RNG.normal(size=(4, 3, 3))
    out = ad.conv1d(Tensor(x), Tensor(w), padding=1)
    flat = oracles.conv1d_direct(x.reshape(10, 3, 10), w, padding=1)
    assert np.allclose(out.data, flat.reshape(2, 5, 4, 10), atol=1e-12)


def test_depthwise_conv1d_matches_loop_oracle():
    x = RNG.normal(size=(2, 3, 9))
    w = RNG.normal(size=(3, 2, 3))
    b = RNG.normal(size=6)
    out = ad.depthwise_conv1d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    expected = oracles.depthwise_conv1d_direct(x, w, b, padding=1)
    assert out.shape == (2, 6, 9)
    assert np.allclose(out.data, expected, atol=1e-12)


def test_avg_pool_halves_length():
    x = RNG.normal(size=(2, 3, 8))
    out = ad.avg_pool(Tensor(x), 2)
    assert out.shape == (2, 3, 4)
    assert np.allclose(out.data, x.reshape(2, 3, 4, 2).mean(-1))


def test_avg_pool_trims_remainder():
    x = RNG.normal(size=(1, 1, 7))
    out = ad.avg_pool(Tensor(x), 2)
    assert out.shape == (1, 1, 3)


def test_concat_slice_transpose_reshape_round_trip():
    a, b = RNG.normal(size=(2, 3)), RNG.normal(size=(4, 3))
    merged = ad.concat([Tensor(a), Tensor(b)], axis=0)
    back = ad.slice_(merged, 0, 2, 6)
    assert np.array_equal(back.data, b)
    t = ad.transpose(Tensor(a), (1, 0))
    assert np.array_equal(t.data, a.T)
    r = ad.reshape(Tensor(a), (3, 2))
    assert np.array_equal(r.data, a.reshape(3, 2))


# ---------------------------------------------------------------------------
# shape and domain errors
# ---------------------------------------------------------------------------

def test_matmul_shape_error_names_op():
    with pytest.raises(DimensionError, match="matmul"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_conv1d_channel_mismatch_names_extents():
    with pytest.raises(DimensionError, match="channels"):
        ad.conv1d(Tensor(np.zeros((1, 2, 8))), Tensor(np.zeros((3, 4, 3))))


def test_conv1d_rejects_bad_dilation():
    with pytest.raises(ContractError):
        ad.conv1d(Tensor(np.zeros((1, 1, 8))), Tensor(np.zeros((1, 1, 3))), dilation=0)


def test_log_negative_is_domain_error():
    with pytest.raises(DomainError):
        ad.log(Tensor([-0.5]))


def test_log_zero_uses_epsilon():
    out = ad.log(Tensor([0.0]))
    assert np.isclose(out.data[0], np.log(1e-12))


# ---------------------------------------------------------------------------
# backward mechanics
# ---------------------------------------------------------------------------

def test_sum_backward_is_ones():
    x = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    with Tape() as tape:
        y = ad.sum(x)
    tape.backward(y)
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_exp_grad_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Tape() as tape:
        y = ad.exp(x)
    tape.backward(y)
    assert float(x.grad) == 1.0


def test_gradient_accumulation_doubles_exactly():
    x = Tensor(RNG.normal(size=(5,)), requires_grad=True)
    with Tape() as tape:
        y = ad.sum(ad.add(x, x))
    tape.backward(y)
    assert np.array_equal(x.grad, np.full(5, 2.0))


def test_backward_populates_intermediate_grads():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    with Tape() as tape:
        mid = ad.mul_scalar(x, 2.0)
        y = ad.sum(mid)
    tape.backward(y)
    assert mid.grad is not None and mid.grad.shape == mid.shape
    assert y.grad is not None


def test_backward_twice_raises():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    with Tape() as tape:
        y = ad.sum(x)
    tape.backward(y)
    with pytest.raises(TapeStateError):
        tape.backward(y)


def test_backward_non_scalar_raises():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    with Tape() as tape:
        y = ad.mul_scalar(x, 2.0)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_backward_empty_tape_raises():
    with Tape() as tape:
        pass
    with pytest.raises(TapeStateError):
        tape.backward(Tensor(1.0, requires_grad=True))


def test_no_recording_without_tape():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    y = ad.sum(x)
    assert y.requires_grad is False


# ---------------------------------------------------------------------------
# gradient checks: every differentiable op
# ---------------------------------------------------------------------------

def scalarized(op, *const_args, **kwargs):
    """Wrap an op into a scalar closure by dotting with a fixed probe."""
    def closure(*inputs):
        out = op(*inputs, *const_args, **kwargs)
        return ad.sum(ad.mul(out, closure.probe))
    closure.probe = None
    return closure


def run_op_grad_check(make_inputs, op, n_trials=10, tol=1e-4, **kwargs):
    worst = 0.0
    for _ in range(n_trials):
        inputs = make_inputs()
        closure = scalarized(op, **kwargs)
        out_shape = op(*[Tensor(t.data) for t in inputs], **kwargs).shape
        closure.probe = probe(out_shape)
        worst = max(worst, grad_check(closure, inputs, step=1e-5))
    assert worst < tol, f"max relative error {worst}"
    return worst


def t(shape):
    return Tensor(RNG.normal(size=shape), requires_grad=True)


OP_CASES = {
    "add": (lambda: [t((3, 4)), t((3, 4))], ad.add, {}),
    "add_broadcast": (lambda: [t((3, 4)), t((4,))], ad.add, {}),
    "sub": (lambda: [t((3, 4)), t((3, 4))], ad.sub, {}),
    "mul": (lambda: [t((3, 4)), t((3, 4))], ad.mul, {}),
    "mul_scalar": (lambda: [t((3, 4))], lambda x: ad.mul_scalar(x, -1.7), {}),
    "matmul": (lambda: [t((3, 4)), t((4, 2))], ad.matmul, {}),
    "conv1d": (lambda: [t((2, 3, 11)), t((4, 3, 3)), t((4,))],
               lambda x, w, b: ad.conv1d(x, w, b, dilation=2, padding=2), {}),
    "depthwise": (lambda: [t((2, 3, 8)), t((3, 2, 3)), t((6,))],
                  lambda x, w, b: ad.depthwise_conv1d(x, w, b, padding=1), {}),
    "avg_pool": (lambda: [t((2, 3, 9))], lambda x: ad.avg_pool(x, 2), {}),
    "relu": (lambda: [Tensor(RNG.normal(size=(4, 5)) + np.sign(RNG.normal(size=(4, 5))) * 0.3,
                             requires_grad=True)], ad.relu, {}),
    "exp": (lambda: [t((3, 3))], ad.exp, {}),
    "log": (lambda: [Tensor(RNG.uniform(0.5, 3.0, size=(3, 3)), requires_grad=True)], ad.log, {}),
    "sum_all": (lambda: [t((3, 4))], ad.sum, {}),
    "sum_axis": (lambda: [t((3, 4))], lambda x: ad.sum(x, axis=1), {}),
    "mean_axis": (lambda: [t((3, 4))], lambda x: ad.mean(x, axis=0), {}),
    "l2_normalize": (lambda: [t((4, 6))], lambda x: ad.l2_normalize(x, axis=1), {}),
    "cosine_matrix": (lambda: [t((4, 6)), t((3, 6))], ad.cosine_similarity_matrix, {}),
    "softmax": (lambda: [t((4, 5))], lambda x: ad.softmax(x, axis=1), {}),
    "concat": (lambda: [t((2, 3)), t((4, 3))], lambda a, b: ad.concat([a, b], axis=0), {}),
    "slice": (lambda: [t((5, 3))], lambda x: ad.slice_(x, 0, 1, 4), {}),
    "transpose": (lambda: [t((2, 3, 4))], lambda x: ad.transpose(x, (2, 0, 1)), {}),
    "reshape": (lambda: [t((2, 6))], lambda x: ad.reshape(x, (3, 4)), {}),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_grad_check_per_op(name):
    make_inputs, op, kwargs = OP_CASES[name]
    run_op_grad_check(make_inputs, op, **kwargs)


def test_grad_check_linear_is_nearly_exact():
    c = probe((5,))
    x = t((5,))
    err = grad_check(lambda v: ad.sum(ad.mul(v, c)), [x])
    assert err < 1e-10


def test_grad_check_relu_away_from_zero():
    x = Tensor(np.array([1.0, -2.0, 0.5, -0.25]), requires_grad=True)
    c = probe((4,))
    err = grad_check(lambda v: ad.sum(ad.mul(ad.relu(v), c)), [x])
    assert err < 1e-6


def test_grad_check_rejects_bad_step():
    x = t((3,))
    with pytest.raises(ContractError):
        grad_check(lambda v: ad.sum(v), [x], step=1.0)


def test_grad_check_rejects_non_scalar():
    x = t((3,))
    with pytest.raises(ContractError):
        grad_check(lambda v: ad.mul_scalar(v, 2.0), [x])


# ---------------------------------------------------------------------------
# numeric invariants
# ---------------------------------------------------------------------------

@given(st.integers(2, 6), st.integers(2, 5), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_softmax_rows_sum_to_one(rows, cols, seed):
    x = np.random.default_rng(seed).normal(scale=3.0, size=(rows, cols))
    out = ad.softmax(Tensor(x), axis=1).data
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(1, 6), st.integers(2, 8), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_l2_normalize_unit_norm(rows, dim, seed):
    x = np.random.default_rng(seed).normal(size=(rows, dim))
    x += np.sign(x) * 0.2  # keep norms comfortably above epsilon
    out = ad.l2_normalize(Tensor(x), axis=1).data
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)


def test_cosine_matrix_unit_diagonal():
    a = RNG.normal(size=(6, 9))
    s = ad.cosine_similarity_matrix(Tensor(a), Tensor(a)).data
    assert np.allclose(np.diag(s), 1.0, atol=1e-9)
