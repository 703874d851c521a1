"""Autodiff engine tests.

Every differentiable op is checked against a central-difference oracle over
many random seeds; forward values are checked against hand or stdlib math
computed outside the engine.
"""

import math

import numpy as np
import pytest

from conftest import fd_gradient_check, leaf
from robovid.tensor import (
    Tensor,
    add,
    assert_finite,
    concat,
    gelu,
    layer_norm,
    matmul,
    mse,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    reshape,
    scale,
    slice_,
    softmax_lastdim,
    transpose,
)

N_SEEDS = 20


def _weighted_scalar(rng, out):
    """Contract a tensor to a scalar with a fixed random cotangent."""
    w = Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    return reduce_sum(mul(out, w))


def _run_check(op_builder, make_leaves, seeds=N_SEEDS, tol=1e-6):
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        leaves = make_leaves(rng)

        def build():
            r = np.random.default_rng(5000 + seed)
            return _weighted_scalar(r, op_builder(rng, *leaves))

        worst = max(worst, fd_gradient_check(build, leaves))
    assert worst < tol, f"worst relative error {worst}"
    return worst


# --- elementwise ----------------------------------------------------

def test_add_same_shape_grad():
    _run_check(lambda rng, a, b: add(a, b), lambda rng: [leaf(rng, (3, 4)), leaf(rng, (3, 4))])


def test_add_scalar_grad():
    _run_check(lambda rng, a, b: add(a, b), lambda rng: [leaf(rng, (3, 4)), leaf(rng, ())])


def test_add_trailing_vector_grad():
    _run_check(lambda rng, a, b: add(a, b), lambda rng: [leaf(rng, (2, 3, 5)), leaf(rng, (5,))])


def test_mul_same_shape_grad():
    _run_check(lambda rng, a, b: mul(a, b), lambda rng: [leaf(rng, (4, 3)), leaf(rng, (4, 3))])


def test_mul_scalar_grad():
    _run_check(lambda rng, a, b: mul(a, b), lambda rng: [leaf(rng, ()), leaf(rng, (2, 6))])


def test_mul_trailing_vector_grad():
    _run_check(lambda rng, a, b: mul(a, b), lambda rng: [leaf(rng, (3, 4)), leaf(rng, (4,))])


def test_neg_grad():
    _run_check(lambda rng, a: neg(a), lambda rng: [leaf(rng, (5, 2))])


def test_scale_grad():
    _run_check(lambda rng, a: scale(a, 2.75), lambda rng: [leaf(rng, (3, 3))])


def test_gelu_grad():
    _run_check(lambda rng, a: gelu(a), lambda rng: [leaf(rng, (4, 5), scale=2.0)])


def test_gelu_values_match_erf_formula():
    # oracle computed with math.erf, independent of the scipy call inside
    xs = np.array([-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 2.5], dtype=np.float64)
    expect = np.array([x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0))) for x in xs])
    got = gelu(Tensor(xs)).data
    np.testing.assert_allclose(got, expect, rtol=0, atol=1e-14)
    assert got[3] == 0.0


# --- structural -----------------------------------------------------

def test_matmul_2d_grad():
    _run_check(lambda rng, a, b: matmul(a, b), lambda rng: [leaf(rng, (3, 4)), leaf(rng, (4, 2))])


def test_matmul_batched_grad():
    _run_check(
        lambda rng, a, b: matmul(a, b),
        lambda rng: [leaf(rng, (2, 3, 4)), leaf(rng, (2, 4, 2))],
    )


def test_matmul_forward_matches_numpy():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 2))
    got = matmul(Tensor(a), Tensor(b)).data
    np.testing.assert_array_equal(got, a @ b)


def test_reshape_grad():
    _run_check(lambda rng, a: reshape(a, (2, 6)), lambda rng: [leaf(rng, (3, 4))])


def test_transpose_grad():
    _run_check(lambda rng, a: transpose(a), lambda rng: [leaf(rng, (3, 4))])
    _run_check(lambda rng, a: transpose(a, (1, 0, 2)), lambda rng: [leaf(rng, (2, 3, 4))])


def test_concat_grad():
    _run_check(
        lambda rng, a, b, c: concat([a, b, c], axis=0),
        lambda rng: [leaf(rng, (2, 3)), leaf(rng, (1, 3)), leaf(rng, (4, 3))],
    )
    _run_check(
        lambda rng, a, b: concat([a, b], axis=1),
        lambda rng: [leaf(rng, (3, 2)), leaf(rng, (3, 5))],
    )


def test_slice_grad():
    _run_check(lambda rng, a: slice_(a, slice(1, 3)), lambda rng: [leaf(rng, (5, 4))])
    _run_check(
        lambda rng, a: slice_(a, (slice(None), slice(0, 2))),
        lambda rng: [leaf(rng, (3, 4))],
    )


def test_slice_backward_scatters_zeros_elsewhere():
    x = leaf(np.random.default_rng(0), (4, 3))
    out = reduce_sum(slice_(x, slice(1, 2)))
    out.backward()
    expect = np.zeros((4, 3))
    expect[1] = 1.0
    np.testing.assert_array_equal(x.grad, expect)


# --- reductions and fused losses ------------------------------------

def test_reduce_sum_grad():
    _run_check(lambda rng, a: reduce_sum(a), lambda rng: [leaf(rng, (3, 4))])
    _run_check(lambda rng, a: reduce_sum(a, axis=1), lambda rng: [leaf(rng, (3, 4))])
    _run_check(
        lambda rng, a: reduce_sum(a, axis=0, keepdims=True), lambda rng: [leaf(rng, (3, 4))]
    )


def test_reduce_mean_grad():
    _run_check(lambda rng, a: reduce_mean(a), lambda rng: [leaf(rng, (4, 5))])
    _run_check(lambda rng, a: reduce_mean(a, axis=-1), lambda rng: [leaf(rng, (2, 3, 4))])


def test_mse_grad():
    _run_check(lambda rng, a, b: mse(a, b), lambda rng: [leaf(rng, (4, 6)), leaf(rng, (4, 6))])


def test_mse_forward_value():
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    got = float(mse(Tensor(a), Tensor(b)).data)
    assert abs(got - np.mean((a - b) ** 2)) < 1e-14
    assert float(mse(Tensor(a), Tensor(a.copy())).data) == 0.0


def test_layer_norm_grad():
    _run_check(
        lambda rng, x, g, b: layer_norm(x, g, b),
        lambda rng: [leaf(rng, (3, 6)), leaf(rng, (6,)), leaf(rng, (6,))],
    )


def test_layer_norm_normalizes_rows():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((7, 16)) * 3 + 2, dtype=np.float64)
    ones = Tensor(np.ones(16), dtype=np.float64)
    zeros = Tensor(np.zeros(16), dtype=np.float64)
    out = layer_norm(x, ones, zeros).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


def test_softmax_grad():
    _run_check(lambda rng, x: softmax_lastdim(x), lambda rng: [leaf(rng, (3, 5))])


def test_softmax_masked_grad():
    mask = np.array([[True, False, True, True], [False, True, True, False]])
    _run_check(
        lambda rng, x: softmax_lastdim(x, mask),
        lambda rng: [leaf(rng, (2, 4))],
    )


def test_softmax_rows_sum_to_one_and_masked_entries_zero():
    rng = np.random.default_rng(11)
    x = Tensor(rng.standard_normal((4, 6)) * 5, dtype=np.float64)
    mask = rng.random((4, 6)) > 0.4
    mask[:, 0] = True  # no fully-masked rows
    p = softmax_lastdim(x, mask).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(p[~mask] == 0.0)
    assert np.all(p[mask] > 0.0)


def test_softmax_fully_masked_row_rejected():
    x = Tensor(np.zeros((2, 3)))
    mask = np.array([[True, True, True], [False, False, False]])
    with pytest.raises(ValueError):
        softmax_lastdim(x, mask)


def test_softmax_large_scores_stable():
    x = Tensor(np.array([[1000.0, 1000.0, -1000.0]]))
    p = softmax_lastdim(x).data
    assert np.isfinite(p).all()
    np.testing.assert_allclose(p[0, :2], 0.5, atol=1e-6)


# --- engine mechanics ------------------------------------------------

def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        add(x, x).backward()


def test_gradient_accumulates_across_reuse():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = add(mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1 = 7
    y.backward()
    assert float(x.grad) == 7.0


def test_diamond_graph_grad():
    # z = (x + x) * x = 2 x^2 -> dz/dx = 4x
    x = Tensor(np.array(2.5), requires_grad=True)
    z = mul(add(x, x), x)
    z.backward()
    assert float(z.data) == 12.5
    assert float(x.grad) == 10.0


def test_backward_is_deterministic():
    rng = np.random.default_rng(21)
    x = leaf(rng, (6, 6))
    w = leaf(rng, (6, 6))

    def run():
        x.zero_grad()
        w.zero_grad()
        loss = mse(gelu(matmul(x, w)), Tensor(np.zeros((6, 6)), dtype=np.float64))
        loss.backward()
        return x.grad.copy(), w.grad.copy()

    gx1, gw1 = run()
    gx2, gw2 = run()
    assert np.array_equal(gx1, gx2) and np.array_equal(gw1, gw2)


def test_no_grad_tracking_for_plain_tensors():
    a = Tensor(np.ones(3))
    b = Tensor(np.ones(3))
    out = add(a, b)
    assert not out.requires_grad


def test_broadcast_rules_enforced():
    a = Tensor(np.ones((3, 4)))
    with pytest.raises(ValueError):
        add(a, Tensor(np.ones((4, 3))))
    with pytest.raises(ValueError):
        add(a, Tensor(np.ones((3, 1))))  # column vectors are not supported
    with pytest.raises(ValueError):
        mul(a, Tensor(np.ones(3)))  # trailing dim must match


def test_dtype_mismatch_rejected():
    a = Tensor(np.ones((2, 2), dtype=np.float32))
    b = Tensor(np.ones((2, 2), dtype=np.float64))
    with pytest.raises(ValueError):
        add(a, b)


def test_matmul_shape_errors():
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((3, 4, 2))))


def test_integer_input_promoted_to_float32():
    t = Tensor(np.arange(4))
    assert t.dtype == np.float32


def test_assert_finite_raises_with_label():
    assert_finite(np.ones(3), "ok")
    with pytest.raises(FloatingPointError, match="velocity"):
        assert_finite(np.array([1.0, np.nan]), "velocity")
    with pytest.raises(FloatingPointError):
        assert_finite(np.array([np.inf]), "x")
