"""Tensor core: shapes, values, and gradients against finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedt.tensor import (
    ContractError,
    DimensionError,
    Tensor,
    backward,
    concat,
    elementwise,
    matmul,
    no_grad,
    reduce,
    repeat_axis,
    split,
    variance,
)

from oracles import finite_difference, relative_error, two_pass_mean_var

RNG = np.random.default_rng(20240811)


def grad_check(build_loss, x0: np.ndarray, n_idx: int = 8, tol: float = 1e-4):
    """Compare analytic gradient of build_loss(Tensor) against central
    finite differences at randomly chosen coordinates."""
    x = Tensor(x0.copy(), requires_grad=True)
    loss = build_loss(x)
    backward(loss)
    analytic = x.grad.reshape(-1)
    idx = RNG.choice(x0.size, size=min(n_idx, x0.size), replace=False)
    fd = finite_difference(lambda a: build_loss(Tensor(a)).item(), x0, idx)
    err = relative_error(analytic[idx], fd)
    assert err.max() < tol, f"gradient mismatch: {err.max():.2e}"


class TestMatmul:
    def test_identity(self):
        m = RNG.normal(size=(3, 3))
        out = matmul(Tensor(np.eye(3)), Tensor(m))
        np.testing.assert_array_equal(out.data, m)

    def test_hand_arithmetic(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        np.testing.assert_array_equal(matmul(a, b).data, [[3.0], [7.0]])

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradients_match_finite_differences(self):
        a0 = RNG.uniform(-1, 1, size=(4, 5))
        b0 = RNG.uniform(-1, 1, size=(5, 3))

        def loss_a(a):
            return (matmul(a, Tensor(b0)) ** 2.0).sum()

        def loss_b(b):
            return (matmul(Tensor(a0), b) ** 2.0).sum()

        grad_check(loss_a, a0)
        grad_check(loss_b, b0)

    def test_batched_with_leading_broadcast(self):
        a0 = RNG.uniform(-1, 1, size=(6, 4))
        b0 = RNG.uniform(-1, 1, size=(3, 4, 2))
        out = matmul(Tensor(a0), Tensor(b0))
        assert out.shape == (3, 6, 2)
        np.testing.assert_allclose(out.data, a0 @ b0, atol=0)
        grad_check(lambda a: (matmul(a, Tensor(b0)) ** 2.0).sum(), a0)
        grad_check(lambda b: (matmul(Tensor(a0), b) ** 2.0).sum(), b0)


class TestElementwise:
    def test_mul_by_ones_is_identity(self):
        a = RNG.normal(size=(3, 4))
        out = elementwise(Tensor(a), Tensor(np.ones((3, 4))), "mul")
        np.testing.assert_array_equal(out.data, a)

    def test_mul_by_zeros_kills_gradient(self):
        a = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
        out = elementwise(a, Tensor(np.zeros((3, 4))), "mul")
        np.testing.assert_array_equal(out.data, 0.0)
        backward(out.sum())
        np.testing.assert_array_equal(a.grad, 0.0)

    def test_broadcast_matches_explicit_tiling(self):
        x = RNG.normal(size=(5, 3))
        y = RNG.normal(size=(3,))
        out = elementwise(Tensor(x), Tensor(y), "mul")
        tiled = np.tile(y, (5, 1))
        np.testing.assert_array_equal(out.data, x * tiled)

    def test_broadcast_gradients(self):
        x0 = RNG.uniform(-1, 1, size=(5, 3))
        y0 = RNG.uniform(-1, 1, size=(3,))
        grad_check(lambda y: ((Tensor(x0) * y) ** 2.0).sum(), y0)
        grad_check(lambda x: ((x + Tensor(y0)) ** 3.0).sum(), x0)

    def test_incompatible_shapes_raise(self):
        with pytest.raises(DimensionError):
            elementwise(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), "add")

    @given(st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=20, deadline=None)
    def test_add_commutes(self, n, m):
        a = RNG.normal(size=(n, m))
        b = RNG.normal(size=(m,))
        left = (Tensor(a) + Tensor(b)).data
        right = (Tensor(b) + Tensor(a)).data
        np.testing.assert_array_equal(left, right)


class TestReduce:
    def test_mean_of_constant(self):
        out = reduce(Tensor(np.full((4, 6), 2.5)), None, "mean")
        assert out.item() == 2.5

    def test_var_of_constant_is_zero(self):
        out = reduce(Tensor(np.full((4, 6), 2.5)), None, "var")
        assert out.item() == 0.0

    def test_mean_var_match_two_pass_reference(self):
        x = RNG.normal(size=(3, 5, 7))
        mean_ref, var_ref = two_pass_mean_var(x, (1,))
        mean = reduce(Tensor(x), 1, "mean", keepdims=True)
        var = variance(Tensor(x), 1, keepdims=True)
        np.testing.assert_allclose(mean.data, mean_ref, atol=1e-6)
        np.testing.assert_allclose(var.data, var_ref, atol=1e-6)

    def test_axis_out_of_range(self):
        with pytest.raises(DimensionError):
            reduce(Tensor(np.zeros((2, 3))), 5, "sum")

    def test_max_gradient_routes_to_argmax(self):
        x0 = np.array([[1.0, 3.0, 2.0], [0.0, -1.0, 5.0]])
        x = Tensor(x0, requires_grad=True)
        backward(reduce(x, 1, "max").sum())
        np.testing.assert_array_equal(x.grad, [[0, 1, 0], [0, 0, 1]])

    def test_reduction_gradients(self):
        x0 = RNG.uniform(-1, 1, size=(4, 5))
        grad_check(lambda x: (x.mean(axis=0) ** 2.0).sum(), x0)
        grad_check(lambda x: (variance(x, 1) ** 2.0).sum(), x0)
        grad_check(lambda x: (x.sum(axis=1) ** 2.0).sum(), x0)


class TestShapeOps:
    def test_concat_split_round_trip(self):
        a = RNG.normal(size=(2, 3, 4))
        b = RNG.normal(size=(2, 5, 4))
        joined = concat([Tensor(a), Tensor(b)], axis=1)
        pa, pb = split(joined, [3, 5], axis=1)
        np.testing.assert_array_equal(pa.data, a)
        np.testing.assert_array_equal(pb.data, b)

    def test_reshape_preserves_flat_order(self):
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        out = Tensor(x).reshape(3, 2)
        np.testing.assert_array_equal(out.data.reshape(-1), x.reshape(-1))

    def test_concat_gradient_routes_to_sources(self):
        a0 = RNG.uniform(-1, 1, size=(2, 3))
        b0 = RNG.uniform(-1, 1, size=(2, 2))

        def loss(a):
            joined = concat([a, Tensor(b0)], axis=1)
            return (joined ** 3.0).sum()

        grad_check(loss, a0)

    def test_split_gradients(self):
        x0 = RNG.uniform(-1, 1, size=(4, 6))

        def loss(x):
            lo, hi = split(x, [2, 4], axis=1)
            return (lo ** 2.0).sum() + (hi ** 3.0).sum()

        grad_check(loss, x0)

    def test_inconsistent_concat_sizes(self):
        with pytest.raises(DimensionError):
            concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_repeat_axis_gradient_sums_slices(self):
        x0 = RNG.uniform(-1, 1, size=(3, 4))
        grad_check(lambda x: (repeat_axis(x, 1, 5) ** 2.0).sum(), x0)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 1))
    @settings(max_examples=25, deadline=None)
    def test_split_concat_is_bijective(self, n, m, axis):
        x = RNG.normal(size=(n, m))
        sizes = [1] * x.shape[axis]
        pieces = split(Tensor(x), sizes, axis)
        back = concat(pieces, axis)
        np.testing.assert_array_equal(back.data, x)


class TestBackward:
    def test_sum_of_squares(self):
        x = Tensor(RNG.normal(size=(7,)), requires_grad=True)
        backward((x ** 2.0).sum())
        np.testing.assert_allclose(x.grad, 2 * x.data, atol=0)

    def test_constant_loss_leaves_grads_zero(self):
        x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
        backward((x * 0.0).sum())
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * 2.0)

    def test_double_backward_rejected(self):
        x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
        loss = (x ** 2.0).sum()
        backward(loss)
        with pytest.raises(ContractError):
            backward(loss)

    def test_diamond_graph_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * 3.0
        loss = (y * y).sum()  # d/dx (3x)^2 = 18x
        backward(loss)
        np.testing.assert_allclose(x.grad, [36.0])

    def test_no_grad_blocks_recording(self):
        x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
        with no_grad():
            y = (x ** 2.0).sum()
        assert not y.requires_grad

    def test_determinism_bitwise(self):
        x0 = RNG.normal(size=(16, 16))
        w0 = RNG.normal(size=(16, 16))

        def run():
            x = Tensor(x0, requires_grad=True)
            out = (matmul(x, Tensor(w0)).mean(axis=1) ** 2.0).sum()
            backward(out)
            return out.data.copy(), x.grad.copy()

        o1, g1 = run()
        o2, g2 = run()
        assert np.array_equal(o1, o2) and np.array_equal(g1, g2)

    def test_finite_outputs_on_finite_inputs(self):
        from spikedt.tensor import exp, log, sqrt, tanh

        x = Tensor(RNG.uniform(-1, 1, size=(50,)))
        for fn in (exp, tanh):
            assert np.isfinite(fn(x).data).all()
        pos = Tensor(np.abs(x.data) + 0.1)
        for fn in (log, sqrt):
            assert np.isfinite(fn(pos).data).all()
