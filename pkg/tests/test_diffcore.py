"""Autodiff core: forward semantics, gradients vs finite differences, shape errors."""

import numpy as np
import pytest

from conftest import central_diff, rel_err
from mobicast import diffcore as dc
from mobicast.backend import BACKEND_NAME, numpy_kernels
from mobicast.diffcore import Tape, Tensor, backward
from mobicast.errors import ContractError, DomainError, ShapeError


def matmul_oracle(a, b):
    """Naive triple loop, independent of numpy's matmul."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[p, j]
            out[i, j] = s
    return out


class TestForward:
    def test_matmul_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = dc.matmul(a, Tensor.identity(2))
        np.testing.assert_array_equal(out.values, [[1, 2], [3, 4]])
        out2 = dc.matmul(Tensor.identity(2), Tensor([[5.0], [7.0]]))
        np.testing.assert_array_equal(out2.values, [[5], [7]])

    def test_matmul_vs_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = dc.matmul(Tensor(a), Tensor(b)).values
        np.testing.assert_allclose(got, matmul_oracle(a, b), rtol=1e-13)

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            dc.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_elementwise_examples(self):
        np.testing.assert_array_equal(
            dc.elementwise("add", Tensor([[1.0, 2.0]]), Tensor([[0.0, 0.0]])).values,
            [[1, 2]],
        )
        np.testing.assert_array_equal(
            dc.elementwise("hadamard", Tensor([[2.0, 3.0]]), Tensor([[4.0, 5.0]])).values,
            [[8, 15]],
        )
        x = Tensor(np.random.default_rng(1).normal(size=(3, 3)))
        np.testing.assert_array_equal(dc.elementwise("sub", x, x).values, np.zeros((3, 3)))

    def test_add_broadcasts_row(self):
        out = dc.add(Tensor(np.ones((3, 2))), Tensor([[1.0, -1.0]]))
        np.testing.assert_array_equal(out.values, [[2, 0], [2, 0], [2, 0]])

    def test_elementwise_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dc.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))
        with pytest.raises(ShapeError):
            dc.sub(Tensor(np.zeros((2, 2))), Tensor(np.zeros((1, 2))))

    def test_activation_examples(self):
        assert dc.activation("sigmoid", Tensor([[0.0]])).values[0, 0] == 0.5
        assert dc.activation("tanh", Tensor([[0.0]])).values[0, 0] == 0.0
        assert dc.activation("leaky_relu", Tensor([[-1.0]]), 0.01).values[0, 0] == -0.01
        assert dc.activation("relu", Tensor([[-3.0]])).values[0, 0] == 0.0

    def test_softmax_examples(self):
        np.testing.assert_allclose(
            dc.softmax_rows(Tensor([[0.0, 0.0]])).values, [[0.5, 0.5]], atol=1e-15
        )
        for c in (-7.3, 0.0, 41.2):
            np.testing.assert_allclose(
                dc.softmax_rows(Tensor([[c, c, c]])).values, [[1 / 3] * 3], atol=1e-15
            )
        x = np.array([[1.0, 2.0, 3.0]])
        brute = np.exp(x) / np.exp(x).sum()
        np.testing.assert_allclose(dc.softmax_rows(Tensor(x)).values, brute, rtol=1e-12)

    def test_softmax_rows_sum_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(3)
        x = rng.normal(scale=5.0, size=(6, 9))
        y = dc.softmax_rows(Tensor(x)).values
        np.testing.assert_allclose(y.sum(axis=1), np.ones(6), atol=1e-12)
        assert np.all(y > 0) and np.all(y < 1)
        shifted = dc.softmax_rows(Tensor(x + 123.456)).values
        assert np.abs(y - shifted).max() < 1e-12

    def test_reduce_examples(self):
        assert dc.reduce("mean", Tensor([[1.0, 3.0]])).item() == 2.0
        assert dc.reduce("mean_abs", Tensor([[1.0, -1.0]])).item() == 1.0
        assert dc.reduce("mean_sq", Tensor([[2.0, -2.0]])).item() == 4.0
        assert dc.reduce("sum", Tensor([[1.0, 2.0], [3.0, 4.0]])).item() == 10.0

    def test_reduce_empty_and_unknown(self):
        with pytest.raises(DomainError):
            dc.reduce("sum", Tensor(np.zeros((0, 3))))
        with pytest.raises(DomainError):
            dc.reduce("median", Tensor([[1.0]]))

    def test_tensor_invariants(self):
        t = Tensor(np.arange(6.0).reshape(2, 3))
        assert t.rows * t.cols == t.values.size
        assert t.values.dtype == np.float64 and t.values.flags["C_CONTIGUOUS"]
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 2, 2)))


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
        with Tape():
            loss = dc.reduce("sum", x)
        backward(loss)
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_mean_sq_scalar(self):
        x = Tensor([[3.0]], requires_grad=True)
        with Tape():
            loss = dc.reduce("mean_sq", x)
        backward(loss)
        assert x.grad[0, 0] == pytest.approx(6.0)

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape():
            y = dc.scale(x, 2.0)
        with pytest.raises(ContractError):
            backward(y)

    def test_backward_requires_tape(self):
        x = Tensor(np.ones((1, 1)), requires_grad=True)
        with pytest.raises(ContractError):
            backward(dc.reduce("sum", x))

    def test_tape_consumed_once(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape():
            loss = dc.reduce("sum", dc.sigmoid(x))
        backward(loss)
        with pytest.raises(ContractError):
            backward(loss)

    def test_gradient_accumulation_multiuse_leaf(self):
        # a leaf used on two paths receives the sum of both contributions
        x_arr = np.array([[0.3, -0.7], [1.1, 0.4]])

        def value(arr):
            a = Tensor(arr)
            return dc.reduce("sum", dc.add(dc.hadamard(a, a), dc.scale(a, 3.0))).item()

        x = Tensor(x_arr, requires_grad=True)
        with Tape():
            loss = dc.reduce("sum", dc.add(dc.hadamard(x, x), dc.scale(x, 3.0)))
        backward(loss)
        fd = central_diff(value, x_arr)
        assert rel_err(x.grad, fd) < 1e-4

    def test_no_tape_no_graph(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        y = dc.sigmoid(x)  # outside any tape
        assert y.requires_grad is False and y._tape is None

    def test_mean_abs_subgradient_zero_at_zero(self):
        x = Tensor([[0.0, 2.0, -2.0]], requires_grad=True)
        with Tape():
            loss = dc.reduce("mean_abs", x)
        backward(loss)
        np.testing.assert_allclose(x.grad, [[0.0, 1 / 3, -1 / 3]])


# ops under gradient test: (name, builder returning scalar loss fn of one array)
def _op_cases():
    rng = np.random.default_rng(99)
    w_fixed = rng.uniform(-2, 2, size=(4, 3))
    b_fixed = rng.uniform(-2, 2, size=(5, 4))
    x_blocks = rng.uniform(-1, 1, size=(6, 4))
    idx = np.array([0, 2, 2, 4, 1, 3], dtype=np.int64)
    cases = {
        "matmul_left": ((5, 4), lambda t: dc.matmul(t, Tensor(w_fixed))),
        "matmul_right": ((4, 3), lambda t: dc.matmul(Tensor(b_fixed), t)),
        "add": ((5, 4), lambda t: dc.add(t, Tensor(b_fixed))),
        "add_row": ((5, 4), lambda t: dc.add(t, Tensor(b_fixed[:1, :]))),
        "sub": ((5, 4), lambda t: dc.sub(t, Tensor(b_fixed))),
        "hadamard": ((5, 4), lambda t: dc.hadamard(t, Tensor(b_fixed))),
        "scale": ((5, 4), lambda t: dc.scale(t, -2.5)),
        "add_scalar": ((5, 4), lambda t: dc.add_scalar(t, 1.5)),
        "sigmoid": ((5, 4), dc.sigmoid),
        "tanh": ((5, 4), dc.tanh),
        "relu": ((5, 4), dc.relu),
        "leaky_relu": ((5, 4), lambda t: dc.leaky_relu(t, 0.01)),
        "softmax_rows": ((5, 4), dc.softmax_rows),
        "mul_colvec": ((5, 4), lambda t: dc.mul_colvec(t, Tensor(b_fixed[:, :1]))),
        "mul_colvec_v": ((5, 1), lambda t: dc.mul_colvec(Tensor(b_fixed), t)),
        "concat_cols": ((5, 4), lambda t: dc.concat_cols(t, dc.tanh(t))),
        "slice_cols": ((5, 4), lambda t: dc.slice_cols(t, 1, 3)),
        "gather_rows": ((5, 4), lambda t: dc.gather_rows(t, idx)),
        "reshape": ((5, 4), lambda t: dc.reshape(t, 4, 5)),
        "block_mean": ((6, 4), lambda t: dc.block_mean(t, 3)),
        "block_matmul_a": ((6, 3), lambda t: dc.block_matmul(t, Tensor(x_blocks), 3)),
        "normalize_adjacency": ((6, 3), lambda t: dc.normalize_adjacency_blocks(dc.sigmoid(t), 3)),
    }
    return cases


@pytest.mark.parametrize("name", sorted(_op_cases()))
def test_gradients_match_finite_differences(name):
    """Analytic gradient vs central differences (eps=1e-5) within 1e-4 rel error."""
    shape, op = _op_cases()[name]
    for seed, readout in zip((0, 1, 2), ("mean_sq", "sum", "mean_abs")):
        rng = np.random.default_rng(1000 + seed)
        x_arr = rng.uniform(-2, 2, size=shape)

        def value(arr, op=op, readout=readout):
            return dc.reduce(readout, op(Tensor(arr))).item()

        x = Tensor(x_arr, requires_grad=True)
        with Tape():
            loss = dc.reduce(readout, op(x))
        backward(loss)
        assert x.grad is not None, name
        fd = central_diff(value, x_arr)
        assert rel_err(x.grad, fd) < 1e-4, f"{name} seed {seed}"


def test_block_matmul_x_gradient():
    rng = np.random.default_rng(11)
    a_fixed = rng.uniform(-1, 1, size=(6, 3))

    def value(arr):
        return dc.reduce("mean_sq", dc.block_matmul(Tensor(a_fixed), Tensor(arr), 3)).item()

    x_arr = rng.uniform(-2, 2, size=(6, 4))
    x = Tensor(x_arr, requires_grad=True)
    with Tape():
        loss = dc.reduce("mean_sq", dc.block_matmul(Tensor(a_fixed), x, 3))
    backward(loss)
    assert rel_err(x.grad, central_diff(value, x_arr)) < 1e-4


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(77)
        x = Tensor(rng.uniform(-2, 2, (6, 5)), requires_grad=True)
        w = Tensor(rng.uniform(-2, 2, (5, 4)), requires_grad=True)
        with Tape():
            y = dc.softmax_rows(dc.tanh(dc.matmul(x, w)))
            loss = dc.reduce("mean_sq", y)
        backward(loss)
        return loss.item(), x.grad.copy(), w.grad.copy()

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(gx1, gx2)
    np.testing.assert_array_equal(gw1, gw2)


def test_grad_present_iff_requires_grad():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = Tensor(np.ones((2, 2)))
    with Tape():
        loss = dc.reduce("sum", dc.hadamard(x, y))
    backward(loss)
    assert x.grad is not None
    assert y.grad is None


def test_backends_agree():
    """Compiled kernels must match the numpy fallback on random inputs."""
    if BACKEND_NAME == "numpy":
        pytest.skip("compiled backend not built")
    from mobicast.backend import _ckernels as ck

    rng = np.random.default_rng(123)
    x = rng.uniform(-3, 3, size=(9, 6))
    g = rng.uniform(-1, 1, size=(9, 6))
    for name, args in [
        ("sigmoid_fwd", (x,)),
        ("tanh_fwd", (x,)),
        ("relu_fwd", (x,)),
        ("leaky_relu_fwd", (x, 0.01)),
        ("softmax_rows_fwd", (x,)),
        ("relu_bwd", (x, g)),
        ("leaky_relu_bwd", (x, g, 0.01)),
    ]:
        np.testing.assert_allclose(
            getattr(ck, name)(*args), getattr(numpy_kernels, name)(*args), rtol=1e-13, atol=1e-15,
            err_msg=name,
        )
    y = numpy_kernels.sigmoid_fwd(x)
    np.testing.assert_allclose(ck.sigmoid_bwd(y, g), numpy_kernels.sigmoid_bwd(y, g), rtol=1e-13)
    yt = np.tanh(x)
    np.testing.assert_allclose(ck.tanh_bwd(yt, g), numpy_kernels.tanh_bwd(yt, g), rtol=1e-13)
    ys = numpy_kernels.softmax_rows_fwd(x)
    np.testing.assert_allclose(
        ck.softmax_rows_bwd(ys, g), numpy_kernels.softmax_rows_bwd(ys, g), rtol=1e-12, atol=1e-15
    )

    a = rng.uniform(0, 1, size=(9, 3))
    xb = rng.uniform(-1, 1, size=(9, 5))
    gb = rng.uniform(-1, 1, size=(9, 5))
    ga = rng.uniform(-1, 1, size=(9, 3))
    np.testing.assert_allclose(
        ck.block_matmul_fwd(a, xb, 3), numpy_kernels.block_matmul_fwd(a, xb, 3), rtol=1e-12
    )
    np.testing.assert_allclose(
        ck.block_matmul_bwd_a(gb, xb, 3), numpy_kernels.block_matmul_bwd_a(gb, xb, 3), rtol=1e-12
    )
    np.testing.assert_allclose(
        ck.block_matmul_bwd_x(a, gb, 3), numpy_kernels.block_matmul_bwd_x(a, gb, 3), rtol=1e-12
    )
    o1, d1 = ck.norm_adjacency_fwd(a, 3)
    o2, d2 = numpy_kernels.norm_adjacency_fwd(a, 3)
    np.testing.assert_allclose(o1, o2, rtol=1e-12)
    np.testing.assert_allclose(d1, d2, rtol=1e-12)
    np.testing.assert_allclose(
        ck.norm_adjacency_bwd(a, d1, ga, 3),
        numpy_kernels.norm_adjacency_bwd(a, d2, ga, 3),
        rtol=1e-12,
    )
    idx = rng.integers(0, 9, size=14).astype(np.int64)
    gg = rng.uniform(-1, 1, size=(14, 6))
    np.testing.assert_allclose(
        ck.gather_rows_fwd(x, idx), numpy_kernels.gather_rows_fwd(x, idx), rtol=0
    )
    np.testing.assert_allclose(
        ck.gather_rows_bwd(gg, idx, 9), numpy_kernels.gather_rows_bwd(gg, idx, 9), rtol=1e-13
    )
    np.testing.assert_allclose(
        ck.block_mean_fwd(x, 3), numpy_kernels.block_mean_fwd(x, 3), rtol=1e-13
    )
    gm = rng.uniform(-1, 1, size=(3, 1))
    np.testing.assert_allclose(
        ck.block_mean_bwd(gm, 3, 9, 6), numpy_kernels.block_mean_bwd(gm, 3, 9, 6), rtol=1e-13
    )
