import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnlut import gradcheck, ops
from attnlut.tensor import NonFiniteError, ShapeError, Tape, Tensor


def conv2d_loops(x, w, b, stride, padding):
    c_out, c_in, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h_out = (x.shape[1] + 2 * padding - kh) // stride + 1
    w_out = (x.shape[2] + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = b[o]
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            acc += w[o, c, u, v] * xp[c, i * stride + u, j * stride + v]
                out[o, i, j] = acc
    return out


def matmul_loops(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


@pytest.mark.parametrize("stride,padding,size", [(1, 0, 5), (2, 1, 7), (2, 1, 8), (3, 2, 6)])
def test_conv2d_matches_loops(rng, stride, padding, size):
    x = rng.normal(size=(3, size, size + 1))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding).data
    np.testing.assert_allclose(got, conv2d_loops(x, w, b, stride, padding), rtol=0, atol=1e-12)


def test_conv2d_output_size_for_backbone_layer(rng):
    x = Tensor(rng.normal(size=(3, 256, 256)))
    out = ops.conv2d(x, Tensor(rng.normal(size=(16, 3, 3, 3))), Tensor(np.zeros(16)), stride=2, padding=1)
    assert out.shape == (16, 128, 128)


def test_conv2d_shape_errors(rng):
    x = Tensor(rng.normal(size=(2, 5, 5)))
    with pytest.raises(ShapeError):
        ops.conv2d(x, Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)))
    with pytest.raises(ShapeError):
        ops.conv2d(x, Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros(2)))
    with pytest.raises(ValueError):
        ops.conv2d(x, Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros(1)), stride=0)


def test_matmul_matches_loops(rng):
    a, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 3))
    np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, matmul_loops(a, b), atol=1e-12)
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(a), Tensor(a))


def test_linear_is_affine_over_last_axis(rng):
    x, w, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(5, 4)), rng.normal(size=5)
    got = ops.linear(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, np.einsum("abk,ok->abo", x, w) + b, atol=1e-12)


def test_elementwise_ops_refuse_broadcasting():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    s = ops.softmax_rows(Tensor(x)).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), st.floats(-100, 100))
def test_softmax_rows_shift_invariant(x, shift):
    a = ops.softmax_rows(Tensor(x)).data
    b = ops.softmax_rows(Tensor(x + shift)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_softmax_large_inputs_stay_finite():
    s = ops.softmax_rows(Tensor(np.array([[1000.0, 0.0], [-1000.0, -1000.0]]))).data
    np.testing.assert_allclose(s, [[1.0, 0.0], [0.5, 0.5]])


def test_softmax_rejects_nan():
    with pytest.raises(NonFiniteError):
        ops.softmax_rows(Tensor(np.array([[np.nan, 1.0]])))


@given(arrays(np.float64, 7, elements=st.floats(-10, 10)))
def test_leaky_relu_is_max_of_x_and_slope_x(x):
    np.testing.assert_array_equal(ops.leaky_relu(Tensor(x), 0.2).data, np.maximum(x, 0.2 * x))


def test_leaky_relu_subgradient_at_zero_is_slope():
    x = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.leaky_relu(x, 0.2))
    np.testing.assert_array_equal(tape.backward(loss)[x], [0.2, 0.2, 0.2])


def test_axis_diff_matches_numpy(rng):
    x = rng.normal(size=(3, 4, 5))
    for axis in range(3):
        np.testing.assert_array_equal(ops.axis_diff(Tensor(x), axis).data, np.diff(x, axis=axis))


def test_global_avg_pool(rng):
    x = rng.normal(size=(4, 3, 5))
    np.testing.assert_allclose(ops.global_avg_pool(Tensor(x)).data, x.mean(axis=(1, 2)))


def test_getitem_rejects_advanced_indexing():
    with pytest.raises(TypeError):
        ops.getitem(Tensor(np.ones(4)), [0, 1])


def test_concat_and_tile_shapes():
    a, b = Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 1)))
    assert ops.concat([a, b]).shape == (2, 4)
    assert ops.tile_rows(Tensor(np.arange(3.0)), 5).shape == (5, 3)
    with pytest.raises(ShapeError):
        ops.concat([a, Tensor(np.ones((3, 1)))])


@pytest.mark.parametrize("name", [case[0] for case in gradcheck.op_cases(np.random.default_rng(0))])
def test_every_op_passes_finite_differences(name):
    rng = np.random.default_rng(7)
    cases = {c[0]: c for c in gradcheck.op_cases(rng)}
    _, fn, inputs = cases[name]
    result = gradcheck.check_function(name, fn, inputs, rng)
    assert result.error < 1e-5, result


def test_corrupted_conv_backward_is_caught(monkeypatch):
    real = ops._conv2d_backward

    def broken(*args):
        gx, gw, gb = real(*args)
        return gx, gw * 1.01, gb

    monkeypatch.setattr(ops, "_conv2d_backward", broken)
    report = gradcheck.run_gradcheck(0, end_to_end=False)
    assert not report.passed
    assert "conv2d" in report.failures
    assert all(name.startswith("conv2d") for name in report.failures)
