import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sidnet import autodiff as ad
from sidnet.autodiff import BatchNormState, ConvSpec, Tensor, backward, grad_check
from sidnet.errors import InputError, ShapeError


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


# ---------------------------------------------------------------- oracles

def naive_matmul(x, w):
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for j in range(w.shape[1]):
            for k in range(x.shape[1]):
                out[i, j] += x[i, k] * w[k, j]
    return out


def naive_conv(x, w, b, pad):
    """Loop cross-correlation; x [H,W,P], w [M,kh,kw,P], pad ((t,b),(l,r))."""
    xp = np.pad(x, (pad[0], pad[1], (0, 0)))
    M, kh, kw, _ = w.shape
    Ho, Wo = xp.shape[0] - kh + 1, xp.shape[1] - kw + 1
    out = np.zeros((Ho, Wo, M))
    for m in range(M):
        for i in range(Ho):
            for j in range(Wo):
                s = b[m]
                for u in range(kh):
                    for v in range(kw):
                        for p in range(x.shape[2]):
                            s += xp[i + u, j + v, p] * w[m, u, v, p]
                out[i, j, m] = s
    return out


# ---------------------------------------------------------------- elementwise

def test_add_example():
    np.testing.assert_array_equal(ad.add(T([1, 2]), T([3, 4])).data, [4, 6])


def test_mul_identity_and_mask():
    x = T([[0.5, -2.0], [3.0, 1.5]])
    np.testing.assert_array_equal(ad.mul(x, T(np.ones((2, 2)))).data, x.data)
    np.testing.assert_array_equal(ad.mul(T([0.3, 0.8]), T([1, 0])).data, [0.3, 0])


def test_broadcast_trailing_rule():
    a = T(np.ones((2, 3)), grad=True)
    b = T([1.0, 2.0, 3.0], grad=True)
    backward(ad.sum_all(ad.mul(a, b)))
    np.testing.assert_array_equal(b.grad, [2, 2, 2])
    with pytest.raises(ShapeError):
        ad.add(T(np.ones((2, 3))), T(np.ones(2)))


# ---------------------------------------------------------------- dense

def test_dense_examples():
    x = T([[1, 2]])
    np.testing.assert_array_equal(ad.matmul_dense(x, T(np.eye(2)), T([0, 0])).data, [[1, 2]])
    out = ad.matmul_dense(x, T([[1, 0], [0, 0]]), T([0, 1]))
    np.testing.assert_array_equal(out.data, [[1, 1]])


def test_dense_matches_loop_oracle():
    rng = np.random.default_rng(0)
    x, w = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(ad.matmul_dense(T(x), T(w)).data, naive_matmul(x, w), rtol=0, atol=1e-14)


def test_dense_gradients_formula():
    rng = np.random.default_rng(1)
    x, w, b = T(rng.normal(size=(3, 4)), True), T(rng.normal(size=(4, 2)), True), T(rng.normal(size=2), True)
    g = rng.normal(size=(3, 2))
    backward(ad.sum_all(ad.mul(ad.matmul_dense(x, w, b), T(g))))
    np.testing.assert_allclose(w.grad, x.data.T @ g)
    np.testing.assert_allclose(x.grad, g @ w.data.T)
    np.testing.assert_allclose(b.grad, g.sum(0))


def test_dense_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul_dense(T(np.ones((1, 3))), T(np.ones((2, 2))))


# ---------------------------------------------------------------- activations

def test_activation_examples():
    assert ad.sigmoid(T([0.0])).data[0] == 0.5
    np.testing.assert_array_equal(ad.relu(T([-1, 0, 2])).data, [0, 0, 2])
    x = T([0.0], grad=True)
    backward(ad.sum_all(ad.tanh(x)))
    assert x.grad[0] == 1.0


def test_sigmoid_is_stable_for_large_inputs():
    out = ad.sigmoid(T([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(out)) and out[0] == 0.0 and out[1] == 1.0


def test_unknown_activation():
    with pytest.raises(InputError):
        ad.activation(T([1.0]), "gelu")


# ---------------------------------------------------------------- convolution

def _conv1d(signal, kernel):
    d = T(np.asarray(signal, float).reshape(-1, 1, 1))
    w = T(np.asarray(kernel, float).reshape(1, -1, 1, 1))
    return ad.conv1d(d, ConvSpec(w, T([0.0]), "same")).data.ravel()


def test_conv1d_examples():
    np.testing.assert_array_equal(_conv1d([1, 2, 3], [1]), [1, 2, 3])
    # cross-correlation with zero padding 1 on both sides
    np.testing.assert_array_equal(_conv1d([1, 2, 3, 4], [1, 0, -1]), [-2, -2, -2, 3])
    np.testing.assert_array_equal(_conv1d([5, -1, 2], [0, 0, 0, 0, 0]), [0, 0, 0])


def test_conv1d_channel_mismatch():
    d = T(np.ones((4, 1, 2)))
    with pytest.raises(ShapeError):
        ad.conv1d(d, ConvSpec(T(np.ones((1, 3, 1, 3))), None, "same"))


def test_conv2d_delta_kernel_is_identity():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 5, 4, 1))
    w = np.zeros((1, 3, 3, 1))
    w[0, 1, 1, 0] = 1
    out = ad.conv2d(T(x), ConvSpec(T(w), T([0.0]), "same")).data
    np.testing.assert_array_equal(out, x)


def test_conv2d_valid_example():
    x = T(np.array([[1, 2], [3, 4]], float).reshape(1, 2, 2, 1))
    out = ad.conv2d(x, ConvSpec(T(np.ones((1, 2, 2, 1))), T([0.0]), "valid"))
    np.testing.assert_array_equal(out.data.ravel(), [10])


@pytest.mark.parametrize("mode", ["same", "valid"])
def test_conv2d_matches_loop_oracle(mode):
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(5, 6, 2)), rng.normal(size=(3, 3, 3, 2)), rng.normal(size=3)
    pad = ((1, 1), (1, 1)) if mode == "same" else ((0, 0), (0, 0))
    out = ad.conv2d(T(x[None]), ConvSpec(T(w), T(b), mode)).data[0]
    np.testing.assert_allclose(out, naive_conv(x, w, b, pad), atol=1e-12)


def test_conv2d_even_kernel_pads_bottom_right():
    rng = np.random.default_rng(4)
    x, w = rng.normal(size=(4, 5, 1)), rng.normal(size=(2, 2, 2, 1))
    out = ad.conv2d(T(x[None]), ConvSpec(T(w), None, "same")).data[0]
    assert out.shape == (4, 5, 2)
    np.testing.assert_allclose(out, naive_conv(x, w, np.zeros(2), ((0, 1), (0, 1))), atol=1e-12)


def test_conv2d_kernel_larger_than_input():
    with pytest.raises(ShapeError):
        ad.conv2d(T(np.ones((1, 2, 2, 1))), ConvSpec(T(np.ones((1, 3, 3, 1))), None, "valid"))


# ---------------------------------------------------------------- pooling

def test_maxpool_examples():
    x = T(np.array([[1, 2], [3, 4]], float).reshape(1, 2, 2, 1), grad=True)
    out = ad.maxpool(x, (2, 2))
    assert out.data.ravel().tolist() == [4]
    backward(ad.sum_all(out))
    np.testing.assert_array_equal(x.grad.reshape(2, 2), [[0, 0], [0, 1]])
    seq = T(np.array([1, 3, 2, 5], float).reshape(1, 4, 1, 1))
    assert ad.maxpool(seq, (2, 1)).data.ravel().tolist() == [3, 5]


def test_maxpool_tie_goes_to_first():
    x = T(np.full((1, 2, 2, 1), 7.0), grad=True)
    backward(ad.sum_all(ad.maxpool(x, (2, 2))))
    np.testing.assert_array_equal(x.grad.reshape(2, 2), [[1, 0], [0, 0]])


def test_maxpool_odd_extent_padding_never_wins():
    x = T(-np.arange(1, 6, dtype=float).reshape(1, 5, 1, 1))
    out = ad.maxpool(x, (2, 1)).data.ravel()
    np.testing.assert_array_equal(out, [-1, -3, -5])


def test_global_maxpool_examples():
    x = T(np.array([1, 5, 3], float).reshape(1, 3, 1, 1))
    assert ad.global_maxpool(x).data.ravel().tolist() == [5]
    c = T(np.full((1, 2, 3, 2), 4.5))
    np.testing.assert_array_equal(ad.global_maxpool(c).data, [[4.5, 4.5]])


def test_global_maxpool_scan_oracle():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 4, 4, 8))
    expect = [max(x[0, i, j, c] for i in range(4) for j in range(4)) for c in range(8)]
    np.testing.assert_array_equal(ad.global_maxpool(T(x)).data[0], expect)


def test_global_maxpool_mask():
    x = T(np.array([1.0, 9.0, 2.0]).reshape(1, 1, 3, 1))
    out = ad.global_maxpool(x, mask=np.array([[[True, False, True]]]))
    assert out.data.item() == 2.0


def test_broadcast_concat_examples():
    x = T(np.array([1.0, 2.0]).reshape(1, 2, 1, 1))
    g = T([[9.0]], grad=True)
    out = ad.broadcast_concat_global(x, g)
    np.testing.assert_array_equal(out.data.reshape(2, 2), [[1, 9], [2, 9]])
    zero = ad.broadcast_concat_global(x, T([[0.0]]))
    assert np.all(zero.data[..., 1:] == 0)
    backward(ad.sum_all(out))
    assert g.grad.item() == 2.0  # accumulates over both positions
    with pytest.raises(ShapeError):
        ad.broadcast_concat_global(x, T([[1.0, 2.0]]))


# ---------------------------------------------------------------- batchnorm

def test_batchnorm_constant_input():
    st_ = BatchNormState(2, dtype=np.float64)
    out = ad.batchnorm(T(np.full((3, 2, 2, 2), 5.0)), st_, "train")
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(6)
    st_ = BatchNormState(3, dtype=np.float64)
    out = ad.batchnorm(T(rng.normal(2, 3, size=(8, 4, 4, 3))), st_, "train").data
    np.testing.assert_allclose(out.mean(axis=(0, 1, 2)), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 1, 2)), 1, atol=1e-4)


def test_batchnorm_gamma_zero_gives_beta():
    st_ = BatchNormState(2, dtype=np.float64)
    st_.gamma.data[:] = 0
    st_.beta.data[:] = [0.5, -1.5]
    out = ad.batchnorm(T(np.random.default_rng(7).normal(size=(2, 3, 3, 2))), st_, "train")
    np.testing.assert_array_equal(out.data[..., 0], 0.5)
    np.testing.assert_array_equal(out.data[..., 1], -1.5)


def test_batchnorm_infer_before_training_uses_init_stats():
    st_ = BatchNormState(1, dtype=np.float64)
    x = np.array([1.0, -2.0]).reshape(1, 2, 1, 1)
    out = ad.batchnorm(T(x), st_, "infer").data
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5))


def test_batchnorm_running_average():
    st_ = BatchNormState(1, dtype=np.float64)
    x = np.array([1.0, 3.0]).reshape(2, 1, 1, 1)
    ad.batchnorm(T(x), st_, "train")
    assert st_.running_mean[0] == pytest.approx(0.1 * 2.0)
    assert st_.running_var[0] == pytest.approx(0.9 + 0.1 * 2.0)  # unbiased var 2


# ---------------------------------------------------------------- concat / split

def test_concat_examples():
    np.testing.assert_array_equal(ad.concat([T([1, 2]), T([3])], axis=0).data, [1, 2, 3])
    x = T([[1.0, 2.0]])
    np.testing.assert_array_equal(ad.concat([x, T(np.zeros((1, 0)))], axis=1).data, x.data)
    k = ad.concat([T(np.ones((1, 512))), T(np.ones((1, 512)))], axis=1)
    assert k.shape == (1, 1024)
    with pytest.raises(ShapeError):
        ad.concat([T(np.ones((2, 2))), T(np.ones((3, 2)))], axis=1)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4), st.integers(0, 2 ** 31 - 1))
def test_concat_split_roundtrip(sizes, seed):
    rng = np.random.default_rng(seed)
    parts = [T(rng.normal(size=(2, n))) for n in sizes]
    back = ad.split(ad.concat(parts, axis=1), sizes, axis=1)
    for a, b in zip(parts, back):
        assert a.data.tobytes() == b.data.tobytes()


# ---------------------------------------------------------------- loss

def test_cross_entropy_examples():
    assert ad.softmax_cross_entropy(T(np.zeros((1, 7))), [3]).item() == pytest.approx(np.log(7), abs=1e-12)
    z = np.zeros((1, 7))
    z[0, 2] = 50
    assert ad.softmax_cross_entropy(T(z), [2]).item() < 1e-6


def test_cross_entropy_direct_formula():
    rng = np.random.default_rng(8)
    z, y = rng.normal(size=(2, 7)), np.array([1, 6])
    expect = np.mean([-np.log(np.exp(z[i, y[i]]) / np.exp(z[i]).sum()) for i in range(2)])
    assert abs(ad.softmax_cross_entropy(T(z), y).item() - expect) < 1e-10


def test_cross_entropy_gradient_formula():
    rng = np.random.default_rng(9)
    z, y = T(rng.normal(size=(3, 7)), True), np.array([0, 4, 6])
    backward(ad.softmax_cross_entropy(z, y))
    p = np.exp(z.data) / np.exp(z.data).sum(1, keepdims=True)
    np.testing.assert_allclose(z.grad, (p - np.eye(7)[y]) / 3, atol=1e-15)


def test_cross_entropy_label_range():
    with pytest.raises(InputError):
        ad.softmax_cross_entropy(T(np.zeros((1, 7))), [7])


@settings(max_examples=50)
@given(arrays(np.float64, (3, 7), elements=st.floats(-20, 20)), st.floats(-1e3, 1e3))
def test_cross_entropy_shift_invariance(z, c):
    y = [0, 3, 6]
    a = ad.softmax_cross_entropy(T(z), y).item()
    b = ad.softmax_cross_entropy(T(z + c), y).item()
    assert abs(a - b) <= 1e-9


# ---------------------------------------------------------------- backward

def test_backward_examples():
    x = T([1.0, 2.0], grad=True)
    backward(ad.sum_all(ad.mul(x, x)))
    np.testing.assert_array_equal(x.grad, [2, 4])

    x, unused = T([1.0, 1.0], grad=True), T([3.0], grad=True)
    backward(ad.sum_all(ad.add(x, x)))
    np.testing.assert_array_equal(x.grad, [2, 2])
    np.testing.assert_array_equal(unused.grad, [0])


def test_backward_requires_scalar():
    with pytest.raises(InputError):
        backward(ad.mul(T([1.0, 2.0], grad=True), T([1.0, 1.0])))


# ---------------------------------------------------------------- grad check

def test_gradcheck_dense_tight():
    rng = np.random.default_rng(10)
    x, W, b = T(rng.normal(size=(2, 4)), True), T(rng.normal(size=(4, 3)), True), T(rng.normal(size=3), True)
    w = T(rng.normal(size=(2, 3)))
    rep = grad_check(lambda: ad.sum_all(ad.mul(ad.matmul_dense(x, W, b), w)),
                     {"x": x, "W": W, "b": b}, tolerance=1e-6)
    assert rep.passed and set(rep.per_parameter_errors) == {"x", "W", "b"}


def test_gradcheck_conv2d_tight():
    rng = np.random.default_rng(11)
    x = T(rng.normal(size=(1, 6, 6, 1)), True)
    spec = ConvSpec(T(rng.normal(size=(2, 2, 2, 1)), True), T(rng.normal(size=2), True), "valid")
    w = T(rng.normal(size=(1, 5, 5, 2)))
    rep = grad_check(lambda: ad.sum_all(ad.mul(ad.conv2d(x, spec), w)),
                     {"x": x, "W": spec.weights, "b": spec.bias}, tolerance=1e-6)
    assert rep.passed


def test_gradcheck_detects_wrong_gradient():
    x = T([0.3, -0.7], True)
    rep = grad_check(lambda: ad.sum_all(ad.tanh(x)), {"x": x},
                     grad_hook=lambda g: {k: v * 1.01 for k, v in g.items()})
    assert not rep.passed and rep.max_relative_error > 1e-3


def test_gradcheck_reports_nonfinite_parameter():
    x = T([1.0], True)
    rep = grad_check(lambda: ad.sum_all(x), {"x": x},
                     grad_hook=lambda g: {"x": np.array([np.nan])})
    assert not rep.passed and "x" in rep.failure


@pytest.mark.parametrize("order", [2, 4])
def test_gradcheck_zero_gradient_is_exact(order):
    x, y = T([0.5], True), T([2.0], True)
    rep = grad_check(lambda: ad.sum_all(ad.mul(x, x)), {"x": x, "y": y}, order=order)
    assert rep.per_parameter_errors["y"] == 0.0


def test_gradcheck_skips_relu_kink():
    x = T([0.0, 1.0], True)
    rep = grad_check(lambda: ad.sum_all(ad.relu(x)), {"x": x})
    assert rep.skipped_kinks == 1 and rep.passed


# ---------------------------------------------------------------- invariants

@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.sampled_from([(2, 2), (2, 1)]),
       st.integers(0, 2 ** 31 - 1))
def test_maxpool_gradient_one_entry_per_window(h, w, window, seed):
    rng = np.random.default_rng(seed)
    H, W = h * window[0], w * window[1]
    x = T(rng.integers(-2, 3, size=(1, H, W, 2)).astype(float), True)
    out = ad.maxpool(x, window)
    assert out.shape == (1, h, w, 2)
    backward(ad.sum_all(out))
    g = x.grad.reshape(h, window[0], w, window[1], 2)
    assert np.all((g != 0).sum(axis=(1, 3)) == 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_same_padding_preserves_size(H, W, k, seed):
    rng = np.random.default_rng(seed)
    spec = ConvSpec(T(rng.normal(size=(2, k, k, 1))), T(np.zeros(2)), "same")
    out = ad.conv2d(T(rng.normal(size=(1, H, W, 1))), spec)
    assert out.shape == (1, H, W, 2)
    assert np.all(np.isfinite(out.data))
