"""Differentiable kernels.

Layout conventions: image-like maps are NHWC ``[B, H, W, C]``. Online
signals use ``[B, N, 1, C]`` (length along H), which makes a Qx1 filter a
plain 2-D filter. Convolution is cross-correlation (no kernel flip).
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .. import _kernels
from ..errors import InputError, ShapeError
from .tensor import Tensor

# Piecewise ops report their active pattern here while a grad check is
# running, so finite differences that straddle a kink can be detected.
_kink_log = None


def _log_kink(pattern):
    if _kink_log is not None:
        _kink_log.append(np.asarray(pattern).tobytes())


def _t(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _reduce_to(grad, shape):
    """Sum a broadcast gradient back down to ``shape`` (trailing-dim rule)."""
    if grad.shape == tuple(shape):
        return grad
    lead = grad.ndim - len(shape)
    g = grad.sum(axis=tuple(range(lead))) if lead > 0 else grad
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a_shape, b_shape):
    if a_shape == b_shape:
        return
    if len(b_shape) <= len(a_shape):
        tail = a_shape[len(a_shape) - len(b_shape):]
        if all(nb == na or nb == 1 for na, nb in zip(tail, b_shape)):
            return
    raise ShapeError(f"cannot broadcast {b_shape} onto {a_shape}")


# ---------------------------------------------------------------- elementwise

def elementwise_binary(a, b, op):
    """``a op b`` for op in {"add", "mul", "sub"}.

    ``b`` must match ``a`` or be broadcastable onto it by the trailing-dim
    rule (b's shape equals a trailing slice of a's shape, size-1 dims
    expand). Scalars broadcast freely.
    """
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = _t(a, like=b)
    a = _t(a)
    b = _t(b, like=a)
    if a.data.ndim == 0 and b.data.ndim > 0:
        # scalar on the left: broadcast it onto b instead
        _check_broadcast(b.shape, a.shape)
    elif b.data.ndim > 0:
        _check_broadcast(a.shape, b.shape)
    ad, bd = a.data, b.data
    if op == "add":
        out = ad + bd

        def back(g):
            return _reduce_to(g, ad.shape), _reduce_to(g, bd.shape)
    elif op == "sub":
        out = ad - bd

        def back(g):
            return _reduce_to(g, ad.shape), _reduce_to(-g, bd.shape)
    elif op == "mul":
        out = ad * bd

        def back(g):
            ga = _reduce_to(g * bd, ad.shape) if a.requires_grad else None
            gb = _reduce_to(g * ad, bd.shape) if b.requires_grad else None
            return ga, gb
    else:
        raise InputError(f"unknown elementwise op {op!r}")
    return Tensor._from_op(out, (a, b), back)


def add(a, b):
    return elementwise_binary(a, b, "add")


def sub(a, b):
    return elementwise_binary(a, b, "sub")


def mul(a, b):
    return elementwise_binary(a, b, "mul")


def sum_all(x):
    shape = x.shape

    def back(g):
        return (np.broadcast_to(g, shape).copy(),)
    return Tensor._from_op(np.asarray(x.data.sum()), (x,), back)


def reshape(x, shape):
    old = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        return g @ b.data.T, a.data.T @ g
    return Tensor._from_op(a.data @ b.data, (a, b), back)


def matmul_dense(x, weight, bias=None):
    """``x @ weight + bias`` for x [B, I], weight [I, O], bias [O]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} for {weight.shape[1]} outputs")
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data

    def back(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g
        gb = g.sum(axis=0) if bias is not None else None
        return gx, gw, gb
    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, back)


def activation(x, kind):
    xd = x.data
    if kind == "relu":
        mask = xd > 0
        _log_kink(mask)
        out = np.where(mask, xd, 0).astype(xd.dtype, copy=False)

        def back(g):
            return (g * mask,)
    elif kind == "sigmoid":
        out = expit(xd)

        def back(g):
            return (g * out * (1 - out),)
    elif kind == "tanh":
        out = np.tanh(xd)

        def back(g):
            return (g * (1 - out * out),)
    else:
        raise InputError(f"unknown activation {kind!r}")
    return Tensor._from_op(out, (x,), back)


def relu(x):
    return activation(x, "relu")


def sigmoid(x):
    return activation(x, "sigmoid")


def tanh(x):
    return activation(x, "tanh")


# ------------------------------------------------------------- concat / split

def concat(parts: Sequence[Tensor], axis=-1):
    parts = [_t(p) for p in parts]
    nd = parts[0].ndim
    ax = axis % nd
    for p in parts[1:]:
        if p.ndim != nd or any(p.shape[i] != parts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: {p.shape} incompatible with {parts[0].shape} on axis {axis}")
    sizes = [p.shape[ax] for p in parts]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([p.data for p in parts], axis=ax)

    def back(g):
        index = [slice(None)] * nd
        grads = []
        for lo, hi in zip(offsets[:-1], offsets[1:]):
            index[ax] = slice(lo, hi)
            grads.append(g[tuple(index)])
        return tuple(grads)
    return Tensor._from_op(out, parts, back)


def split(x, sizes, axis=-1):
    """Inverse of :func:`concat`: slice ``x`` at cumulative ``sizes``."""
    ax = axis % x.ndim
    if sum(sizes) != x.shape[ax]:
        raise ShapeError(f"split sizes {sizes} do not sum to {x.shape[ax]}")
    out, lo = [], 0
    for n in sizes:
        index = [slice(None)] * x.ndim
        index[ax] = slice(lo, lo + n)
        out.append(_slice(x, tuple(index)))
        lo += n
    return out


def _slice(x, index):
    shape, dtype = x.shape, x.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)
    return Tensor._from_op(x.data[index].copy(), (x,), back)


# ----------------------------------------------------------------- convolution

@dataclass
class ConvSpec:
    """Filter bank: ``weights`` [num_filters, kh, kw, in_channels], ``bias``
    [num_filters] or None.

    ``padding_mode`` is "same", "valid" or a per-axis pair of those. Even
    kernels under "same" pad on the bottom/right only.
    """

    weights: Tensor
    bias: Optional[Tensor]
    padding_mode: object = "same"

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-D, got {self.weights.shape}")
        if self.bias is not None and self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"conv bias {self.bias.shape} vs {self.weights.shape[0]} filters")
        modes = self.padding_modes
        if any(m not in ("same", "valid") for m in modes):
            raise InputError(f"padding_mode {self.padding_mode!r}")

    @property
    def num_filters(self):
        return self.weights.shape[0]

    @property
    def kernel_height(self):
        return self.weights.shape[1]

    @property
    def kernel_width(self):
        return self.weights.shape[2]

    @property
    def in_channels(self):
        return self.weights.shape[3]

    @property
    def padding_modes(self):
        if isinstance(self.padding_mode, str):
            return (self.padding_mode, self.padding_mode)
        return tuple(self.padding_mode)


def _pads(k, mode):
    if mode == "valid":
        return 0, 0
    before = (k - 1) // 2
    return before, k - 1 - before


def conv2d(img, spec: ConvSpec):
    """Stride-1 cross-correlation of NHWC ``img`` with ``spec``."""
    x = img.data
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [B,H,W,C], got {x.shape}")
    M, kh, kw, P = spec.weights.shape
    if x.shape[3] != P:
        raise ShapeError(f"conv2d: {x.shape[3]} input channels, filter wants {P}")
    mh, mw = spec.padding_modes
    pt, pb = _pads(kh, mh)
    pl, pr = _pads(kw, mw)
    B, H, W, _ = x.shape
    Ho, Wo = H + pt + pb - kh + 1, W + pl + pr - kw + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {H}x{W}")
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    # windows come out as [B, Ho, Wo, P, kh, kw]; reorder to (kh, kw, P)
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = cols.reshape(B * Ho * Wo, kh * kw * P)
    wmat = spec.weights.data.reshape(M, kh * kw * P)
    out = cols @ wmat.T
    if spec.bias is not None:
        out += spec.bias.data
    out = out.reshape(B, Ho, Wo, M)

    def back(g):
        g2 = g.reshape(B * Ho * Wo, M)
        gw = (g2.T @ cols).reshape(M, kh, kw, P)
        gx = None
        if img.requires_grad:
            dcols = (g2 @ wmat).reshape(B, Ho, Wo, kh, kw, P)
            gxp = np.zeros(xp.shape, dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + Ho, j:j + Wo, :] += dcols[:, :, :, i, j, :]
            gx = gxp[:, pt:pt + H, pl:pl + W, :]
        if spec.bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)
    parents = (img, spec.weights) if spec.bias is None else (img, spec.weights, spec.bias)
    return Tensor._from_op(out, parents, back)


def conv1d(d, spec: ConvSpec):
    """1-D convolution along the length axis of an online signal ``[B, N, 1, P]``
    (or ``[N, 1, P]``) with a Qx1 filter and "same" padding."""
    if spec.kernel_width != 1:
        raise ShapeError("conv1d needs a Qx1 filter")
    if spec.padding_modes[0] != "same":
        raise InputError("conv1d uses same padding")
    if d.ndim == 3:
        out = conv2d(reshape(d, (1,) + d.shape), spec)
        return reshape(out, out.shape[1:])
    return conv2d(d, spec)


# --------------------------------------------------------------------- pooling

def maxpool(x, window):
    """Non-overlapping max pooling with stride = window over NHWC.

    Odd extents are padded with the dtype's lowest value so padding never
    wins; the output size is ceil(extent / window).
    """
    ph, pw = window
    xd = x.data
    B, H, W, C = xd.shape
    eh, ew = (-H) % ph, (-W) % pw
    if eh or ew:
        low = np.finfo(xd.dtype).min
        xd = np.pad(xd, ((0, 0), (0, eh), (0, ew), (0, 0)), constant_values=low)
    xd = np.ascontiguousarray(xd)
    out, idx = _kernels.maxpool_forward(xd, ph, pw)
    _log_kink(idx)
    Hp, Wp = H + eh, W + ew

    def back(g):
        gx = _kernels.maxpool_backward(np.ascontiguousarray(g), idx, Hp, Wp)
        return (gx[:, :H, :W, :],)
    return Tensor._from_op(out, (x,), back)


def global_maxpool(x, mask=None):
    """Per-channel max over every spatial position of ``[B, H, W, C]``.

    ``mask`` [B, H, W] marks valid positions for padded batches. Gradient
    goes to the first argmax in row-major scan order.
    """
    xd = x.data
    B, H, W, C = xd.shape
    if H * W == 0:
        raise ShapeError("global_maxpool over an empty map")
    flat = xd.reshape(B, H * W, C)
    if mask is not None:
        m = np.asarray(mask, dtype=bool).reshape(B, H * W, 1)
        if not m.any(axis=1).all():
            raise InputError("global_maxpool mask leaves a sample empty")
        flat = np.where(m, flat, np.finfo(xd.dtype).min)
    idx = flat.argmax(axis=1)
    _log_kink(idx)
    out = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]

    def back(g):
        gx = np.zeros((B, H * W, C), dtype=xd.dtype)
        np.put_along_axis(gx, idx[:, None, :], g[:, None, :], axis=1)
        return (gx.reshape(B, H, W, C),)
    return Tensor._from_op(out, (x,), back)


def broadcast_concat_global(x, g):
    """Append the global vector ``g`` [B, C] to every position of ``x`` [B, H, W, C]."""
    if g.ndim != 2 or g.shape[0] != x.shape[0] or g.shape[1] != x.shape[3]:
        raise ShapeError(f"global vector {g.shape} does not match map {x.shape}")
    B, H, W, C = x.shape
    tiled = np.broadcast_to(g.data[:, None, None, :], (B, H, W, C))
    out = np.concatenate([x.data, tiled], axis=3)

    def back(grad):
        return grad[..., :C], grad[..., C:].sum(axis=(1, 2))
    return Tensor._from_op(out, (x, g), back)


def map_to_sequence(fmap):
    """``[B, H, W, C]`` -> ``[B, W, H*C]``: column i becomes step i, rows stacked
    top to bottom with channels contiguous inside each row."""
    B, H, W, C = fmap.shape
    out = np.ascontiguousarray(fmap.data.transpose(0, 2, 1, 3)).reshape(B, W, H * C)

    def back(g):
        return (g.reshape(B, W, H, C).transpose(0, 2, 1, 3),)
    return Tensor._from_op(out, (fmap,), back)


# --------------------------------------------------------------- normalization

class BatchNormState:
    """Learnable scale/shift plus running statistics for one channel axis."""

    def __init__(self, channels, dtype=np.float32, momentum=0.9, eps=1e-5):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm(x, state: BatchNormState, mode="train"):
    """Channels-last batch norm; statistics over every axis except the last."""
    xd = x.data
    C = xd.shape[-1]
    if state.gamma.shape != (C,):
        raise ShapeError(f"batchnorm for {state.gamma.shape[0]} channels got {C}")
    axes = tuple(range(xd.ndim - 1))
    gamma, beta = state.gamma.data, state.beta.data
    if mode == "train":
        n = xd.size // C
        mean = xd.mean(axis=axes)
        centered = xd - mean
        var = (centered * centered).mean(axis=axes)
        m = state.momentum
        unbiased = var * (n / (n - 1)) if n > 1 else var
        state.running_mean[...] = m * state.running_mean + (1 - m) * mean
        state.running_var[...] = m * state.running_var + (1 - m) * unbiased
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = centered * inv_std
        out = gamma * xhat + beta

        def back(g):
            gb = g.sum(axis=axes)
            gg = (g * xhat).sum(axis=axes)
            gxhat = g * gamma
            gx = inv_std / n * (n * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
            return gx.astype(xd.dtype, copy=False), gg, gb
    elif mode == "infer":
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (xd - state.running_mean) * inv_std
        out = gamma * xhat + beta

        def back(g):
            return g * gamma * inv_std, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        raise InputError(f"batchnorm mode {mode!r}")
    return Tensor._from_op(out.astype(xd.dtype, copy=False), (x, state.gamma, state.beta), back)


# ------------------------------------------------------------------------ loss

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"logits must be [B, C], got {z.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B, C = z.shape
    if labels.shape[0] != B:
        raise ShapeError(f"{labels.shape[0]} labels for {B} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise InputError(f"labels must lie in [0, {C})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(B)
    loss = (lse - shifted[rows, labels]).mean()

    def back(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, labels] -= 1
        return (p * (g / B),)
    return Tensor._from_op(np.asarray(loss, dtype=z.dtype), (logits,), back)
