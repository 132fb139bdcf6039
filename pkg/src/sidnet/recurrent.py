"""Two-layer LSTM whose feature is the top layer's final cell state.

Gate blocks are laid out (input i, forget f, candidate g, output o) along
the 4H axis of every weight and bias. No peepholes, no dropout.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError, ShapeError
from .nn import Module, xavier_uniform


@dataclass
class LSTMState:
    h: Tensor
    c: Tensor


class LSTMLayer(Module):
    def __init__(self, input_size, hidden_size, rng):
        H = hidden_size
        self.hidden_size = H
        self.w_input = Tensor(xavier_uniform(rng, (input_size, 4 * H), input_size, 4 * H),
                              requires_grad=True)
        self.w_recurrent = Tensor(xavier_uniform(rng, (H, 4 * H), H, 4 * H), requires_grad=True)
        self.bias = Tensor(np.zeros(4 * H, np.float32), requires_grad=True)


def lstm_cell_step(x_t, prev: LSTMState, params: LSTMLayer) -> LSTMState:
    """One LSTM step built from elementary differentiable ops."""
    H = params.hidden_size
    if x_t.shape[-1] != params.w_input.shape[0] or prev.h.shape[-1] != H:
        raise ShapeError(f"step input {x_t.shape} / state {prev.h.shape} vs layer "
                         f"{params.w_input.shape[0]}->{H}")
    z = ad.add(ad.matmul_dense(x_t, params.w_input, params.bias),
               ad.matmul(prev.h, params.w_recurrent))
    zi, zf, zg, zo = ad.split(z, [H, H, H, H], axis=1)
    i, f, o = ad.sigmoid(zi), ad.sigmoid(zf), ad.sigmoid(zo)
    g = ad.tanh(zg)
    c = ad.add(ad.mul(f, prev.c), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return LSTMState(h=h, c=c)


def lstm_layer(x, params: LSTMLayer, lengths, output="sequence"):
    """Run one layer over ``x`` [B, T, I] as a single graph node.

    Row b stops updating after ``lengths[b]`` steps, so its state equals the
    state of the unpadded sequence. ``output`` selects the hidden sequence
    [B, T, H] or the final cell state [B, H].
    """
    xd = x.data
    B, T, I = xd.shape
    H = params.hidden_size
    wx, wh, bias = params.w_input.data, params.w_recurrent.data, params.bias.data
    if I != wx.shape[0]:
        raise ShapeError(f"LSTM layer expects input size {wx.shape[0]}, got {I}")
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (B,) or lengths.min() < 1 or lengths.max() > T:
        raise InputError(f"lengths must lie in [1, {T}] for each of {B} rows")
    steps = int(lengths.max())
    dtype = xd.dtype
    # rows sorted by length (longest first) so the rows still running at step
    # t are the prefix [:live[t]]; finished rows are never touched again
    perm = np.argsort(-lengths, kind="stable")
    inv = np.argsort(perm)
    live = (lengths[None, :] > np.arange(steps)[:, None]).sum(axis=1)
    xs = xd[perm, :steps]
    xz = (xs.reshape(B * steps, I) @ wx + bias).reshape(B, steps, 4 * H)

    h = np.zeros((B, H), dtype)
    c = np.zeros((B, H), dtype)
    gates = np.zeros((steps, B, 4 * H), dtype)
    h_prev = np.zeros((steps, B, H), dtype)
    c_prev = np.zeros((steps, B, H), dtype)
    tanh_c = np.zeros((steps, B, H), dtype)
    ones = np.ones(B, np.uint8)
    hs = np.zeros((B, T, H), dtype) if output == "sequence" else None
    for t in range(steps):
        k = live[t]
        z = xz[:k, t] + h[:k] @ wh
        h_prev[t, :k], c_prev[t, :k] = h[:k], c[:k]
        c[:k], h[:k], tanh_c[t, :k] = _kernels.lstm_gates_forward(z, c[:k], h[:k], ones[:k])
        gates[t, :k] = z
        if hs is not None:
            hs[:, t] = h
    out = hs[inv] if output == "sequence" else c[inv]

    def back(g):
        g = g[perm]
        dh = np.zeros((B, H), dtype)
        dc = np.zeros((B, H), dtype) if output == "sequence" else np.ascontiguousarray(g)
        dz_all = np.zeros((steps, B, 4 * H), dtype)
        for t in reversed(range(steps)):
            if output == "sequence":
                dh += g[:, t]
            k = live[t]
            dz, dc[:k], _ = _kernels.lstm_gates_backward(
                gates[t, :k], c_prev[t, :k], tanh_c[t, :k], dh[:k], dc[:k], ones[:k])
            dz_all[t, :k] = dz
            dh[:k] = dz @ wh.T
        dz_flat = dz_all.transpose(1, 0, 2).reshape(B * steps, 4 * H)
        gwh = h_prev.reshape(steps * B, H).T @ dz_all.reshape(steps * B, 4 * H)
        gwx = xs.reshape(B * steps, I).T @ dz_flat
        gb = dz_flat.sum(axis=0)
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(xd)
            gx[:, :steps] = (dz_flat @ wx.T).reshape(B, steps, I)[inv]
        return gx, gwx, gwh, gb
    return Tensor._from_op(out, (x, params.w_input, params.w_recurrent, params.bias), back)


class LSTM(Module):
    """Stacked LSTM; calling it returns the top layer's cell state at each
    row's true length."""

    def __init__(self, input_size, hidden_size, rng, num_layers=2):
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        for k in range(num_layers):
            setattr(self, f"layer{k + 1}",
                    LSTMLayer(input_size if k == 0 else hidden_size, hidden_size, rng))

    def layers(self):
        return [getattr(self, f"layer{k + 1}") for k in range(self.num_layers)]

    def __call__(self, seq, lengths):
        x = seq
        layers = self.layers()
        for layer in layers[:-1]:
            x = lstm_layer(x, layer, lengths, output="sequence")
        return lstm_layer(x, layers[-1], lengths, output="last_cell")


def lstm_sequence_last_state(seq, lstm: LSTM, true_length):
    """Feature [1, H] of a single sequence ``seq`` [T, I] (or [B, H] for a batch).

    Steps beyond ``true_length`` are padding and never affect the result.
    """
    if seq.ndim == 2:
        seq = ad.reshape(seq, (1,) + seq.shape)
    lengths = np.atleast_1d(np.asarray(true_length, dtype=np.int64))
    if lengths.min() < 1:
        raise InputError("true_length must be at least 1")
    if lengths.size == 1 and seq.shape[0] > 1:
        lengths = np.full(seq.shape[0], lengths[0])
    return lstm(seq, lengths)
