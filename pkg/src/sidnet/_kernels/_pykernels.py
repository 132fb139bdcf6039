"""Pure-numpy implementations of the compiled kernels.

Same signatures and semantics as ``_ckernels``; used when the extension is
not built or when ``SIDNET_PURE_PYTHON=1``.
"""
import numpy as np
from scipy.special import expit


def maxpool_forward(x, ph, pw):
    B, H, W, C = x.shape
    Ho, Wo = H // ph, W // pw
    win = x.reshape(B, Ho, ph, Wo, pw, C).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(B, Ho, Wo, C, ph * pw)
    # argmax returns the first maximum, i.e. scan order inside the window
    k = win.argmax(axis=-1)
    out = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(k, pw)
    rows = np.arange(Ho)[None, :, None, None] * ph + di
    cols = np.arange(Wo)[None, None, :, None] * pw + dj
    chans = np.arange(C)[None, None, None, :]
    idx = (rows * W + cols) * C + chans
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool_backward(grad_out, idx, H, W):
    B, _, _, C = grad_out.shape
    gx = np.zeros((B, H * W * C), dtype=grad_out.dtype)
    flat_idx = idx.reshape(B, -1)
    # windows do not overlap, so every index appears once per sample
    np.put_along_axis(gx, flat_idx, grad_out.reshape(B, -1), axis=1)
    return gx.reshape(B, H, W, C)


def lstm_gates_forward(z, c_prev, h_prev, active):
    H = c_prev.shape[1]
    act = active.astype(bool)
    i = expit(z[:, :H])
    f = expit(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = expit(z[:, 3 * H:])
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    z[act, :H] = i[act]
    z[act, H:2 * H] = f[act]
    z[act, 2 * H:3 * H] = g[act]
    z[act, 3 * H:] = o[act]
    c = np.where(act[:, None], c_new, c_prev)
    h = np.where(act[:, None], h_new, h_prev)
    tc = np.where(act[:, None], tc, 0)
    return c, h, tc.astype(z.dtype, copy=False)


def lstm_gates_backward(gates, c_prev, tanh_c, dh, dc, active):
    H = c_prev.shape[1]
    act = active.astype(bool)[:, None]
    i, f = gates[:, :H], gates[:, H:2 * H]
    g, o = gates[:, 2 * H:3 * H], gates[:, 3 * H:]
    t = tanh_c
    dct = dc + dh * o * (1 - t * t)
    dz = np.concatenate([
        dct * g * i * (1 - i),
        dct * c_prev * f * (1 - f),
        dct * i * (1 - g * g),
        dh * t * o * (1 - o),
    ], axis=1)
    dz = np.where(act, dz, 0).astype(gates.dtype, copy=False)
    dcp = np.where(act, dct * f, dc).astype(gates.dtype, copy=False)
    dhc = np.where(act, 0, dh).astype(gates.dtype, copy=False)
    return dz, dcp, dhc


def zhang_suen(img):
    a = np.zeros((img.shape[0] + 2, img.shape[1] + 2), dtype=np.uint8)
    a[1:-1, 1:-1] = img
    changed = True
    while changed:
        changed = False
        for step in range(2):
            c = a[1:-1, 1:-1]
            p2, p3, p4 = a[:-2, 1:-1], a[:-2, 2:], a[1:-1, 2:]
            p5, p6, p7 = a[2:, 2:], a[2:, 1:-1], a[2:, :-2]
            p8, p9 = a[1:-1, :-2], a[:-2, :-2]
            ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
            n_b = sum(p.astype(np.int32) for p in ring[:8])
            n_a = sum(((ring[k] == 0) & (ring[k + 1] == 1)).astype(np.int32)
                      for k in range(8))
            cond = (c == 1) & (n_b >= 2) & (n_b <= 6) & (n_a == 1)
            if step == 0:
                cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if cond.any():
                a[1:-1, 1:-1][cond] = 0
                changed = True
    return a[1:-1, 1:-1].copy()
