# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: max pooling with argmax routing and Zhang-Suen thinning.

Every function here has a pure-numpy twin in ``_pykernels`` with the same
signature and semantics.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def maxpool_forward(real[:, :, :, ::1] x, int ph, int pw):
    """Non-overlapping max pooling over an NHWC array whose H, W divide evenly.

    Returns the pooled array and the flat (row-major, within-sample) index of
    the winning input cell. Ties go to the first cell in scan order.
    """
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t Ho = H // ph, Wo = W // pw
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((B, Ho, Wo, C), dtype=dtype)
    idx_arr = np.empty((B, Ho, Wo, C), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, i, j, c, di, dj, r, s, best_pos, pos
    cdef real best, v
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        r = i * ph
                        s = j * pw
                        best = x[b, r, s, c]
                        best_pos = (r * W + s) * C + c
                        for di in range(ph):
                            for dj in range(pw):
                                v = x[b, r + di, s + dj, c]
                                if v > best:
                                    best = v
                                    best_pos = ((r + di) * W + s + dj) * C + c
                        out[b, i, j, c] = best
                        idx[b, i, j, c] = best_pos
    return out_arr, idx_arr


def maxpool_backward(real[:, :, :, ::1] grad_out, cnp.int64_t[:, :, :, ::1] idx,
                     Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t B = grad_out.shape[0], Ho = grad_out.shape[1]
    cdef Py_ssize_t Wo = grad_out.shape[2], C = grad_out.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((B, H, W, C), dtype=dtype)
    cdef real[:, ::1] gx = gx_arr.reshape(B, H * W * C)
    cdef Py_ssize_t b, i, j, c
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        gx[b, idx[b, i, j, c]] += grad_out[b, i, j, c]
    return gx_arr


def zhang_suen(cnp.uint8_t[:, ::1] img):
    """Thin a 0/1 image to the Zhang-Suen fixed point. Pixels outside the
    frame count as background."""
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1]
    work_arr = np.zeros((H + 2, W + 2), dtype=np.uint8)
    work_arr[1:-1, 1:-1] = img
    cdef cnp.uint8_t[:, ::1] a = work_arr
    flag_arr = np.zeros((H + 2, W + 2), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] flag = flag_arr
    cdef Py_ssize_t y, x, k
    cdef int step, changed, n_b, n_a
    cdef int p[9]
    changed = 1
    with nogil:
        while changed:
            changed = 0
            for step in range(2):
                for y in range(1, H + 1):
                    for x in range(1, W + 1):
                        flag[y, x] = 0
                        if not a[y, x]:
                            continue
                        # p[0..7] = P2..P9 clockwise from north; p[8] wraps to P2
                        p[0] = a[y - 1, x]
                        p[1] = a[y - 1, x + 1]
                        p[2] = a[y, x + 1]
                        p[3] = a[y + 1, x + 1]
                        p[4] = a[y + 1, x]
                        p[5] = a[y + 1, x - 1]
                        p[6] = a[y, x - 1]
                        p[7] = a[y - 1, x - 1]
                        p[8] = p[0]
                        n_b = 0
                        n_a = 0
                        for k in range(8):
                            n_b += p[k]
                            if p[k] == 0 and p[k + 1] == 1:
                                n_a += 1
                        if n_b < 2 or n_b > 6 or n_a != 1:
                            continue
                        if step == 0:
                            if p[0] * p[2] * p[4] != 0 or p[2] * p[4] * p[6] != 0:
                                continue
                        else:
                            if p[0] * p[2] * p[6] != 0 or p[0] * p[4] * p[6] != 0:
                                continue
                        flag[y, x] = 1
                for y in range(1, H + 1):
                    for x in range(1, W + 1):
                        if flag[y, x]:
                            a[y, x] = 0
                            changed = 1
    return work_arr[1:-1, 1:-1].copy()
