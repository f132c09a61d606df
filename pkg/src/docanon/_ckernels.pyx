# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; outputs are identical."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, int32_t, int64_t, uint64_t
from libc.string cimport memcpy

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

cdef int[16] CDX = [0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1]
cdef int[16] CDY = [-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3]


cdef inline void _reduce_into(uint8_t* acc, const uint8_t* v, Py_ssize_t n, bint take_max) noexcept nogil:
    # branch-free select so the loops vectorise
    cdef Py_ssize_t j
    cdef uint8_t a, b
    if take_max:
        for j in range(n):
            a = acc[j]
            b = v[j]
            acc[j] = b if b > a else a
    else:
        for j in range(n):
            a = acc[j]
            b = v[j]
            acc[j] = b if b < a else a


cdef void _filter_rows(const uint8_t[:, ::1] src, uint8_t[:, ::1] dst, uint8_t* buf, int r,
                       bint take_max) noexcept nogil:
    # buf holds one edge-padded row of length w + 2r
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], i, k
    for i in range(h):
        for k in range(r):
            buf[k] = src[i, 0]
            buf[r + w + k] = src[i, w - 1]
        memcpy(buf + r, &src[i, 0], w)
        memcpy(&dst[i, 0], buf, w)
        for k in range(1, 2 * r + 1):
            _reduce_into(&dst[i, 0], buf + k, w, take_max)


cdef void _filter_cols(const uint8_t[:, ::1] src, uint8_t[:, ::1] dst, int r, bint take_max) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], i, k, c
    for i in range(h):
        memcpy(&dst[i, 0], &src[i, 0], w)
        for k in range(-r, r + 1):
            if k == 0:
                continue
            c = i + k
            if c < 0:
                c = 0
            elif c >= h:
                c = h - 1
            _reduce_into(&dst[i, 0], &src[c, 0], w, take_max)


def _rank_filter(img, int kw, int kh, bint take_max):
    cdef const uint8_t[:, ::1] src = np.ascontiguousarray(img, dtype=np.uint8)
    cdef cnp.ndarray tmp = np.empty((src.shape[0], src.shape[1]), dtype=np.uint8)
    cdef cnp.ndarray out = np.empty((src.shape[0], src.shape[1]), dtype=np.uint8)
    cdef uint8_t[:, ::1] tv = tmp
    cdef uint8_t[:, ::1] ov = out
    cdef cnp.ndarray row = np.empty(src.shape[1] + 2 * (kw // 2), dtype=np.uint8)
    cdef uint8_t* buf = <uint8_t*> cnp.PyArray_DATA(row)
    with nogil:
        _filter_rows(src, tv, buf, kw // 2, take_max)
        _filter_cols(tv, ov, kh // 2, take_max)
    return out


def min_filter(img, int kw, int kh):
    return _rank_filter(img, kw, kh, False)


def max_filter(img, int kw, int kh):
    return _rank_filter(img, kw, kh, True)


cdef inline Py_ssize_t _find(int64_t[::1] parent, Py_ssize_t i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef inline void _union(int64_t[::1] parent, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label_boxes(mask):
    cdef cnp.ndarray fg_arr = np.ascontiguousarray(np.asarray(mask) > 0, dtype=np.uint8)
    cdef const uint8_t[:, ::1] fg = fg_arr
    cdef Py_ssize_t h = fg.shape[0], w = fg.shape[1], i, j, idx, root, n = 0
    cdef cnp.ndarray labels_arr = np.full(h * w, -1, dtype=np.int64)
    cdef int64_t[::1] labels = labels_arr
    cdef cnp.ndarray parent_arr = np.arange(h * w, dtype=np.int64)
    cdef int64_t[::1] parent = parent_arr
    with nogil:
        for i in range(h):
            for j in range(w):
                if not fg[i, j]:
                    continue
                idx = i * w + j
                labels[idx] = idx
                if j > 0 and fg[i, j - 1]:
                    _union(parent, idx, idx - 1)
                if i > 0:
                    if j > 0 and fg[i - 1, j - 1]:
                        _union(parent, idx, idx - w - 1)
                    if fg[i - 1, j]:
                        _union(parent, idx, idx - w)
                    if j + 1 < w and fg[i - 1, j + 1]:
                        _union(parent, idx, idx - w + 1)
    # roots are the raster-first pixel of each component (unions keep the smaller index)
    cdef cnp.ndarray slot_arr = np.full(h * w, -1, dtype=np.int64)
    cdef int64_t[::1] slot = slot_arr
    cdef cnp.ndarray acc_arr = np.zeros((max(1, h * w), 5), dtype=np.int64)
    cdef int64_t[:, ::1] acc = acc_arr
    cdef int64_t s
    with nogil:
        for i in range(h):
            for j in range(w):
                idx = i * w + j
                if labels[idx] < 0:
                    continue
                root = _find(parent, idx)
                s = slot[root]
                if s < 0:
                    s = n
                    slot[root] = s
                    n += 1
                    acc[s, 0] = j
                    acc[s, 1] = i
                    acc[s, 2] = j + 1
                    acc[s, 3] = i + 1
                    acc[s, 4] = 0
                if j < acc[s, 0]:
                    acc[s, 0] = j
                if j + 1 > acc[s, 2]:
                    acc[s, 2] = j + 1
                acc[s, 3] = i + 1
                acc[s, 4] += 1
    out = acc_arr[:n].copy()
    if n:
        order = np.lexsort((np.arange(n), out[:, 0], out[:, 1]))
        out = out[order]
    return out


def hamming_matrix(a, b):
    cdef cnp.ndarray av = np.ascontiguousarray(a, dtype=np.uint8)
    cdef cnp.ndarray bv = np.ascontiguousarray(b, dtype=np.uint8)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], nbytes = av.shape[1]
    cdef Py_ssize_t words = (nbytes + 7) // 8
    cdef cnp.ndarray pa = np.zeros((na, words * 8), dtype=np.uint8)
    cdef cnp.ndarray pb = np.zeros((nb, words * 8), dtype=np.uint8)
    pa[:, :nbytes] = av
    pb[:, :nbytes] = bv
    cdef const uint64_t[:, ::1] wa = pa.view(np.uint64)
    cdef const uint64_t[:, ::1] wb = pb.view(np.uint64)
    cdef cnp.ndarray out = np.empty((na, nb), dtype=np.int32)
    cdef int32_t[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef int d
    with nogil:
        for i in range(na):
            for j in range(nb):
                d = 0
                for k in range(words):
                    d += __builtin_popcountll(wa[i, k] ^ wb[j, k])
                ov[i, j] = d
    return out


def fast_score(img, int threshold, int arc=9):
    cdef cnp.ndarray g_arr = np.ascontiguousarray(img, dtype=np.uint8)
    cdef const uint8_t[:, ::1] g = g_arr
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1], i, j
    cdef cnp.ndarray out = np.zeros((h, w), dtype=np.int32)
    cdef int32_t[:, ::1] ov = out
    cdef int d[16]
    cdef int k, c, p, run_b, run_d, best_b, best_d, sb, sd
    if h < 7 or w < 7:
        return out
    with nogil:
        for i in range(3, h - 3):
            for j in range(3, w - 3):
                c = g[i, j]
                for k in range(16):
                    d[k] = <int>g[i + CDY[k], j + CDX[k]] - c
                run_b = 0
                run_d = 0
                best_b = 0
                best_d = 0
                # walk the circle twice so wrapped arcs are seen
                for p in range(32):
                    k = p & 15
                    if d[k] > threshold:
                        run_b += 1
                        if run_b > best_b:
                            best_b = run_b
                    else:
                        run_b = 0
                    if d[k] < -threshold:
                        run_d += 1
                        if run_d > best_d:
                            best_d = run_d
                    else:
                        run_d = 0
                if best_b < arc and best_d < arc:
                    continue
                sb = 0
                sd = 0
                for k in range(16):
                    if d[k] > threshold:
                        sb += d[k] - threshold
                    elif d[k] < -threshold:
                        sd += -d[k] - threshold
                ov[i, j] = sb if sb > sd else sd
    return out
