# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def conv3x3(image, weights, bias):
    cdef double[:, ::1] x = np.ascontiguousarray(image, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], k = w.shape[0]
    out_arr = np.empty((k, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ch, i, j, di, r, cl, cr
    cdef double acc
    for ch in range(k):
        for i in range(h):
            for j in range(wd):
                cl = j - 1 if j > 0 else 0
                cr = j + 1 if j < wd - 1 else wd - 1
                acc = b[ch]
                for di in range(3):
                    r = i + di - 1
                    if r < 0:
                        r = 0
                    elif r > h - 1:
                        r = h - 1
                    acc = acc + (w[ch, di, 1] * x[r, j] + (w[ch, di, 0] * x[r, cl] + w[ch, di, 2] * x[r, cr]))
                out[ch, i, j] = acc
    return out_arr


def confusion_matrix(pred, ref, int num_classes):
    cdef cnp.int64_t[::1] p = np.ascontiguousarray(pred, dtype=np.int64).ravel()
    cdef cnp.int64_t[::1] t = np.ascontiguousarray(ref, dtype=np.int64).ravel()
    if p.shape[0] != t.shape[0]:
        raise ValueError("prediction and reference sizes differ")
    out_arr = np.zeros((num_classes, num_classes), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t n = p.shape[0], i
    for i in range(n):
        out[t[i], p[i]] += 1
    return out_arr


def nearest(query, corpus):
    cdef double[::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(corpus, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], f = c.shape[1], i, j
    cdef double best = -1.0, s, d
    cdef Py_ssize_t best_i = 0
    for i in range(n):
        s = 0.0
        for j in range(f):
            d = c[i, j] - q[j]
            s += d * d
        if best < 0.0 or s < best:
            best = s
            best_i = i
    return sqrt(best), int(best_i)


def nondominated_ranks(objectives):
    cdef double[:, ::1] f = np.ascontiguousarray(objectives, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], m = f.shape[1], p, q, j
    ranks_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] ranks = ranks_arr
    if n == 0:
        return ranks_arr
    dom_arr = np.zeros((n, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] dom = dom_arr
    cnt_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = cnt_arr
    cdef bint all_le, any_lt
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            all_le = True
            any_lt = False
            for j in range(m):
                if f[p, j] > f[q, j]:
                    all_le = False
                    break
                if f[p, j] < f[q, j]:
                    any_lt = True
            if all_le and any_lt:
                dom[p, q] = 1
                cnt[q] += 1
    cdef list front = [p for p in range(n) if cnt[p] == 0]
    cdef list nxt
    cdef cnp.int64_t r = 0
    while front:
        for p in front:
            ranks[p] = r
        nxt = []
        for p in front:
            for q in range(n):
                if dom[p, q]:
                    cnt[q] -= 1
                    if cnt[q] == 0:
                        nxt.append(q)
        nxt.sort()
        front = nxt
        r += 1
    return ranks_arr


def pairwise_mean_distance(points):
    cdef double[:, ::1] x = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1], i, k, j
    cdef double total = 0.0, s, d
    for i in range(n - 1):
        for k in range(i + 1, n):
            s = 0.0
            for j in range(f):
                d = x[k, j] - x[i, j]
                s += d * d
            total += sqrt(s)
    return total / (n * (n - 1) / 2.0)
