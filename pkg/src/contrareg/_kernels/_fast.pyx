# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot contrastive kernel.

Mirrors `contrareg._kernels.numpy_impl.contrast_terms`; the loop
structure fuses what the numpy version does with m x m temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def contrast_terms(z, pos_mask, neg_mask, weights, double tau):
    cdef double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef unsigned char[:, ::1] pos = np.ascontiguousarray(pos_mask, dtype=np.uint8)
    cdef unsigned char[:, ::1] neg = np.ascontiguousarray(neg_mask, dtype=np.uint8)
    cdef double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)

    cdef Py_ssize_t m = zv.shape[0]
    cdef Py_ssize_t d = zv.shape[1]

    per_anchor_arr = np.zeros(m, dtype=np.float64)
    dz_arr = np.zeros((m, d), dtype=np.float64)
    cdef double[::1] per_anchor = per_anchor_arr
    cdef double[:, ::1] dz = dz_arr

    scratch = np.zeros(m, dtype=np.float64)
    cdef double[::1] e = scratch

    cdef Py_ssize_t i, j, k
    cdef bint has_pos, has_neg
    cdef double dot, mx, p, q, inv_pq, inv_p, g

    for j in range(m):
        has_pos = False
        has_neg = False
        for i in range(m):
            if pos[j, i]:
                has_pos = True
            if neg[j, i]:
                has_neg = True
        if not (has_pos and has_neg):
            continue

        # scaled dot products of the paired rows, and their max for the
        # log-sum-exp shift
        mx = -1e308
        for i in range(m):
            if pos[j, i] or neg[j, i]:
                dot = 0.0
                for k in range(d):
                    dot += zv[j, k] * zv[i, k]
                e[i] = dot / tau
                if e[i] > mx:
                    mx = e[i]

        p = 0.0
        q = 0.0
        for i in range(m):
            if pos[j, i]:
                e[i] = exp(e[i] - mx)
                p += e[i]
            elif neg[j, i]:
                e[i] = exp(e[i] - mx)
                q += w[j, i] * e[i]

        per_anchor[j] = log(p + q) - log(p)
        inv_pq = 1.0 / (p + q)
        inv_p = 1.0 / p

        for i in range(m):
            if pos[j, i]:
                g = e[i] * (inv_pq - inv_p) / tau
            elif neg[j, i]:
                g = w[j, i] * e[i] * inv_pq / tau
            else:
                continue
            for k in range(d):
                dz[j, k] += g * zv[i, k]
                dz[i, k] += g * zv[j, k]

    return per_anchor_arr, dz_arr
