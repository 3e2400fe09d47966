# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-segment kernels.

Same signatures and results as ``_kernels_py``. Segments are processed in
blocks: the precision terms ``B_s = sum_i n_si G_i`` of a block come from one
BLAS product, then each segment's posterior precision is factored once with
an in-place Cholesky and the factor is reused for every language.
"""

import numpy as np
from libc.math cimport sqrt

from .errors import NotPositiveDefinite

cdef Py_ssize_t CHUNK = 256


def _gram_sums(n, grams, Py_ssize_t start, Py_ssize_t stop):
    Nc, R = grams.shape[0], grams.shape[1]
    flat = np.asarray(grams).reshape(Nc, R * R)
    return np.ascontiguousarray((np.asarray(n[start:stop]) @ flat).reshape(-1, R, R))


def _raise(Py_ssize_t s):
    raise NotPositiveDefinite(f"segment {s}: posterior precision is not positive definite")


cdef void _build(const double[:, ::1] B, const double[:, ::1] base, double shift,
                 double[:, ::1] P) noexcept nogil:
    # P = base + shift*I + B
    cdef Py_ssize_t R = P.shape[0]
    cdef Py_ssize_t j, k
    for j in range(R):
        for k in range(R):
            P[j, k] = base[j, k] + B[j, k]
        P[j, j] += shift


cdef int _cholesky(double[:, ::1] P) noexcept nogil:
    # Lower factor in place; returns -1 if not positive definite.
    cdef Py_ssize_t R = P.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, t
    for j in range(R):
        acc = P[j, j]
        for k in range(j):
            acc -= P[j, k] * P[j, k]
        if not acc > 0.0:
            return -1
        acc = sqrt(acc)
        P[j, j] = acc
        for i in range(j + 1, R):
            t = P[i, j]
            for k in range(j):
                t -= P[i, k] * P[j, k]
            P[i, j] = t / acc
    return 0


cdef void _solve(const double[:, ::1] Lf, double[::1] x) noexcept nogil:
    # x <- (L L')^-1 x
    cdef Py_ssize_t R = Lf.shape[0]
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(R):
        acc = x[i]
        for k in range(i):
            acc -= Lf[i, k] * x[k]
        x[i] = acc / Lf[i, i]
    for i in range(R - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, R):
            acc -= Lf[k, i] * x[k]
        x[i] = acc / Lf[i, i]


cdef Py_ssize_t _posterior_block(const double[:, :, ::1] Bs, Py_ssize_t start,
                                 const double[:, ::1] a, const double[:, ::1] W,
                                 const double[:, ::1] Wm, double[:, ::1] P, double[::1] x,
                                 double[:, :, ::1] cov, double[:, :, ::1] mu) noexcept nogil:
    cdef Py_ssize_t R = P.shape[0], L = Wm.shape[0]
    cdef Py_ssize_t b, s, l, j, k
    for b in range(Bs.shape[0]):
        s = start + b
        _build(Bs[b], W, 0.0, P)
        if _cholesky(P) != 0:
            return s
        for j in range(R):
            for k in range(R):
                x[k] = 1.0 if k == j else 0.0
            _solve(P, x)
            for k in range(R):
                cov[s, k, j] = x[k]
        for j in range(R):
            for k in range(j + 1, R):
                cov[s, j, k] = 0.5 * (cov[s, j, k] + cov[s, k, j])
                cov[s, k, j] = cov[s, j, k]
        for l in range(L):
            for k in range(R):
                x[k] = Wm[l, k] + a[s, k]
            _solve(P, x)
            for k in range(R):
                mu[s, l, k] = x[k]
    return -1


def posteriors(const double[:, ::1] n, const double[:, ::1] a,
               const double[:, :, ::1] grams, const double[:, ::1] W,
               const double[:, ::1] means):
    cdef Py_ssize_t S = a.shape[0], R = a.shape[1], L = means.shape[0]
    cdef Py_ssize_t start, bad
    cov_arr = np.empty((S, R, R))
    mu_arr = np.empty((S, L, R))
    cdef double[:, :, ::1] cov = cov_arr
    cdef double[:, :, ::1] mu = mu_arr
    cdef double[:, ::1] Wm = np.ascontiguousarray(np.asarray(means) @ np.asarray(W))
    cdef double[:, ::1] P = np.empty((R, R))
    cdef double[::1] x = np.empty(R)
    cdef double[:, :, ::1] Bs
    for start in range(0, S, CHUNK):
        Bs = _gram_sums(n, grams, start, min(start + CHUNK, S))
        with nogil:
            bad = _posterior_block(Bs, start, a, W, Wm, P, x, cov, mu)
        if bad >= 0:
            _raise(bad)
    return cov_arr, mu_arr


cdef Py_ssize_t _score_block(double[:, :, ::1] Bs, Py_ssize_t start,
                             const double[:, ::1] a, const double[:, ::1] W,
                             const double[:, ::1] means, const double[:, ::1] Wm,
                             double shift, double[:, ::1] P, double[::1] x,
                             double[:, ::1] out) noexcept nogil:
    # score_l = (W m_l)' (W + shift*I + B)^-1 (a - (shift*I + B) m_l / 2)
    cdef Py_ssize_t R = P.shape[0], L = means.shape[0]
    cdef Py_ssize_t b, s, l, j, k
    cdef double acc
    for b in range(Bs.shape[0]):
        s = start + b
        _build(Bs[b], W, shift, P)
        for j in range(R):
            Bs[b, j, j] += shift
        if _cholesky(P) != 0:
            return s
        for l in range(L):
            for j in range(R):
                acc = 0.0
                for k in range(R):
                    acc += Bs[b, j, k] * means[l, k]
                x[j] = a[s, j] - 0.5 * acc
            _solve(P, x)
            acc = 0.0
            for k in range(R):
                acc += Wm[l, k] * x[k]
            out[s, l] = acc
    return -1


cdef _scores(const double[:, ::1] n, const double[:, ::1] a,
             const double[:, :, ::1] grams, const double[:, ::1] W,
             const double[:, ::1] means, double shift):
    cdef Py_ssize_t S = a.shape[0], R = a.shape[1], L = means.shape[0]
    cdef Py_ssize_t start, bad
    out_arr = np.empty((S, L))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] Wm = np.ascontiguousarray(np.asarray(means) @ np.asarray(W))
    cdef double[:, ::1] P = np.empty((R, R))
    cdef double[::1] x = np.empty(R)
    cdef double[:, :, ::1] Bs
    for start in range(0, S, CHUNK):
        Bs = _gram_sums(n, grams, start, min(start + CHUNK, S))
        with nogil:
            bad = _score_block(Bs, start, a, W, means, Wm, shift, P, x, out)
        if bad >= 0:
            _raise(bad)
    return out_arr


def ld_scores(n, a, grams, W, means):
    return _scores(n, a, grams, W, means, 0.0)


def cpf_scores(n, a, grams, W, means):
    return _scores(n, a, grams, W, means, 1.0)


cdef Py_ssize_t _ivector_block(const double[:, :, ::1] Bs, Py_ssize_t start,
                               const double[:, ::1] a, const double[:, ::1] zero,
                               double[:, ::1] P, double[::1] x,
                               double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t R = P.shape[0]
    cdef Py_ssize_t b, s, k
    for b in range(Bs.shape[0]):
        s = start + b
        _build(Bs[b], zero, 1.0, P)
        if _cholesky(P) != 0:
            return s
        for k in range(R):
            x[k] = a[s, k]
        _solve(P, x)
        for k in range(R):
            out[s, k] = x[k]
    return -1


def classical_ivectors(const double[:, ::1] n, const double[:, ::1] a,
                       const double[:, :, ::1] grams):
    cdef Py_ssize_t S = a.shape[0], R = a.shape[1]
    cdef Py_ssize_t start, bad
    out_arr = np.empty((S, R))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] zero = np.zeros((R, R))
    cdef double[:, ::1] P = np.empty((R, R))
    cdef double[::1] x = np.empty(R)
    cdef double[:, :, ::1] Bs
    for start in range(0, S, CHUNK):
        Bs = _gram_sums(n, grams, start, min(start + CHUNK, S))
        with nogil:
            bad = _ivector_block(Bs, start, a, zero, P, x, out)
        if bad >= 0:
            _raise(bad)
    return out_arr
