# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: window gather/scatter, fused SGD, clip, RNG fill.

Bit-identical to viewgram.kernels.pyfallback (same element order, same
per-element arithmetic; the build disables FP contraction).
"""

import numpy as np

cimport cython
from libc.stdint cimport uint64_t

ctypedef fused real:
    float
    double


def gram_windows(real[:, ::1] feats, Py_ssize_t n, bint circular):
    cdef Py_ssize_t v = feats.shape[0]
    cdef Py_ssize_t d = feats.shape[1]
    cdef Py_ssize_t num = v if circular else v - n + 1
    out_np = np.empty((num, n * d), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t j, k, c, src
    for j in range(num):
        for k in range(n):
            src = (j + k) % v if circular else j + k
            for c in range(d):
                out[j, k * d + c] = feats[src, c]
    return out_np


def gram_windows_backward(real[:, ::1] dwin, Py_ssize_t n, Py_ssize_t num_views,
                          bint circular):
    cdef Py_ssize_t num = dwin.shape[0]
    cdef Py_ssize_t d = dwin.shape[1] // n
    out_np = np.zeros((num_views, d), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t j, k, c, row
    for j in range(num):
        for k in range(n):
            row = (j + k) % num_views if circular else j + k
            for c in range(d):
                out[row, c] = out[row, c] + dwin[j, k * d + c]
    return out_np


def sgd_update(real[::1] param, real[::1] grad, real[::1] vel,
               double lr, double momentum, double weight_decay):
    cdef real lr_r = <real> lr
    cdef real mom_r = <real> momentum
    cdef real wd_r = <real> weight_decay
    cdef Py_ssize_t i
    cdef real gp
    for i in range(param.shape[0]):
        gp = grad[i] + wd_r * param[i]
        vel[i] = mom_r * vel[i] + gp
        param[i] = param[i] - lr_r * vel[i]


def clip_inplace(real[::1] grad, double bound):
    cdef real b = <real> bound
    cdef Py_ssize_t i
    for i in range(grad.shape[0]):
        if grad[i] > b:
            grad[i] = b
        elif grad[i] < -b:
            grad[i] = -b


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


def fill_uniform(uint64_t[::1] state, double[::1] out):
    cdef uint64_t s0 = state[0]
    cdef uint64_t s1 = state[1]
    cdef uint64_t s2 = state[2]
    cdef uint64_t s3 = state[3]
    cdef uint64_t r, t
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        r = _rotl(s1 * 5ULL, 7) * 9ULL
        t = s1 << 17
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        out[i] = <double> (r >> 11) * (1.0 / 9007199254740992.0)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
