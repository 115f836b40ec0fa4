# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``scaleface._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, INFINITY

cnp.import_array()


def margin_softmax(double[:, ::1] cos, long long[::1] labels, double[::1] scales,
                   double cos_m, double sin_m, double eps, bint use_margin):
    cdef Py_ssize_t n = cos.shape[0]
    cdef Py_ssize_t C = cos.shape[1]
    cdef Py_ssize_t i, j, y
    cdef double s, ct, c, sin_t, phi, dphi, zmax, z, tot, lse, ds, p, b

    losses_a = np.empty(n)
    dscale_a = np.empty(n)
    dcos_a = np.empty((n, C))
    probs_a = np.empty((n, C))
    cdef double[::1] losses = losses_a
    cdef double[::1] dscale = dscale_a
    cdef double[:, ::1] dcos = dcos_a
    cdef double[:, ::1] probs = probs_a

    with nogil:
        for i in range(n):
            y = labels[i]
            s = scales[i]
            ct = cos[i, y]
            if use_margin:
                c = ct
                if c < -1.0 + eps:
                    c = -1.0 + eps
                if c > 1.0 - eps:
                    c = 1.0 - eps
                sin_t = sqrt(1.0 - c * c)
                phi = c * cos_m - sin_t * sin_m
                if ct > -1.0 + eps and ct < 1.0 - eps:
                    dphi = cos_m + c / sin_t * sin_m
                else:
                    dphi = 0.0
            else:
                phi = ct
                dphi = 1.0

            zmax = -INFINITY
            for j in range(C):
                b = phi if j == y else cos[i, j]
                z = s * b
                if z > zmax:
                    zmax = z
            tot = 0.0
            for j in range(C):
                b = phi if j == y else cos[i, j]
                p = exp(s * b - zmax)
                probs[i, j] = p
                tot = tot + p
            lse = zmax + log(tot)
            losses[i] = lse - s * phi

            ds = 0.0
            for j in range(C):
                b = phi if j == y else cos[i, j]
                p = probs[i, j] / tot
                probs[i, j] = p
                if j == y:
                    ds = ds + (p - 1.0) * b
                    dcos[i, j] = (p - 1.0) * s * dphi
                else:
                    ds = ds + p * b
                    dcos[i, j] = p * s
            dscale[i] = ds
    return losses_a, dcos_a, dscale_a, probs_a


def tar_at_far_sorted(double[::1] pos, double[::1] neg, double far):
    cdef Py_ssize_t P = pos.shape[0]
    cdef Py_ssize_t N = neg.shape[0]
    cdef Py_ssize_t i, first, j
    cdef double tau
    cdef bint found = 0

    if 1.0 <= far:
        tau = pos[0] if pos[0] < neg[0] else neg[0]
    else:
        first = 0
        for i in range(N):
            if i > 0 and neg[i] != neg[i - 1]:
                first = i
            if (N - first) / <double>N <= far:
                tau = neg[i]
                found = 1
                break
        if not found:
            j = 0
            while j < P and pos[j] <= neg[N - 1]:
                j += 1
            tau = pos[j] if j < P else INFINITY

    # first index with pos >= tau
    cdef Py_ssize_t lo = 0, hi = P, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if pos[mid] < tau:
            lo = mid + 1
        else:
            hi = mid
    return (P - lo) / <double>P, tau


def cosine_stat(double[:, ::1] noise, double[::1] w, double s, double sigma):
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t d = noise.shape[1]
    cdef Py_ssize_t i, k
    cdef double proj, sq, x
    out_a = np.empty(n)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(n):
            proj = 0.0
            sq = 0.0
            for k in range(d):
                x = s * w[k] + sigma * noise[i, k]
                proj = proj + w[k] * x
                sq = sq + x * x
            out[i] = proj / sqrt(sq)
    return out_a
