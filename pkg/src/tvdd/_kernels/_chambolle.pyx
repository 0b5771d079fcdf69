# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2-D version of the fused dual-update loop.

Same contract as ``pykernels.chambolle_window`` restricted to d = 2 and
m <= 8 channels. The loop runs without the GIL so subdomain solves can
execute concurrently on worker threads.
"""

import numpy as np

from libc.math cimport sqrt

cdef enum:
    MAXC = 8


def chambolle_window_2d(double[:, :, :, ::1] v, const double[:, :, ::1] h,
                        const double[:, ::1] bound, const double[:, :, :, ::1] binv,
                        double tau, Py_ssize_t n_iter):
    cdef Py_ssize_t n1 = v.shape[0], n2 = v.shape[1], m = v.shape[3]
    if v.shape[2] != 2:
        raise ValueError("expected a 2-D dual field")
    if m > MAXC:
        raise ValueError("too many channels for the compiled kernel")
    cdef double[:, :, ::1] w = np.empty((n1, n2, m))
    cdef double r[MAXC]
    cdef double x0[MAXC]
    cdef double x1[MAXC]
    cdef Py_ssize_t it, i, j, c, e
    cdef double a0, a1, s, b, nrm, fac
    with nogil:
        for it in range(n_iter):
            for i in range(n1):
                for j in range(n2):
                    for c in range(m):
                        a0 = 0.0
                        if i < n1 - 1:
                            a0 = v[i, j, 0, c]
                        if i > 0:
                            a0 = a0 - v[i - 1, j, 0, c]
                        a1 = 0.0
                        if j < n2 - 1:
                            a1 = v[i, j, 1, c]
                        if j > 0:
                            a1 = a1 - v[i, j - 1, 1, c]
                        r[c] = (a0 + a1) + h[i, j, c]
                    for c in range(m):
                        s = 0.0
                        for e in range(m):
                            s = s + binv[i, j, c, e] * r[e]
                        w[i, j, c] = s
            for i in range(n1):
                for j in range(n2):
                    b = bound[i, j]
                    if b <= 0.0:
                        for c in range(m):
                            v[i, j, 0, c] = 0.0
                            v[i, j, 1, c] = 0.0
                        continue
                    nrm = 0.0
                    for c in range(m):
                        if i < n1 - 1:
                            x0[c] = -(w[i + 1, j, c] - w[i, j, c])
                        else:
                            x0[c] = -0.0
                        if j < n2 - 1:
                            x1[c] = -(w[i, j + 1, c] - w[i, j, c])
                        else:
                            x1[c] = -0.0
                    for c in range(m):
                        nrm = nrm + x0[c] * x0[c]
                    for c in range(m):
                        nrm = nrm + x1[c] * x1[c]
                    nrm = sqrt(nrm)
                    fac = b / (b + tau * nrm)
                    for c in range(m):
                        v[i, j, 0, c] = (v[i, j, 0, c] - tau * x0[c]) * fac
                        v[i, j, 1, c] = (v[i, j, 1, c] - tau * x1[c]) * fac
    return np.asarray(v)
