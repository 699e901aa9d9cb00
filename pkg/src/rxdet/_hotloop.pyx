# cython: language_level=3
"""Compiled per-pixel scoring core.

One pixel = map through the frequency matrix (cos/sin features), optional
mean removal, forward-substitute the Cholesky factor, accumulate the squared
norm.  The batch entry point iterates the same routine, so batch and
streaming scores are bit-identical by construction.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport ddot, dtrsv

cnp.import_array()

BACKEND = "compiled"


cdef double _score_pixel(
    const double* x,
    const double* W,
    const double* L,
    const double* mu,
    double* z,
    double* y,
    int d,
    int D,
) noexcept nogil:
    cdef int j, m = 2 * D, inc = 1
    cdef double t
    cdef double inv = 1.0 / sqrt(<double> D)
    for j in range(D):
        t = ddot(&d, <double*> &W[j * d], &inc, <double*> x, &inc)
        z[j] = cos(t) * inv
        z[D + j] = sin(t) * inv
    if mu != NULL:
        for j in range(m):
            z[j] -= mu[j]
    memcpy(y, z, m * sizeof(double))
    # Row-major lower-triangular L is an upper-triangular matrix in the
    # column-major world BLAS lives in, hence uplo='U', trans='T'.
    dtrsv("U", "T", "N", &m, <double*> L, &m, y, &inc)
    return ddot(&m, y, &inc, y, &inc)


def rrx_score_one(const double[::1] x, const double[:, ::1] W, const double[:, ::1] L,
                  const double[::1] mu=None):
    cdef int d = W.shape[1]
    cdef int D = W.shape[0]
    cdef cnp.ndarray[double, ndim=1] z = np.empty(2 * D, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] y = np.empty(2 * D, dtype=np.float64)
    cdef const double* mup = NULL
    if mu is not None:
        mup = &mu[0]
    return _score_pixel(
        &x[0], &W[0, 0], &L[0, 0], mup,
        <double*> cnp.PyArray_DATA(z), <double*> cnp.PyArray_DATA(y), d, D,
    )


def rrx_score_block(const double[:, ::1] X, const double[:, ::1] W, const double[:, ::1] L,
                    const double[::1] mu=None):
    cdef int d = W.shape[1]
    cdef int D = W.shape[0]
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] z = np.empty(2 * D, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] y = np.empty(2 * D, dtype=np.float64)
    cdef double* outp = <double*> cnp.PyArray_DATA(out)
    cdef double* zp = <double*> cnp.PyArray_DATA(z)
    cdef double* yp = <double*> cnp.PyArray_DATA(y)
    cdef const double* mup = NULL
    cdef Py_ssize_t i
    if mu is not None:
        mup = &mu[0]
    with nogil:
        for i in range(n):
            outp[i] = _score_pixel(&X[i, 0], &W[0, 0], &L[0, 0], mup, zp, yp, d, D)
    return out
