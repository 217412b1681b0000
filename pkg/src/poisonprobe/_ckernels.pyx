# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR products and the fused elementwise passes of
the attack inner loop.  Signatures mirror `_pykernels`."""
import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()

NAME = "c"


def csr_dense_matmul(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                     double[::1] data, double[:, ::1] dense):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t cols = dense.shape[1]
    out_arr = np.zeros((n_rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c, p
    cdef double a
    with nogil:
        for i in range(n_rows):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                a = data[p]
                for c in range(cols):
                    out[i, c] += a * dense[j, c]
    return out_arr


def csr_t_dense_matmul(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                       double[::1] data, Py_ssize_t n_cols, double[:, ::1] dense):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t cols = dense.shape[1]
    out_arr = np.zeros((n_cols, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c, p
    cdef double a
    with nogil:
        for i in range(n_rows):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                a = data[p]
                for c in range(cols):
                    out[j, c] += a * dense[i, c]
    return out_arr


# numpy's SIMD tanh is ~4x faster than a scalar libm loop on attack-sized
# rows (see benchmarks/bench_kernels.py), so the tanh pair stays vectorized
from ._pykernels import tanh_reparam, tanh_reparam_grad  # noqa: E402


def relu_delta(double[:, ::1] pre, double[:, ::1] dpre):
    cdef Py_ssize_t n = pre.shape[0], m = pre.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double a, b
    with nogil:
        for i in range(n):
            for j in range(m):
                a = pre[i, j] + dpre[i, j]
                b = pre[i, j]
                out[i, j] = (a if a > 0.0 else 0.0) - (b if b > 0.0 else 0.0)
    return out_arr


def relu_mask(double[:, ::1] pre, double[:, ::1] dpre, double[:, ::1] adjoint):
    cdef Py_ssize_t n = pre.shape[0], m = pre.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = adjoint[i, j] if pre[i, j] + dpre[i, j] > 0.0 else 0.0
    return out_arr


def adam_step(double[:, ::1] w, double[:, ::1] grad, double[:, ::1] m_state,
              double[:, ::1] v_state, Py_ssize_t t, double lr,
              double beta1, double beta2, double eps):
    cdef Py_ssize_t n = w.shape[0], m = w.shape[1]
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef Py_ssize_t i, j
    cdef double g, mh, vh
    with nogil:
        for i in range(n):
            for j in range(m):
                g = grad[i, j]
                m_state[i, j] = beta1 * m_state[i, j] + (1.0 - beta1) * g
                v_state[i, j] = beta2 * v_state[i, j] + (1.0 - beta2) * g * g
                mh = m_state[i, j] / bc1
                vh = v_state[i, j] / bc2
                w[i, j] -= lr * mh / (sqrt(vh) + eps)
