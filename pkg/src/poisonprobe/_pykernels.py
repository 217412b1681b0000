"""Pure-python (numpy/scipy) implementations of the hot kernels.

Same signatures as the compiled `_ckernels` module; selected automatically
when the extension is unavailable (or forced via POISONPROBE_KERNELS=py).
"""
import numpy as np
import scipy.sparse as sp

NAME = "py"


def csr_dense_matmul(indptr, indices, data, dense):
    """A @ B for CSR A (rows = len(indptr) - 1) and C-contiguous float64 B."""
    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, dense.shape[0]))
    return np.ascontiguousarray(mat @ dense)


def csr_t_dense_matmul(indptr, indices, data, n_cols, dense):
    """A.T @ B for CSR A of shape (len(indptr) - 1, n_cols)."""
    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))
    return np.ascontiguousarray(mat.T @ dense)


def tanh_reparam(xtilde, w):
    """Map an unconstrained variable into the unit box: 0.5 * (tanh(xtilde + w) + 1)."""
    return 0.5 * (np.tanh(xtilde + w) + 1.0)


def tanh_reparam_grad(xtilde, w, grad_x):
    """Chain rule through the box map: grad_w = grad_x * 0.5 * sech^2(xtilde + w)."""
    th = np.tanh(xtilde + w)
    return grad_x * (0.5 * (1.0 - th * th))


def relu_delta(pre, dpre):
    """relu(pre + dpre) - relu(pre) in one call."""
    return np.maximum(pre + dpre, 0.0) - np.maximum(pre, 0.0)


def relu_mask(pre, dpre, adjoint):
    """Adjoint gated by the relu active set at the perturbed point."""
    return np.where(pre + dpre > 0.0, adjoint, 0.0)


def adam_step(w, grad, m, v, t, lr, beta1, beta2, eps):
    """One in-place Adam update (bias-corrected, eps outside the sqrt)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)
