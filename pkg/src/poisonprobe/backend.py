"""Kernel backend selection.

The compiled extension (`poisonprobe._ckernels`, Cython) is used when it
imported successfully; otherwise the numpy/scipy fallback takes over.  Set
POISONPROBE_KERNELS=py or =c to force a backend (forcing `c` raises if the
extension is missing).
"""
import os

from . import _pykernels

_forced = os.environ.get("POISONPROBE_KERNELS", "").strip().lower()

if _forced == "py":
    _impl = _pykernels
elif _forced == "c":
    from . import _ckernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

KERNELS = _impl.NAME

csr_dense_matmul = _impl.csr_dense_matmul
csr_t_dense_matmul = _impl.csr_t_dense_matmul
tanh_reparam = _impl.tanh_reparam
tanh_reparam_grad = _impl.tanh_reparam_grad
relu_delta = _impl.relu_delta
relu_mask = _impl.relu_mask
adam_step = _impl.adam_step
