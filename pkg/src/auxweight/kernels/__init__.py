"""Hot aggregation kernels with a compiled core and a pure-numpy fallback.

``spmm`` computes ``out[i] = sum_j values[j] * dense[indices[j]]`` over each
CSR row segment, the inner loop of sparse message passing. The compiled
Cython version is used when it built successfully; set ``AUXWEIGHT_PURE=1``
to force the numpy fallback (used by the benchmark and the parity tests).
"""

import os

from . import fallback

if os.environ.get("AUXWEIGHT_PURE"):
    _impl = fallback
    IMPLEMENTATION = "python"
else:
    try:
        from . import _csr_ext as _impl

        IMPLEMENTATION = "cython"
    except ImportError:
        _impl = fallback
        IMPLEMENTATION = "python"


def spmm(offsets, indices, values, dense):
    """CSR-matrix times dense-matrix product.

    offsets: int64[n+1], indices: int64[nnz], values: float64[nnz],
    dense: float64[m, d] C-contiguous. Returns float64[n, d].
    """
    return _impl.spmm(offsets, indices, values, dense)
