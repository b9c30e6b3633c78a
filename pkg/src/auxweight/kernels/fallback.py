"""Pure-numpy CSR aggregation, used when the compiled kernel is unavailable."""

import numpy as np


def spmm(offsets, indices, values, dense):
    n = len(offsets) - 1
    out = np.zeros((n, dense.shape[1]), dtype=np.float64)
    if len(indices) == 0:
        return out
    gathered = dense[indices] * values[:, None]
    # reduceat rejects start == nnz and returns the start element for
    # zero-length segments, so reduce over nonempty rows only.
    nonempty = np.diff(offsets) > 0
    starts = offsets[:-1][nonempty]
    out[nonempty] = np.add.reduceat(gathered, starts, axis=0)
    return out
