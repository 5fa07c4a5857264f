"""CSR matrix kernels: numba-accelerated with a pure-numpy fallback.

The hot loops of structure evaluation are sparse matrix products (chains of
per-relation adjacency matrices) and elementwise products of the per-path
score matrices.  Both carry two implementations:

* ``numba`` -- Gustavson-style row accumulation compiled with ``@njit``
* ``numpy`` -- vectorized expand/sort/reduce, no compiled extension needed

The numba backend is used when importable unless ``HINSTRUCT_DISABLE_NUMBA``
is set to a truthy value (``1``/``true``/``yes``/``on``).  The active choice
is exposed as ``BACKEND``; ``benchmarks/bench_kernels.py`` compares the two.

All kernels take raw CSR components (indptr/indices/data with int64 indices
and float64 values, column indices sorted within each row) and return the
same. ``sparse.SparseMatrix`` is the friendly wrapper.
"""

from __future__ import annotations

import os

import numpy as np

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_disabled() -> bool:
    return os.environ.get("HINSTRUCT_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


if not _numba_disabled():
    try:
        from numba import njit

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
else:
    BACKEND = "numpy"


def _empty_csr(n_rows: int):
    return (
        np.zeros(n_rows + 1, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
    )


def spgemm_flops(a_indptr, a_indices, b_indptr):
    """Number of scalar products a CSR*CSR multiply would perform.

    Cheap to compute up front; used to refuse runaway chain products before
    any memory is allocated.
    """
    if a_indices.shape[0] == 0:
        return 0
    counts = b_indptr[a_indices + 1] - b_indptr[a_indices]
    return int(counts.sum())


# ---------------------------------------------------------------------------
# pure numpy implementations
# ---------------------------------------------------------------------------


def spgemm_numpy(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
    """CSR product via fully vectorized expand -> lexsort -> segment-reduce."""
    if a_indices.shape[0] == 0 or b_indices.shape[0] == 0:
        return _empty_csr(n_rows)
    counts = b_indptr[a_indices + 1] - b_indptr[a_indices]
    total = int(counts.sum())
    if total == 0:
        return _empty_csr(n_rows)

    a_rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(a_indptr))
    out_i = np.repeat(a_rows, counts)
    lefts = np.repeat(a_data, counts)
    seg_ends = np.cumsum(counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(seg_ends - counts, counts)
    pos = np.repeat(b_indptr[a_indices], counts) + within
    out_j = b_indices[pos]
    prods = lefts * b_data[pos]

    order = np.lexsort((out_j, out_i))
    out_i = out_i[order]
    out_j = out_j[order]
    prods = prods[order]

    head = np.empty(total, dtype=bool)
    head[0] = True
    head[1:] = (out_i[1:] != out_i[:-1]) | (out_j[1:] != out_j[:-1])
    starts = np.flatnonzero(head)

    data = np.add.reduceat(prods, starts)
    indices = out_j[starts]
    rows = out_i[starts]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=n_rows))
    return indptr, indices, data


def hadamard_numpy(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
    """Elementwise product of two same-shape CSR matrices."""
    if a_indices.shape[0] == 0 or b_indices.shape[0] == 0:
        return _empty_csr(n_rows)
    a_rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(a_indptr))
    b_rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(b_indptr))
    a_keys = a_rows * n_cols + a_indices
    b_keys = b_rows * n_cols + b_indices
    common, ia, ib = np.intersect1d(a_keys, b_keys, assume_unique=True, return_indices=True)
    if common.shape[0] == 0:
        return _empty_csr(n_rows)
    data = a_data[ia] * b_data[ib]
    rows = common // n_cols
    indices = common % n_cols
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=n_rows))
    return indptr, indices, data


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if BACKEND == "numba":

    @njit(cache=True)
    def _spgemm_jit(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
        marker = np.full(n_cols, -1, dtype=np.int64)
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        for i in range(n_rows):
            count = 0
            for pa in range(a_indptr[i], a_indptr[i + 1]):
                k = a_indices[pa]
                for pb in range(b_indptr[k], b_indptr[k + 1]):
                    j = b_indices[pb]
                    if marker[j] != i:
                        marker[j] = i
                        count += 1
            indptr[i + 1] = indptr[i] + count

        nnz = indptr[n_rows]
        indices = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz, dtype=np.float64)
        acc = np.zeros(n_cols, dtype=np.float64)
        seen = np.full(n_cols, -1, dtype=np.int64)
        touched = np.empty(n_cols, dtype=np.int64)
        for i in range(n_rows):
            n_touched = 0
            for pa in range(a_indptr[i], a_indptr[i + 1]):
                k = a_indices[pa]
                va = a_data[pa]
                for pb in range(b_indptr[k], b_indptr[k + 1]):
                    j = b_indices[pb]
                    if seen[j] != i:
                        seen[j] = i
                        acc[j] = va * b_data[pb]
                        touched[n_touched] = j
                        n_touched += 1
                    else:
                        acc[j] += va * b_data[pb]
            cols = np.sort(touched[:n_touched])
            base = indptr[i]
            for t in range(n_touched):
                indices[base + t] = cols[t]
                data[base + t] = acc[cols[t]]
        return indptr, indices, data

    @njit(cache=True)
    def _hadamard_jit(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
        nnz = 0
        for i in range(n_rows):
            pa = a_indptr[i]
            pb = b_indptr[i]
            ea = a_indptr[i + 1]
            eb = b_indptr[i + 1]
            while pa < ea and pb < eb:
                ja = a_indices[pa]
                jb = b_indices[pb]
                if ja == jb:
                    nnz += 1
                    pa += 1
                    pb += 1
                elif ja < jb:
                    pa += 1
                else:
                    pb += 1

        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        indices = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz, dtype=np.float64)
        out = 0
        for i in range(n_rows):
            pa = a_indptr[i]
            pb = b_indptr[i]
            ea = a_indptr[i + 1]
            eb = b_indptr[i + 1]
            while pa < ea and pb < eb:
                ja = a_indices[pa]
                jb = b_indices[pb]
                if ja == jb:
                    indices[out] = ja
                    data[out] = a_data[pa] * b_data[pb]
                    out += 1
                    pa += 1
                    pb += 1
                elif ja < jb:
                    pa += 1
                else:
                    pb += 1
            indptr[i + 1] = out
        return indptr, indices, data

    def spgemm_numba(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
        return _spgemm_jit(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols)

    def hadamard_numba(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols):
        return _hadamard_jit(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_rows, n_cols)

    spgemm = spgemm_numba
    hadamard = hadamard_numba
else:
    spgemm = spgemm_numpy
    hadamard = hadamard_numpy
