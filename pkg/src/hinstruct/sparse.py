"""Minimal CSR sparse matrix used for adjacency and score matrices.

Values are nonnegative float64; indices int64. Matrices are immutable after
construction and safe to share between threads. Heavy operations dispatch to
:mod:`hinstruct.kernels`, which picks the numba or pure-numpy backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class MatrixBlowupError(RuntimeError):
    """Raised when a chain product would exceed the configured work budget."""


DEFAULT_FLOP_BUDGET = 50_000_000


@dataclass(frozen=True)
class SparseMatrix:
    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    # -- constructors -------------------------------------------------

    @classmethod
    def from_triplets(cls, rows, cols, triplets, collapse=False):
        """Build from (row, col, value) triplets.

        Duplicate coordinates are an error unless ``collapse`` is set, in
        which case each duplicated cell collapses to value 1 (used when
        ingesting edge lists where repeated interactions count once).
        Zero-valued entries are dropped.
        """
        if rows < 0 or cols < 0:
            raise ValueError("negative matrix dimensions")
        trips = list(triplets)
        if not trips:
            return cls.zeros(rows, cols)
        r = np.asarray([t[0] for t in trips], dtype=np.int64)
        c = np.asarray([t[1] for t in trips], dtype=np.int64)
        v = np.asarray([t[2] for t in trips], dtype=np.float64)
        if r.size and (r.min() < 0 or r.max() >= rows):
            raise ValueError(f"row index out of range for {rows}x{cols} matrix")
        if c.size and (c.min() < 0 or c.max() >= cols):
            raise ValueError(f"column index out of range for {rows}x{cols} matrix")
        if np.any(v < 0):
            raise ValueError("negative values not allowed")
        keys = r * cols + c
        order = np.argsort(keys, kind="stable")
        keys, r, c, v = keys[order], r[order], c[order], v[order]
        dup = keys[1:] == keys[:-1]
        if np.any(dup):
            if not collapse:
                raise ValueError("duplicate (row, col) coordinate")
            keep = np.concatenate(([True], ~dup))
            r, c = r[keep], c[keep]
            v = np.ones(r.shape[0], dtype=np.float64)
        nz = v != 0.0
        r, c, v = r[nz], c[nz], v[nz]
        indptr = np.zeros(rows + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(np.bincount(r, minlength=rows))
        return cls(rows, cols, indptr, c.copy(), v.copy())

    @classmethod
    def from_dense(cls, array):
        array = np.asarray(array, dtype=np.float64)
        r, c = np.nonzero(array)
        return cls.from_triplets(
            array.shape[0], array.shape[1], zip(r.tolist(), c.tolist(), array[r, c].tolist())
        )

    @classmethod
    def zeros(cls, rows, cols):
        return cls(
            rows,
            cols,
            np.zeros(rows + 1, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )

    # -- views ---------------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def triplets(self):
        """Yield (row, col, value) in row-major order."""
        row_ids = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))
        for r, c, v in zip(row_ids.tolist(), self.indices.tolist(), self.data.tolist()):
            yield r, c, v

    def to_dense(self):
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        row_ids = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))
        out[row_ids, self.indices] = self.data
        return out

    def pick(self, pairs):
        """Values at the given (row, col) pairs; absent cells read 0."""
        out = np.zeros(len(pairs), dtype=np.float64)
        for q, (r, c) in enumerate(pairs):
            lo, hi = self.indptr[r], self.indptr[r + 1]
            pos = lo + np.searchsorted(self.indices[lo:hi], c)
            if pos < hi and self.indices[pos] == c:
                out[q] = self.data[pos]
        return out

    # -- algebra ---------------------------------------------------------

    def matmul(self, other: "SparseMatrix", flop_budget: int | None = DEFAULT_FLOP_BUDGET) -> "SparseMatrix":
        if self.cols != other.rows:
            raise ValueError(f"dimension mismatch: {self.cols} vs {other.rows}")
        flops = kernels.spgemm_flops(self.indptr, self.indices, other.indptr)
        if flop_budget is not None and flops > flop_budget:
            raise MatrixBlowupError(
                f"matrix blowup: product needs {flops} multiplies, budget {flop_budget}"
            )
        indptr, indices, data = kernels.spgemm(
            self.indptr, self.indices, self.data,
            other.indptr, other.indices, other.data,
            self.rows, other.cols,
        )
        return SparseMatrix(self.rows, other.cols, indptr, indices, data)

    def hadamard(self, other: "SparseMatrix") -> "SparseMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch for elementwise product")
        indptr, indices, data = kernels.hadamard(
            self.indptr, self.indices, self.data,
            other.indptr, other.indices, other.data,
            self.rows, self.cols,
        )
        return SparseMatrix(self.rows, self.cols, indptr, indices, data)

    def row_normalize(self) -> "SparseMatrix":
        """Scale each row to sum to 1; all-zero rows stay zero."""
        if self.nnz == 0:
            return self
        row_ids = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))
        sums = np.bincount(row_ids, weights=self.data, minlength=self.rows)
        denom = np.where(sums == 0.0, 1.0, sums)
        return SparseMatrix(self.rows, self.cols, self.indptr, self.indices, self.data / denom[row_ids])

    def transpose(self) -> "SparseMatrix":
        row_ids = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))
        order = np.lexsort((row_ids, self.indices))
        new_rows = self.indices[order]
        indptr = np.zeros(self.cols + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(np.bincount(new_rows, minlength=self.cols))
        return SparseMatrix(self.cols, self.rows, indptr, row_ids[order], self.data[order])

    def allclose(self, other: "SparseMatrix", rtol=1e-12, atol=0.0) -> bool:
        return (
            (self.rows, self.cols) == (other.rows, other.cols)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.allclose(self.data, other.data, rtol=rtol, atol=atol)
        )
