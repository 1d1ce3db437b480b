"""Sparse symmetric positive-definite factorization.

SuperLU is driven with a symmetric fill-reducing ordering and diagonal
pivoting only, so that ``P A P^T = L U`` with ``U = D L^T``.  The factor is
then exactly an LDL^T decomposition and ``L D^{1/2}`` is a Cholesky factor.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be SPD fails to factorize."""


class SparseCholesky:
    """Cholesky-style factorization of a sparse SPD matrix.

    Parameters
    ----------
    Q : sparse matrix
        Symmetric positive-definite matrix.
    ordering : str
        SuperLU column ordering; must be a symmetric one.
    """

    def __init__(self, Q, ordering: str = "MMD_AT_PLUS_A"):
        Q = sp.csc_matrix(Q)
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("matrix must be square")
        self.n = Q.shape[0]
        try:
            self._lu = splu(
                Q,
                permc_spec=ordering,
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:  # exactly singular
            raise NotPositiveDefiniteError(str(exc)) from exc
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotPositiveDefiniteError("factorization required off-diagonal pivoting")
        d = self._lu.U.diagonal()
        if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
            raise NotPositiveDefiniteError(
                f"non-positive pivot encountered (min pivot {d.min():.3e})"
            )
        self._d = d
        self._U = None
        # perm_r maps original row i to factor row perm_r[i]
        self.perm = self._lu.perm_r

    def logdet(self) -> float:
        return float(np.sum(np.log(self._d)))

    def solve(self, b):
        """Solve ``Q x = b`` for a vector or a dense matrix of right-hand sides."""
        b = np.asarray(b, dtype=float)
        return self._lu.solve(b)

    def solve_sqrt_t(self, z):
        """Return ``x`` with ``x = G^{-T} z`` where ``Q = G G^T``.

        For ``z`` standard normal, ``x`` has covariance ``Q^{-1}``.
        """
        z = np.asarray(z, dtype=float)
        if self._U is None:
            self._U = self._lu.U.tocsr()
        scale = np.sqrt(self._d)
        rhs = z * (scale[:, None] if z.ndim == 2 else scale)
        y = spsolve_triangular(self._U, rhs, lower=False)
        x = np.empty_like(y)
        x[...] = y[self.perm]
        return x

    def inverse_diagonal(self) -> np.ndarray:
        """Diagonal of ``Q^{-1}`` by the Takahashi recursion.

        Only entries of the inverse on the filled pattern of ``L`` are formed,
        working from the last column backwards::

            S[R, i] = -S[R, R] @ L[R, i]
            S[i, i] = 1/d_i - L[R, i] @ S[R, i]

        where ``R`` are the below-diagonal rows of column ``i``.
        """
        L = sp.csc_matrix(self._lu.L)
        L.sort_indices()
        n = self.n
        indptr, rows = L.indptr, L.indices
        keys = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr)) * n + rows
        vals = L.data
        sigma = np.zeros(len(rows))
        for i in range(n - 1, -1, -1):
            lo, hi = indptr[i], indptr[i + 1]
            # the first entry of each column is the unit diagonal
            R = rows[lo + 1:hi]
            if not len(R):
                sigma[lo] = 1.0 / self._d[i]
                continue
            l = vals[lo + 1:hi]
            big = np.maximum.outer(R, R).astype(np.int64)
            small = np.minimum.outer(R, R).astype(np.int64)
            pos = np.searchsorted(keys, small * n + big)
            M = sigma[pos]
            s = -(M @ l)
            sigma[lo + 1:hi] = s
            sigma[lo] = 1.0 / self._d[i] - l @ s
        diag = sigma[indptr[:-1]]
        return diag[self.perm]

    def inverse_diagonal_by_solves(self, block: int = 256) -> np.ndarray:
        """Diagonal of ``Q^{-1}`` by blocked solves (reference implementation)."""
        out = np.empty(self.n)
        for start in range(0, self.n, block):
            stop = min(start + block, self.n)
            E = np.zeros((self.n, stop - start))
            E[np.arange(start, stop), np.arange(stop - start)] = 1.0
            X = self.solve(E)
            out[start:stop] = X[np.arange(start, stop), np.arange(stop - start)]
        return out
