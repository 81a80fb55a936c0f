"""Sparse assembly of face-weighted 5-point operators on a masked box.

For a vector of face weights ``w`` the operator

    (K_w x)_p = sum over the four faces f of p:  w_f / h_f^2 * (x_p - x_q(f))

is ``-div(w grad x)`` at every unknown node ``p``.  It is symmetric
positive definite on the unknowns once the known neighbours ``q`` are moved
to the right-hand side, and it is linear in ``w``.  The sparsity pattern
depends only on the mask, so it is computed once and every later assembly
only fills in the values.

Face numbering on an ``(nr, nc)`` box: x-faces (between ``(i, j)`` and
``(i+1, j)``) come first in C order of an ``(nr-1, nc)`` array, followed by
y-faces (between ``(i, j)`` and ``(i, j+1)``) in C order of ``(nr, nc-1)``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinearSolveError(RuntimeError):
    """The linear solver did not reach the requested tolerance."""


#: largest system the dense fallback accepts (a 32x32 interior)
DENSE_LIMIT = 32 * 32


def unknown_index(interior: np.ndarray) -> np.ndarray:
    """Map box nodes to unknown numbers; known nodes get -1."""
    idx = np.full(interior.shape, -1, dtype=np.int64)
    idx[interior] = np.arange(int(interior.sum()))
    return idx


def faces_from_arrays(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    return np.concatenate([np.ravel(cx), np.ravel(cy)])


def _csr_pattern(rows: np.ndarray, cols: np.ndarray, shape):
    order = np.lexsort((cols, rows))
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return order, cols[order].astype(np.int32), np.cumsum(indptr).astype(np.int32)


class BoxStencil:
    """Precomputed 5-point stencil of the unknown nodes of a masked box."""

    def __init__(self, interior: np.ndarray, dx: float = 1.0, dy: float = 1.0):
        interior = np.asarray(interior, dtype=bool)
        nr, nc = interior.shape
        ii, jj = np.nonzero(interior)
        if ii.size and (ii.min() == 0 or jj.min() == 0 or ii.max() == nr - 1 or jj.max() == nc - 1):
            raise ValueError("unknown nodes must not touch the edge of the box")
        self.interior = interior
        self.n = ii.size
        self.n_faces = (nr - 1) * nc + nr * (nc - 1)
        uidx = unknown_index(interior)
        kidx = np.full(interior.shape, -1, dtype=np.int64)
        kidx[~interior] = np.arange(int((~interior).sum()))
        self.n_known = int((~interior).sum())

        nfx = (nr - 1) * nc
        nbr = [(ii + 1, jj), (ii - 1, jj), (ii, jj + 1), (ii, jj - 1)]
        faces = [ii * nc + jj, (ii - 1) * nc + jj, nfx + ii * (nc - 1) + jj, nfx + ii * (nc - 1) + jj - 1]
        scale = [1.0 / dx**2, 1.0 / dx**2, 1.0 / dy**2, 1.0 / dy**2]
        self._faces = np.stack(faces)                     # (4, n)
        self._scale = np.array(scale)[:, None]            # (4, 1)

        p = np.arange(self.n)
        uu_rows, uu_cols, uu_src = [p], [p], [np.full(self.n, -1)]
        uk_rows, uk_cols, uk_src = [], [], []
        for k, (a, b) in enumerate(nbr):
            un = uidx[a, b]
            is_u = un >= 0
            uu_rows.append(p[is_u]); uu_cols.append(un[is_u]); uu_src.append(k * self.n + p[is_u])
            uk_rows.append(p[~is_u]); uk_cols.append(kidx[a, b][~is_u]); uk_src.append(k * self.n + p[~is_u])
        self._uu_src = np.concatenate(uu_src)
        self._uk_src = np.concatenate(uk_src)
        r, c = np.concatenate(uu_rows), np.concatenate(uu_cols)
        self._uu_order, self._uu_indices, self._uu_indptr = _csr_pattern(r, c, (self.n, self.n))
        r, c = np.concatenate(uk_rows), np.concatenate(uk_cols)
        self._uk_order, self._uk_indices, self._uk_indptr = _csr_pattern(r, c, (self.n, self.n_known))

    def assemble(self, shift: float, face_weights) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Return ``(A_uu, A_uk)`` for ``A = shift * Id + K_w``.

        ``face_weights`` is a scalar or a vector of length ``n_faces``.
        """
        w = np.broadcast_to(np.asarray(face_weights, dtype=float), (self.n_faces,))
        coeff = (w[self._faces] * self._scale).ravel()     # (4n,) by neighbour slot
        diag = shift + coeff.reshape(4, self.n).sum(axis=0)
        raw_uu = np.where(self._uu_src < 0, 0.0, -coeff[np.maximum(self._uu_src, 0)])
        raw_uu[:self.n] = diag
        a_uu = sp.csr_matrix((raw_uu[self._uu_order], self._uu_indices, self._uu_indptr), shape=(self.n, self.n))
        raw_uk = -coeff[self._uk_src]
        a_uk = sp.csr_matrix((raw_uk[self._uk_order], self._uk_indices, self._uk_indptr),
                             shape=(self.n, self.n_known))
        return a_uu, a_uk


def solve_spd(A: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None, method: str = "cg",
              tol: float = 1e-8, maxiter: int = 1000) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    method: ``cg`` (Jacobi-preconditioned conjugate gradients to relative
    residual ``tol``), ``direct`` (sparse LU) or ``dense`` (LAPACK, at most
    ``DENSE_LIMIT`` unknowns).
    """
    if b.size == 0:
        return np.zeros(0)
    if method == "cg":
        M = sp.diags(1.0 / A.diagonal())
        x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            raise LinearSolveError(f"CG did not converge in {maxiter} iterations")
    elif method == "direct":
        x = spla.spsolve(A.tocsc(), b)
    elif method == "dense":
        if A.shape[0] > DENSE_LIMIT:
            raise ValueError(f"dense fallback limited to {DENSE_LIMIT} unknowns")
        x = np.linalg.solve(A.toarray(), b)
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    return x


class FactorizedSPD:
    """A reusable sparse LU factorization (the Poisson matrix never changes)."""

    def __init__(self, A: sp.spmatrix):
        self.A = A.tocsc()
        self._lu = spla.splu(self.A) if A.shape[0] else None

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.zeros(0)
        return self._lu.solve(b)
