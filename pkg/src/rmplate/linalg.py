"""Sparse solves for semidefinite forms with a known kernel and a few constraints.

The block system

    [A  C^T] [x]   [f]
    [C   D ] [m] = [g]

with A symmetric positive semidefinite, ker A spanned by the columns of
``kernel`` and C having few (dense) rows, is solved by factorising A with
one entry per kernel vector pinned to zero.  That matrix is definite and
sparse, so a fill-reducing ordering works well; the dense rows and the
kernel are then handled by a small dense system.
"""

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class FactorError(RuntimeError):
    pass


def pin_indices(kernel):
    """Indices P such that kernel[P, :] is well conditioned."""
    if kernel.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    _, _, piv = sla.qr(kernel.T, mode="economic", pivoting=True)
    return np.sort(piv[: kernel.shape[1]])


class PinnedFactor:
    """Factorisation of A with the kernel removed by pinning."""

    def __init__(self, A, kernel=None):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        self.n = n
        self.kernel = np.zeros((n, 0)) if kernel is None else np.asarray(kernel, dtype=float).reshape(n, -1)
        self.pins = pin_indices(self.kernel)
        self.free = np.setdiff1d(np.arange(n), self.pins)
        sub = A[self.free][:, self.free].tocsc()
        try:
            self.lu = spla.splu(sub)
        except RuntimeError as exc:
            raise FactorError(f"factorisation failed: {exc}") from exc

    def solve(self, r):
        """x with x[pins] = 0 and A x = r (exact when r is orthogonal to the kernel)."""
        r = np.asarray(r, dtype=float)
        x = np.zeros((self.n,) + r.shape[1:])
        x[self.free] = self.lu.solve(r[self.free])
        return x


class BlockSolver:
    """Solver for [A C^T; C D] with known ker A; D defaults to zero."""

    def __init__(self, A, C, kernel=None, D=None):
        self.A = sp.csr_matrix(A)
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.k = self.C.shape[0] if self.C.size else 0
        self.fac = PinnedFactor(A, kernel)
        K = self.fac.kernel
        self.p = K.shape[1]
        self.D = np.zeros((self.k, self.k)) if D is None else np.asarray(D, dtype=float)
        if self.k:
            self.ECt = self.fac.solve(self.C.T)
            # unknowns (m, c): K^T C^T m = K^T f ;  (D - C E C^T) m + C K c = g - C E f
            top = np.hstack([K.T @ self.C.T, np.zeros((self.p, self.p))])
            bot = np.hstack([self.D - self.C @ self.ECt, self.C @ K])
            self.small = np.vstack([top, bot])
        else:
            self.small = np.zeros((self.p, self.p))
        if self.k < self.p:
            raise FactorError("fewer constraint rows than kernel vectors")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                self.small_lu = sla.lu_factor(self.small) if self.small.size else None
        except (ValueError, sla.LinAlgError, sla.LinAlgWarning) as exc:
            raise FactorError(f"constraint system singular: {exc}") from exc
        if self.small.size and np.linalg.cond(self.small) > 1e14:
            raise FactorError("constraints do not fix the kernel")

    def solve(self, f, g=None):
        f = np.asarray(f, dtype=float)
        g = np.zeros(self.k) if g is None else np.asarray(g, dtype=float)
        K = self.fac.kernel
        if not self.k:
            return self.fac.solve(f), np.zeros(0)
        Ef = self.fac.solve(f)
        rhs = np.concatenate([K.T @ f, g - self.C @ Ef])
        sol = sla.lu_solve(self.small_lu, rhs)
        m, c = sol[: self.k], sol[self.k :]
        x = Ef - self.ECt @ m + K @ c
        return x, m

    def matvec(self, x, m):
        return self.A @ x + self.C.T @ m, self.C @ x + self.D @ m
