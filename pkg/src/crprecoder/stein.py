"""
Solver for the Hermitian Stein equations ``t * Q Hd X Hd Q + X = B``.

With ``X = Q^{1/2} Y Q^{1/2}`` and ``S = Q^{1/2} Hd Q^{1/2} = U diag(d) U^H``
the equation decouples entrywise in the eigenbasis of S:
``Y~_ij = B~_ij / (1 + t d_i d_j)``. One eigendecomposition serves any number
of right-hand sides, and every denominator is >= 1.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveDefinite

__all__ = ["SteinFactor", "stein_factorize", "stein_solve"]

EIG_FLOOR = 1e-14


def _hermitize(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2).conj())


class SteinFactor:
    """Reusable factorization of ``X -> t * Q Hd X Hd Q + X``.

    Immutable after construction; :meth:`solve` is pure.
    """

    __slots__ = ("t", "d", "_Z", "_W", "_denom")

    def __init__(self, Q, Hdot, t):
        Q = np.asarray(Q)
        Hdot = np.asarray(Hdot)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Hdot.shape != Q.shape:
            raise ValueError("Q and Hdot must be square and of equal size")
        if t < 0:
            raise ValueError("t must be nonnegative")
        q, V = np.linalg.eigh(_hermitize(Q))
        if not np.all(np.isfinite(q)) or q[0] <= 0.0:
            raise NotPositiveDefinite(f"Q has smallest eigenvalue {q[0]:.3e}")
        q = np.maximum(q, EIG_FLOOR * q[-1])
        sq = np.sqrt(q)
        Qh = (V * sq) @ V.conj().T
        Qih = (V / sq) @ V.conj().T
        d, U = np.linalg.eigh(_hermitize(Qh @ Hdot @ Qh))
        d = np.clip(d, 0.0, None)
        self.t = float(t)
        self.d = d
        self._Z = Qh @ U
        self._W = Qih @ U
        self._denom = 1.0 + self.t * np.outer(d, d)

    @property
    def n(self) -> int:
        return self.d.size

    def solve(self, B):
        """Solve for one (n x n) or a stack (..., n, n) of right-hand sides."""
        B = np.asarray(B)
        if B.shape[-2:] != (self.n, self.n):
            raise ValueError(f"right-hand side shape {B.shape} does not match n={self.n}")
        Bt = self._W.conj().T @ B @ self._W
        X = self._Z @ (Bt / self._denom) @ self._Z.conj().T
        return _hermitize(X)


def stein_factorize(Q, Hdot, t) -> SteinFactor:
    """Factor the Stein operator for a PD ``Q``, PSD ``Hdot`` and ``t >= 0``."""
    return SteinFactor(Q, Hdot, t)


def stein_solve(factor: SteinFactor, B) -> np.ndarray:
    """Hermitian solution X of ``t * Q Hd X Hd Q + X = B``."""
    return factor.solve(B)
