"""Zero-forcing decomposition: per-user null-space bases and effective channels."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .channels import ChannelSet, Scenario
from .errors import InfeasibleZf

__all__ = [
    "ZfContext",
    "stack_other_channels",
    "null_space_basis",
    "build_zf_context",
    "context_from_bases",
]


@dataclass
class ZfContext:
    """Per-user precoding subspaces and the channels seen through them.

    ``Vbar[k]`` (N x d_k) has orthonormal columns and every precoder of user k
    lives in its range. ``Heff[k]`` (n_k x d_k) is ``H_k Vbar[k]``, and
    ``Geff[k][m]`` (n_pu_m x d_k) is ``G_m Vbar[k]``.
    """

    Vbar: List[np.ndarray]
    Heff: List[np.ndarray]
    Geff: List[List[np.ndarray]]

    @property
    def K(self) -> int:
        return len(self.Vbar)

    @property
    def M(self) -> int:
        return len(self.Geff[0]) if self.Geff else 0

    @property
    def N(self) -> int:
        return self.Vbar[0].shape[0]

    @property
    def dims(self) -> List[int]:
        return [V.shape[1] for V in self.Vbar]

    @property
    def streams(self) -> List[int]:
        return [H.shape[0] for H in self.Heff]


def stack_other_channels(channels: ChannelSet, k: int) -> np.ndarray:
    """Rows of every SU channel except user ``k``, in ascending user order."""
    K = len(channels.H)
    if not 0 <= k < K:
        raise IndexError(f"user index {k} out of range for K={K}")
    others = [H for j, H in enumerate(channels.H) if j != k]
    if not others:
        return np.zeros((0, channels.N), dtype=complex)
    return np.vstack(others)


def null_space_basis(A: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Orthonormal basis of ker(A) from a full SVD.

    Singular values below ``max(p, N) * eps * sigma_max`` count as zero. If
    ``dim`` is given it is the kernel dimension the caller needs; fewer
    available columns raise :class:`InfeasibleZf`. When A is rank deficient
    the kernel is larger than ``dim`` and all of it is returned, with a
    warning.
    """
    A = np.atleast_2d(np.asarray(A))
    p, N = A.shape
    if p == 0:
        basis = np.eye(N, dtype=complex)
    else:
        _, s, Vh = np.linalg.svd(A, full_matrices=True)
        tol = max(p, N) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.count_nonzero(s > tol))
        basis = Vh[rank:].conj().T
    if dim is not None:
        if basis.shape[1] < dim:
            raise InfeasibleZf(
                f"kernel has dimension {basis.shape[1]}, need {dim}")
        if basis.shape[1] > dim:
            warnings.warn(
                f"rank-deficient stack: kernel dimension {basis.shape[1]} > {dim}",
                RuntimeWarning, stacklevel=2)
    return basis


def context_from_bases(channels: ChannelSet, bases: Sequence[np.ndarray]) -> ZfContext:
    """Effective channels for arbitrary orthonormal per-user bases."""
    Vbar = [np.asarray(V, dtype=complex) for V in bases]
    Heff = [H @ V for H, V in zip(channels.H, Vbar)]
    Geff = [[G @ V for G in channels.G] for V in Vbar]
    return ZfContext(Vbar=Vbar, Heff=Heff, Geff=Geff)


def build_zf_context(scenario: Scenario, channels: ChannelSet) -> ZfContext:
    """Null out inter-user interference: user k transmits in ker(H_bar_k)."""
    bases = []
    for k, (nk, nb) in enumerate(zip(scenario.n, scenario.nbar)):
        if nb < nk:
            raise InfeasibleZf(f"SU {k}: null space dimension {nb} < {nk} streams")
        bases.append(null_space_basis(stack_other_channels(channels, k), dim=nb))
    return context_from_bases(channels, bases)
