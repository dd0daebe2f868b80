"""
Reference schemes and the dense Newton oracle.

* Scheme 1 puts every SU precoder in the joint null space of the other SUs
  and all PUs, so no interference constraint is left to enforce.
* Scheme 2 restricts user k to the n_k dominant right singular vectors of its
  effective channel and optimizes the covariance inside that subspace under
  the original constraints.
* :func:`naive_newton_oracle` runs the same barrier loop as the structured
  solver but computes each Newton step from the full Jacobian of the KKT
  residual, built column by column with Lambda formed explicitly.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .channels import ChannelSet, Scenario
from .duality import PrecoderSolution, design_precoders, recover_precoders, solution_from_covariances
from .errors import InfeasibleZf, SizeGuard
from .saddle import (DualIterate, NewtonStep, SaddleProblem, SolverOptions,
                     build_layout)
from .zf import (ZfContext, build_zf_context, context_from_bases,
                 null_space_basis, stack_other_channels)

__all__ = [
    "scheme1_full_zf",
    "scheme2_svd_zf",
    "proposed",
    "naive_newton_oracle",
    "dense_newton_step",
    "kkt_residual_vector",
    "oracle_variable_count",
    "hermitian_to_vec",
    "vec_to_hermitian",
]

ORACLE_MAX_VARIABLES = 200


def proposed(scenario: Scenario, channels: ChannelSet,
             options: Optional[SolverOptions] = None) -> PrecoderSolution:
    return design_precoders(scenario, channels, options)


def _row_compress(H):
    """Equivalent wide channel when H has more rows than columns.

    ``log|I + H S H^H|`` depends on H only through ``H^H H``, so the
    d x d factor ``diag(s) V^H`` gives the same rate.
    """
    if H.shape[0] <= H.shape[1]:
        return H
    _, s, Vh = np.linalg.svd(H, full_matrices=False)
    return s[:, None] * Vh


def scheme1_full_zf(scenario: Scenario, channels: ChannelSet,
                    options: Optional[SolverOptions] = None) -> PrecoderSolution:
    """ZF against the other SUs and every PU, then optimal PAPC allocation."""
    pu = list(channels.G)
    bases = []
    for k in range(scenario.K):
        A = np.vstack([stack_other_channels(channels, k)] + pu)
        dim = scenario.N - (sum(scenario.n) - scenario.n[k]) - sum(scenario.n_pu)
        if dim < 1:
            raise InfeasibleZf(f"SU {k}: extended null space is empty ({dim})")
        bases.append(null_space_basis(A, dim=dim))
    full = context_from_bases(channels, bases)
    reduced = ZfContext(Vbar=full.Vbar, Heff=[_row_compress(H) for H in full.Heff],
                        Geff=[[] for _ in bases])
    inner = scenario.replace(n_pu=(), I=(), per_antenna=scenario.per_antenna)
    layout = build_layout(reduced, inner)
    saddle, trace = SaddleProblem(reduced, layout).solve(options)
    sol = recover_precoders(reduced, inner, saddle, layout=layout, trace=trace)
    return solution_from_covariances(full, sol.S, saddle=saddle, trace=trace, info=sol.info)


def scheme2_svd_zf(scenario: Scenario, channels: ChannelSet,
                   options: Optional[SolverOptions] = None,
                   ctx: Optional[ZfContext] = None) -> PrecoderSolution:
    """Precoders ``Vbar_k Vdot_k Phi_k^{1/2}`` with Vdot_k from the compact SVD of Hk."""
    ctx = ctx if ctx is not None else build_zf_context(scenario, channels)
    bases = []
    for V, H in zip(ctx.Vbar, ctx.Heff):
        _, _, Vh = np.linalg.svd(H, full_matrices=False)
        bases.append(V @ Vh[:H.shape[0]].conj().T)
    sub = context_from_bases(channels, bases)
    sol = design_precoders(scenario, channels, options, ctx=sub)
    # report covariances in the full ZF coordinates so they compare with the proposed design
    S_full = [Vd @ S @ Vd.conj().T for Vd, S in
              ((V.conj().T @ B, S) for V, B, S in zip(ctx.Vbar, bases, sol.S))]
    out = solution_from_covariances(ctx, S_full, saddle=sol.saddle, trace=sol.trace,
                                    info=sol.info)
    out.info["Phi"] = sol.S
    return out


# -- dense oracle ------------------------------------------------------------

def hermitian_to_vec(X: np.ndarray) -> np.ndarray:
    """n^2 real coordinates: diagonal, then real and imaginary upper triangle."""
    iu = np.triu_indices(X.shape[0], 1)
    return np.concatenate([np.diag(X).real, X[iu].real, X[iu].imag])


def vec_to_hermitian(v: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    X = np.diag(v[:n].astype(complex))
    X[iu] = v[n:n + m] + 1j * v[n + m:n + 2 * m]
    X[(iu[1], iu[0])] = v[n:n + m] - 1j * v[n + m:n + 2 * m]
    return X


class _DenseKkt:
    """KKT residual of the barrier problem and its exact Jacobian, written
    directly in terms of the N x N matrix Lambda."""

    def __init__(self, ctx: ZfContext, scenario: Scenario, mode: Optional[str] = None):
        self.ctx = ctx
        self.mode = (mode or scenario.power_mode).upper()
        N = ctx.N
        self.N = N
        # constraint matrices A_j with Lambda = sum_j psi_j A_j
        if self.mode == "SPC":
            A = [np.eye(N, dtype=complex)]
            p = [scenario.P_total]
        else:
            A = []
            for i in range(N):
                Ai = np.zeros((N, N), dtype=complex)
                Ai[i, i] = 1.0
                A.append(Ai)
            p = list(scenario.per_antenna)
        # per-user projections: Vbar_k^H A_j Vbar_k, then G~_mk^H G~_mk for each PU
        self.A = A
        self.n_power = len(A)
        self.p = np.asarray(p + list(scenario.I), float)
        self.P = float(scenario.P_total)
        self.Bk = []
        for k, V in enumerate(ctx.Vbar):
            Bs = [V.conj().T @ Aj @ V for Aj in A]
            Bs += [G.conj().T @ G for G in ctx.Geff[k]]
            self.Bk.append(np.asarray(Bs))
        self.sizes = [H.shape[0] for H in ctx.Heff]
        self.J = self.p.size

    @property
    def n_vars(self) -> int:
        return sum(n * n for n in self.sizes) + self.J + 2

    def _parts(self, it):
        out = []
        for k, H in enumerate(self.ctx.Heff):
            Om = np.tensordot(it.psi, self.Bk[k], axes=1)
            Pi = Om + H.conj().T @ it.Q[k] @ H
            out.append((np.linalg.inv(Om), np.linalg.inv(Pi)))
        return out

    def residual(self, it: DualIterate) -> np.ndarray:
        t = it.t
        parts = self._parts(it)
        rows = []
        g = np.zeros(self.J)
        for k, H in enumerate(self.ctx.Heff):
            Oi, Pi = parts[k]
            FQ = H @ Pi @ H.conj().T + np.linalg.inv(it.Q[k]) / t - it.mu1 * np.eye(H.shape[0])
            rows.append(hermitian_to_vec(0.5 * (FQ + FQ.conj().T)))
            g += np.einsum("jab,ba->j", self.Bk[k], Pi - Oi).real
        Fpsi = g - 1.0 / (t * it.psi) + it.mu2 * self.p
        Fmu1 = self.P - sum(np.trace(Q).real for Q in it.Q)
        Fmu2 = self.P - self.p @ it.psi
        return np.concatenate(rows + [Fpsi, [Fmu1, Fmu2]])

    def jacobian(self, it: DualIterate) -> np.ndarray:
        t = it.t
        parts = self._parts(it)
        Qinv = [np.linalg.inv(Q) for Q in it.Q]
        cols = []
        for kq, n in enumerate(self.sizes):
            for a in range(n * n):
                e = np.zeros(n * n)
                e[a] = 1.0
                dQ = [np.zeros((m, m), complex) for m in self.sizes]
                dQ[kq] = vec_to_hermitian(e, n)
                cols.append(self._directional(it, parts, Qinv, dQ, np.zeros(self.J), 0.0, 0.0))
        for j in range(self.J):
            dpsi = np.zeros(self.J)
            dpsi[j] = 1.0
            cols.append(self._directional(it, parts, Qinv, None, dpsi, 0.0, 0.0))
        cols.append(self._directional(it, parts, Qinv, None, np.zeros(self.J), 1.0, 0.0))
        cols.append(self._directional(it, parts, Qinv, None, np.zeros(self.J), 0.0, 1.0))
        return np.column_stack(cols)

    def _directional(self, it, parts, Qinv, dQ, dpsi, dmu1, dmu2):
        t = it.t
        rows = []
        dg = np.zeros(self.J)
        dtr = 0.0
        for k, H in enumerate(self.ctx.Heff):
            n = H.shape[0]
            Oi, Pi = parts[k]
            dQk = dQ[k] if dQ is not None else np.zeros((n, n), complex)
            dOm = np.tensordot(dpsi, self.Bk[k], axes=1)
            dPi = dOm + H.conj().T @ dQk @ H
            dHdot = -H @ Pi @ dPi @ Pi @ H.conj().T
            dFQ = dHdot - Qinv[k] @ dQk @ Qinv[k] / t - dmu1 * np.eye(n)
            rows.append(hermitian_to_vec(0.5 * (dFQ + dFQ.conj().T)))
            dinv = -Pi @ dPi @ Pi + Oi @ dOm @ Oi
            dg += np.einsum("jab,ba->j", self.Bk[k], dinv).real
            dtr += np.trace(dQk).real
        dFpsi = dg + dpsi / (t * it.psi ** 2) + dmu2 * self.p
        return np.concatenate(rows + [dFpsi, [-dtr, -self.p @ dpsi]])

    def step(self, it: DualIterate) -> NewtonStep:
        Jm = self.jacobian(it)
        dx = np.linalg.solve(Jm, -self.residual(it))
        dQ = []
        off = 0
        for n in self.sizes:
            dQ.append(vec_to_hermitian(dx[off:off + n * n], n))
            off += n * n
        dpsi = dx[off:off + self.J]
        return NewtonStep(dQ, dpsi, float(dx[off + self.J]), float(dx[off + self.J + 1]))


def oracle_variable_count(ctx: ZfContext, scenario: Scenario) -> int:
    return _DenseKkt(ctx, scenario).n_vars


def kkt_residual_vector(ctx: ZfContext, scenario: Scenario, it: DualIterate) -> np.ndarray:
    """Stacked real KKT residual used by the dense oracle (zero at a centered point)."""
    return _DenseKkt(ctx, scenario).residual(it)


def dense_newton_step(ctx: ZfContext, scenario: Scenario, it: DualIterate) -> NewtonStep:
    """Newton step from the full (sum n_k^2 + J + 2)-square Jacobian."""
    return _DenseKkt(ctx, scenario).step(it)


def naive_newton_oracle(ctx: ZfContext, scenario: Scenario,
                        options: Optional[SolverOptions] = None):
    """Barrier solve with dense Newton steps; returns ``(DualIterate, trace)``."""
    dense = _DenseKkt(ctx, scenario)
    if dense.n_vars > ORACLE_MAX_VARIABLES:
        raise SizeGuard(f"{dense.n_vars} variables exceed the oracle limit "
                        f"of {ORACLE_MAX_VARIABLES}")
    prob = SaddleProblem(ctx, build_layout(ctx, scenario))
    return prob.solve(options, step_fn=dense.step)
