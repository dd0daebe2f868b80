"""Map a MAC-side saddle point back to BC transmit covariances and precoders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .channels import Scenario
from .errors import IllConditioned
from .saddle import (ConvergenceTrace, DualIterate, MultiplierLayout,
                     SaddleProblem, SolverOptions, build_layout)
from .zf import ZfContext, build_zf_context

__all__ = [
    "PrecoderSolution",
    "recover_precoders",
    "bc_sum_rate",
    "factor_precoder",
    "solution_from_covariances",
    "numerical_rank",
    "feasibility_scale",
    "design_precoders",
]

OMEGA_FLOOR = 1e-14
RANK_TOL = 1e-8


@dataclass
class PrecoderSolution:
    """BC-side result: covariances in the ZF subspaces and full precoders."""

    S: List[np.ndarray]
    T: List[np.ndarray]
    rate_total: float
    rates: np.ndarray
    per_antenna_power: np.ndarray
    interference: np.ndarray
    saddle: Optional[DualIterate] = None
    trace: Optional[ConvergenceTrace] = None
    info: dict = field(default_factory=dict)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.per_antenna_power))

    def slacks(self, scenario: Scenario):
        """Remaining per-antenna power and interference margins."""
        return (np.asarray(scenario.per_antenna) - self.per_antenna_power,
                np.asarray(scenario.I) - self.interference)


def numerical_rank(S: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    w = np.linalg.eigvalsh(S)
    if w.size == 0 or w[-1] <= 0.0:
        return 0
    return int(np.count_nonzero(w > rel_tol * w[-1]))


def factor_precoder(S: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Tall factor ``Tb`` with ``Tb Tb^H = S``; one column per retained eigenvalue."""
    w, U = np.linalg.eigh(0.5 * (S + S.conj().T))
    if w.size == 0 or w[-1] <= 0.0:
        return np.zeros((S.shape[0], 0), dtype=complex)
    keep = w > rank_tol * w[-1]
    return U[:, keep] * np.sqrt(w[keep])


def _logdet_rates(ctx: ZfContext, S):
    rates = []
    for H, Sk in zip(ctx.Heff, S):
        A = np.eye(H.shape[0]) + H @ Sk @ H.conj().T
        rates.append(np.linalg.slogdet(A)[1])
    return np.asarray(rates)


def bc_sum_rate(ctx: ZfContext, S) -> float:
    """``sum_k log |I + Hk S_k Hk^H|`` in nats."""
    if len(S) != ctx.K:
        raise ValueError(f"expected {ctx.K} covariances, got {len(S)}")
    return float(np.sum(_logdet_rates(ctx, S)))


def solution_from_covariances(ctx: ZfContext, S, **extra) -> PrecoderSolution:
    """Rates, antenna powers and PU interference for given covariances."""
    S = [0.5 * (Sk + Sk.conj().T) for Sk in S]
    Tbar = [factor_precoder(Sk) for Sk in S]
    T = [V @ Tb for V, Tb in zip(ctx.Vbar, Tbar)]
    power = np.zeros(ctx.N)
    for V, Sk in zip(ctx.Vbar, S):
        power += np.einsum("nd,de,ne->n", V, Sk, V.conj()).real
    interference = np.zeros(ctx.M)
    for k, Sk in enumerate(S):
        for m, G in enumerate(ctx.Geff[k]):
            interference[m] += np.trace(G @ Sk @ G.conj().T).real
    rates = _logdet_rates(ctx, S)
    return PrecoderSolution(S=S, T=T, rate_total=float(rates.sum()), rates=rates,
                            per_antenna_power=power, interference=interference, **extra)


def _inv_sqrt(A, k):
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    if w[-1] <= 0.0 or not np.all(np.isfinite(w)):
        raise IllConditioned(f"Omega_{k} is not positive definite")
    w = np.maximum(w, OMEGA_FLOOR * w[-1])
    return (U / np.sqrt(w)) @ U.conj().T


def feasibility_scale(sol: PrecoderSolution, scenario: Scenario) -> float:
    """Largest c <= 1 such that ``c * S`` meets every power and interference limit."""
    ratios = [1.0]
    if scenario.power_mode == "SPC":
        ratios.append(sol.total_power / scenario.P_total)
    else:
        ratios.extend(sol.per_antenna_power / np.asarray(scenario.per_antenna))
    if scenario.M:
        ratios.extend(sol.interference / np.asarray(scenario.I))
    return 1.0 / max(ratios)


def recover_precoders(ctx: ZfContext, scenario: Scenario, saddle: DualIterate,
                      layout: Optional[MultiplierLayout] = None,
                      trace: Optional[ConvergenceTrace] = None,
                      enforce_feasibility: bool = True) -> PrecoderSolution:
    """BC covariances from the MAC saddle point.

    With ``Omega_k^{-1/2}`` and the compact SVD ``Hk Omega_k^{-1/2} = U D V^H``
    (exactly n_k triplets), ``S_k = Omega_k^{-1/2} V U^H Q_k U V^H Omega_k^{-1/2}``.

    A centered point at finite t can overshoot a limit by O(1/t). Unless
    ``enforce_feasibility`` is off, all S_k are then shrunk by the common
    factor that makes the worst constraint tight; ``info`` records the factor
    and the unscaled rate.
    """
    layout = layout if layout is not None else build_layout(ctx, scenario)
    prob = SaddleProblem(ctx, layout)
    S = []
    for k, (H, Q) in enumerate(zip(ctx.Heff, saddle.Q)):
        Oih = _inv_sqrt(prob.omega(saddle.psi, k), k)
        U, _, Vh = np.linalg.svd(H @ Oih, full_matrices=False)
        nk = H.shape[0]
        U, Vh = U[:, :nk], Vh[:nk]
        A = Oih @ Vh.conj().T @ U.conj().T
        S.append(A @ Q @ A.conj().T)
    sol = solution_from_covariances(ctx, S, saddle=saddle, trace=trace)
    sol.info["rate_unscaled"] = sol.rate_total
    sol.info["scale"] = 1.0
    if enforce_feasibility:
        c = feasibility_scale(sol, scenario)
        if c < 1.0:
            sol = solution_from_covariances(ctx, [c * Sk for Sk in S], saddle=saddle,
                                            trace=trace, info=dict(sol.info, scale=c))
    return sol


def design_precoders(scenario: Scenario, channels, options: Optional[SolverOptions] = None,
                     ctx: Optional[ZfContext] = None) -> PrecoderSolution:
    """ZF context, saddle point and BC recovery in one call."""
    ctx = ctx if ctx is not None else build_zf_context(scenario, channels)
    layout = build_layout(ctx, scenario)
    saddle, trace = SaddleProblem(ctx, layout).solve(options)
    return recover_precoders(ctx, scenario, saddle, layout=layout, trace=trace)
