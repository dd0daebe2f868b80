"""
Rates of the primary system when secondary transmissions act as extra noise.

The primary BS has its own antenna array and serves each PU as one receiver
with ZF precoding under per-antenna power limits; its precoders come from
the same solver run with no protected receivers. A PU sees the secondary
signal as coloured Gaussian noise with covariance
``J_m = sum_k G_m T_k T_k^H G_m^H`` on top of unit thermal noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..baselines import proposed
from ..channels import Scenario, generate_channels
from ..duality import PrecoderSolution, solution_from_covariances
from ..errors import InfeasibleZf, PrecoderError
from ..saddle import SolverOptions
from ..zf import ZfContext, build_zf_context
from .experiment import ResultTable, aggregate, check_failures, db_to_linear, run_trials

__all__ = [
    "interference_covariance",
    "primary_rates",
    "primary_system_rate",
    "lambda_max_rescale",
    "PrimaryExperiment",
    "run_primary_experiment",
]

PRIMARY_STREAM = 1
PRIMARY_SCHEMES = ("trace", "lambda_max")


def interference_covariance(G: np.ndarray, precoders: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_k G T_k T_k^H G^H`` for one PU."""
    J = np.zeros((G.shape[0], G.shape[0]), dtype=complex)
    for T in precoders:
        GT = G @ T
        J += GT @ GT.conj().T
    return 0.5 * (J + J.conj().T)


def primary_rates(primary_channels, primary_precoders, interference) -> np.ndarray:
    """Per-PU rate ``log |I + (I + J_m)^{-1} F_m W_m W_m^H F_m^H|`` in nats."""
    rates = []
    for F, W, J in zip(primary_channels, primary_precoders, interference):
        noise = np.eye(F.shape[0]) + J
        FW = F @ W
        signal = FW @ FW.conj().T
        # log|noise + signal| - log|noise| avoids forming noise^{-1} explicitly
        rates.append(np.linalg.slogdet(noise + signal)[1] - np.linalg.slogdet(noise)[1])
    return np.asarray(rates, dtype=float)


def primary_system_rate(primary_channels, primary_precoders,
                        secondary_solution: PrecoderSolution, cross_channels) -> float:
    """Sum rate of the primary system, in nats, given the secondary precoders.

    Parameters
    ----------
    primary_channels : list of ndarray
        ``F_m`` (n_pu_m x N_primary), primary BS to PU m.
    primary_precoders : list of ndarray
        ``W_m`` (N_primary x L_m) used by the primary BS for PU m.
    secondary_solution : PrecoderSolution
        Provides the secondary precoders ``T_k`` (N x L_k).
    cross_channels : list of ndarray
        ``G_m`` (n_pu_m x N), secondary BS to PU m.
    """
    J = [interference_covariance(G, secondary_solution.T) for G in cross_channels]
    return float(primary_rates(primary_channels, primary_precoders, J).sum())


def lambda_max_rescale(solution: PrecoderSolution, scenario: Scenario,
                       ctx: ZfContext) -> PrecoderSolution:
    """Scale all covariances by the largest common factor that keeps
    ``lambda_max(J_m) <= I_m`` for every PU and every power limit.

    A trace-feasible solution is also lambda_max-feasible, so the factor is
    at least 1; the result stands in for a design under the eigenvalue
    constraint.
    """
    ratios = []
    for m, Im in enumerate(scenario.I):
        J = sum(G @ S @ G.conj().T for G, S in
                zip((ctx.Geff[k][m] for k in range(ctx.K)), solution.S))
        lam = float(np.linalg.eigvalsh(0.5 * (J + J.conj().T))[-1])
        if lam > 0:
            ratios.append(Im / lam)
    if scenario.power_mode == "SPC":
        ratios.append(scenario.P_total / solution.total_power)
    else:
        p = solution.per_antenna_power
        limits = np.asarray(scenario.per_antenna)
        ratios.extend(limits[p > 0] / p[p > 0])
    c = min(ratios)
    return solution_from_covariances(ctx, [c * S for S in solution.S],
                                     saddle=solution.saddle, trace=solution.trace,
                                     info=dict(solution.info, lambda_max_scale=c))


@dataclass
class PrimaryExperiment:
    """Primary sum rate against the primary BS power (dB values)."""

    scenario: Scenario
    primary_power_db: Sequence[float]
    N_primary: Optional[int] = None
    trials: int = 200
    options: SolverOptions = field(default_factory=SolverOptions)
    csv_path: Optional[str] = None
    svg_path: Optional[str] = None

    def __post_init__(self):
        self.primary_power_db = tuple(self.primary_power_db)
        if self.N_primary is None:
            self.N_primary = self.scenario.N
        if self.scenario.M < 1:
            raise InfeasibleZf("the primary experiment needs at least one PU")
        self.primary_scenario(self.primary_power_db[0] if self.primary_power_db else 0.0)

    def primary_scenario(self, power_db: float) -> Scenario:
        return Scenario(N=self.N_primary, n=self.scenario.n_pu, n_pu=(), I=(),
                        P_total=db_to_linear(power_db), r=self.scenario.r,
                        seed=self.scenario.seed)


def _primary_trial(exp: PrimaryExperiment, trial: int):
    sc = exp.scenario
    channels = generate_channels(sc, trial)
    out = []
    try:
        ctx = build_zf_context(sc, channels)
        sec = proposed(sc, channels, exp.options)
        variants = {"trace": sec, "lambda_max": lambda_max_rescale(sec, sc, ctx)}
    except InfeasibleZf:
        raise
    except PrecoderError:
        return [(vi, s, math.nan, math.nan) for vi in range(len(exp.primary_power_db))
                for s in PRIMARY_SCHEMES]
    J = {name: [interference_covariance(G, sol.T) for G in channels.G]
         for name, sol in variants.items()}
    for vi, pdb in enumerate(exp.primary_power_db):
        psc = exp.primary_scenario(pdb)
        pch = generate_channels(psc, trial, stream=PRIMARY_STREAM)
        try:
            W = proposed(psc, pch, exp.options)
        except InfeasibleZf:
            raise
        except PrecoderError:
            out.extend((vi, s, math.nan, math.nan) for s in PRIMARY_SCHEMES)
            continue
        for name in PRIMARY_SCHEMES:
            rate = float(primary_rates(pch.H, W.T, J[name]).sum())
            out.append((vi, name, rate, W.trace.inner_iterations))
    return out


def run_primary_experiment(exp: PrimaryExperiment, workers: Optional[int] = None,
                           enforce_budget: bool = True) -> ResultTable:
    results = run_trials(_primary_trial, exp, exp.trials, workers)
    table = aggregate("P_p", exp.primary_power_db, PRIMARY_SCHEMES, results)
    if exp.csv_path:
        table.write_csv(exp.csv_path)
    if exp.svg_path:
        from .plots import plot_table
        plot_table(table, exp.svg_path)
    return check_failures(table) if enforce_budget else table
