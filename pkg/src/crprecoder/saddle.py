"""
Barrier method for the convex-concave MAC-side dual of the ZF sum-rate problem.

The dual is

    min_{psi >= 0} max_{Q_k >= 0}  sum_k log |Omega_k + Hk^H Q_k Hk| / |Omega_k|
    s.t. sum_k tr(Q_k) = P,  p^T psi = P,

with ``Omega_k = Vbar_k^H Lambda Vbar_k`` and ``Lambda`` a nonnegative
combination of per-constraint PSD matrices weighted by ``psi``. Each centering
step runs an infeasible-start Newton method on the barrier KKT system. The
Newton step is found by block elimination: the Q-block reduces to Hermitian
Stein equations (see :mod:`crprecoder.stein`) and what remains is a dense
real system of size (J + 2) in the multipliers.

Constraint layout
-----------------
All constraints are written as ``Lambda = sum_j psi_j A_j`` with
``A_j = F_j^H F_j``. Under per-antenna constraints ``F_j = e_j^T`` for the
N antennas; under a sum power constraint one group holds ``I_N``. Each PU
contributes ``F = G_m``. The stacked projected factors ``F_k = [F_j Vbar_k]``
and a row -> group map are all the solver needs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .channels import Scenario
from .errors import (IllConditioned, LineSearchStalled, MaxIterations,
                     SingularKkt)
from .stein import SteinFactor
from .zf import ZfContext

__all__ = [
    "MultiplierLayout",
    "DualIterate",
    "NewtonStep",
    "SolverOptions",
    "ConvergenceTrace",
    "SaddleProblem",
    "build_layout",
    "build_spc_context",
    "initial_iterate",
    "mac_objective",
    "kkt_residual",
    "assemble_newton",
    "line_search",
    "solve_saddle",
]

log = logging.getLogger(__name__)

STEP_FLOOR = 1e-12
KKT_COND_LIMIT = 1e14
# trace coefficients of Hermitian products are real; larger residue means lost accuracy
IMAG_LIMIT = 1e-8


def _herm(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2).conj())


@dataclass(frozen=True)
class MultiplierLayout:
    """How the multiplier vector psi maps onto Lambda and the budget vector p."""

    mode: str
    F: tuple                # per user, R x d_k projected constraint factors
    group: np.ndarray       # length R, row -> multiplier index
    p: np.ndarray           # length J
    P: float
    n_power: int            # leading multipliers that are power constraints

    @property
    def J(self) -> int:
        return self.p.size

    @property
    def M(self) -> int:
        return self.J - self.n_power

    def indicator(self) -> np.ndarray:
        E = np.zeros((self.J, self.group.size))
        E[self.group, np.arange(self.group.size)] = 1.0
        return E


def _stacked_factors(ctx: ZfContext):
    return tuple(np.vstack([V] + list(Gk)) if Gk else V.copy()
                 for V, Gk in zip(ctx.Vbar, ctx.Geff))


def build_layout(ctx: ZfContext, scenario: Scenario, mode: Optional[str] = None
                 ) -> MultiplierLayout:
    """Multiplier layout for ``scenario.power_mode`` (or ``mode`` if given)."""
    mode = (mode or scenario.power_mode).upper()
    if mode == "SPC":
        return build_spc_context(ctx, scenario)
    N = ctx.N
    pu_rows = [G.shape[0] for G in ctx.Geff[0]] if ctx.Geff else []
    group = np.concatenate([np.arange(N)] +
                           [np.full(nm, N + m) for m, nm in enumerate(pu_rows)]).astype(int)
    p = np.concatenate([np.asarray(scenario.per_antenna, float),
                        np.asarray(scenario.I, float)])
    return MultiplierLayout("PAPC", _stacked_factors(ctx), group, p,
                            float(scenario.P_total), N)


def build_spc_context(ctx: ZfContext, scenario: Scenario) -> MultiplierLayout:
    """Sum-power variant: Lambda = eta I + sum_m lambda_m G_m^H G_m, p = [P; I]."""
    N = ctx.N
    pu_rows = [G.shape[0] for G in ctx.Geff[0]] if ctx.Geff else []
    group = np.concatenate([np.zeros(N, int)] +
                           [np.full(nm, 1 + m) for m, nm in enumerate(pu_rows)]).astype(int)
    p = np.concatenate([[float(scenario.P_total)], np.asarray(scenario.I, float)])
    return MultiplierLayout("SPC", _stacked_factors(ctx), group, p,
                            float(scenario.P_total), 1)


@dataclass
class DualIterate:
    """Point of the barrier iteration: MAC covariances, multipliers, duals."""

    Q: List[np.ndarray]
    psi: np.ndarray
    mu1: float
    mu2: float
    t: float

    def copy(self) -> "DualIterate":
        return DualIterate([Q.copy() for Q in self.Q], self.psi.copy(),
                           self.mu1, self.mu2, self.t)

    def moved(self, step: "NewtonStep", s: float) -> "DualIterate":
        return DualIterate([_herm(Q + s * dQ) for Q, dQ in zip(self.Q, step.dQ)],
                           self.psi + s * step.dpsi,
                           self.mu1 + s * step.dmu1,
                           self.mu2 + s * step.dmu2, self.t)


@dataclass
class NewtonStep:
    dQ: List[np.ndarray]
    dpsi: np.ndarray
    dmu1: float
    dmu2: float
    # per user: stack (J + 2, n_k, n_k) = [Sigma^(0), Sigma^(psi_1..psi_J), Sigma^(mu1)]
    Sigma: Optional[List[np.ndarray]] = None

    @classmethod
    def zero_like(cls, it: DualIterate) -> "NewtonStep":
        return cls([np.zeros_like(Q) for Q in it.Q], np.zeros_like(it.psi), 0.0, 0.0)

    def as_vector(self) -> np.ndarray:
        parts = [self.dpsi, [self.dmu1, self.dmu2]]
        parts += [np.concatenate([dQ.real.ravel(), dQ.imag.ravel()]) for dQ in self.dQ]
        return np.concatenate(parts)


@dataclass
class SolverOptions:
    t0: float = 50.0
    gamma: float = 10.0
    eps_residual: float = 1e-5
    eps_gap: float = 1e-4
    alpha: float = 0.01
    beta: float = 0.5
    max_inner: int = 200
    max_outer: int = 30

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.t0 <= 0 or self.gamma < 1:
            raise ValueError("need t0 > 0 and gamma >= 1")


@dataclass
class ConvergenceTrace:
    """Verbatim record of every inner iteration (row 0 is the start point)."""

    outer: List[int] = field(default_factory=list)
    t: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    gap: List[float] = field(default_factory=list)

    def record(self, outer, t, residual, step, objective):
        self.outer.append(outer)
        self.t.append(t)
        self.residual.append(residual)
        self.step.append(step)
        self.objective.append(objective)

    @property
    def inner_iterations(self) -> int:
        return max(len(self.residual) - 1, 0)

    def rows(self):
        for i, row in enumerate(zip(self.t, self.residual, self.step, self.objective)):
            yield (i,) + row


@dataclass
class _Eval:
    """Quantities shared by the residual, objective and Newton step."""

    Oinv: list
    Pinv: list
    Hdot: list
    Qinv: list
    g: np.ndarray       # d f~ / d psi_j
    logdet: float


class SaddleProblem:
    """A ZF context paired with a multiplier layout.

    Holds no iterate; every method is a pure function of its arguments.
    """

    def __init__(self, ctx: ZfContext, layout: MultiplierLayout):
        self.ctx = ctx
        self.layout = layout
        self.E = layout.indicator()
        self.H = ctx.Heff
        self.F = layout.F
        self.FH = [F.conj().T for F in self.F]

    @classmethod
    def from_scenario(cls, ctx, scenario, layout=None):
        return cls(ctx, layout if layout is not None else build_layout(ctx, scenario))

    @property
    def K(self):
        return len(self.H)

    @property
    def m_total(self) -> int:
        """Number of barrier terms; the gap of a centered point is m_total / t."""
        return sum(H.shape[0] for H in self.H) + self.layout.J

    def initial_iterate(self, t0: float) -> DualIterate:
        Q = [np.eye(H.shape[0], dtype=complex) for H in self.H]
        return DualIterate(Q, np.ones(self.layout.J), 1.0, 1.0, float(t0))

    def omega(self, psi, k):
        w = psi[self.layout.group]
        return (self.FH[k] * w) @ self.F[k]

    def evaluate(self, it: DualIterate, need_qinv=True) -> _Eval:
        lay = self.layout
        g = np.zeros(lay.J)
        Oinv, Pinv, Hdot, Qinv = [], [], [], []
        logdet = 0.0
        for k, H in enumerate(self.H):
            Om = self.omega(it.psi, k)
            Pi = Om + H.conj().T @ it.Q[k] @ H
            try:
                Lo = np.linalg.cholesky(Om)
                Lp = np.linalg.cholesky(_herm(Pi))
            except np.linalg.LinAlgError as exc:
                raise IllConditioned(f"Omega_{k} or Pi_{k} not positive definite") from exc
            logdet += 2.0 * (np.sum(np.log(np.diag(Lp).real)) - np.sum(np.log(np.diag(Lo).real)))
            Oi = _chol_inv(Lo)
            Pii = _chol_inv(Lp)
            Oinv.append(Oi)
            Pinv.append(Pii)
            Hdot.append(_herm(H @ Pii @ H.conj().T))
            if need_qinv:
                Qinv.append(_herm(np.linalg.inv(it.Q[k])))
            D = self.F[k] @ (Pii - Oi)
            rowq = np.einsum("rd,rd->r", D, self.F[k].conj()).real
            g += np.bincount(lay.group, rowq, minlength=lay.J)
        return _Eval(Oinv, Pinv, Hdot, Qinv, g, logdet)

    def objective(self, it: DualIterate) -> float:
        return self.evaluate(it, need_qinv=False).logdet

    def residual(self, it: DualIterate, ev: Optional[_Eval] = None):
        lay = self.layout
        ev = ev if ev is not None else self.evaluate(it)
        t = it.t
        stat_q = [np.linalg.norm(Hd + Qi / t - it.mu1 * np.eye(Hd.shape[0]))
                  for Hd, Qi in zip(ev.Hdot, ev.Qinv)]
        stat_psi = ev.g - 1.0 / (t * it.psi) + it.mu2 * lay.p
        u = stat_psi[:lay.n_power]
        w = stat_psi[lay.n_power:]
        feas_q = lay.P - sum(np.trace(Q).real for Q in it.Q)
        feas_psi = lay.P - float(lay.p @ it.psi)
        parts = {
            "stationarity_Q": float(sum(stat_q)),
            "u": float(np.linalg.norm(u)),
            "w": float(np.linalg.norm(w)),
            "trace_Q": abs(feas_q),
            "budget_psi": abs(feas_psi),
        }
        return float(sum(parts.values())), parts

    def reduced_system(self, it: DualIterate, ev: Optional[_Eval] = None):
        """Block elimination of the Q-block.

        Returns ``(A, b, sigmas, imag)``: the real (J + 2)-square system in
        ``(dpsi, dmu1, dmu2)``, the per-user Stein solutions
        ``[Sigma^(0), Sigma^(psi_1..psi_J), Sigma^(mu1)]`` and the largest
        imaginary part dropped from the trace coefficients.
        """
        lay = self.layout
        J = lay.J
        t = it.t
        ev = ev if ev is not None else self.evaluate(it)
        E = self.E

        phi = np.zeros((J, J))
        gam = np.zeros((J, J))
        omega = np.zeros(J)
        c0 = np.zeros(J)
        chi = np.zeros(J + 2)
        trQ = 0.0
        imag = 0.0
        sigmas = []
        for k, H in enumerate(self.H):
            Q = it.Q[k]
            F, FH = self.F[k], self.FH[k]
            Pii, Oi = ev.Pinv[k], ev.Oinv[k]
            WP = F @ Pii @ FH
            WO = F @ Oi @ FH
            phi += E @ (np.abs(WP) ** 2 - np.abs(WO) ** 2) @ E.T
            Xi = H @ Pii @ FH                                   # n_k x R
            C = np.einsum("jr,ar,br->jab", E, Xi, Xi.conj())    # J x n_k x n_k
            QQ = Q @ Q
            rhs = np.empty((J + 2,) + Q.shape, dtype=complex)
            rhs[0] = t * Q @ ev.Hdot[k] @ Q + Q - t * it.mu1 * QQ
            rhs[1:J + 1] = -t * (Q @ C @ Q)
            rhs[J + 1] = -t * QQ
            fac = SteinFactor(Q, ev.Hdot[k], t)
            Sig = fac.solve(_herm(rhs))
            sigmas.append(Sig)
            trCS = np.einsum("jab,lba->jl", C, Sig)             # J x (J + 2)
            imag = max(imag, float(np.max(np.abs(trCS.imag), initial=0.0)))
            trCS = trCS.real
            c0 += trCS[:, 0]
            gam += trCS[:, 1:J + 1]
            omega += trCS[:, J + 1]
            chi += np.einsum("laa->l", Sig).real
            trQ += np.trace(Q).real

        psi = it.psi
        A = np.zeros((J + 2, J + 2))
        b = np.zeros(J + 2)
        A[:J, :J] = t * (phi + gam) - np.diag(1.0 / psi ** 2)
        A[:J, J] = t * omega
        A[:J, J + 1] = -t * lay.p
        b[:J] = t * (ev.g - c0) + t * lay.p * it.mu2 - 1.0 / psi
        A[J, :J] = chi[1:J + 1]
        A[J, J] = chi[J + 1]
        b[J] = lay.P - trQ - chi[0]
        A[J + 1, :J] = lay.p
        b[J + 1] = lay.P - float(lay.p @ psi)
        return A, b, sigmas, imag

    def newton_step(self, it: DualIterate, ev: Optional[_Eval] = None) -> NewtonStep:
        """Newton direction of the barrier KKT system by block elimination."""
        J = self.layout.J
        A, b, sigmas, imag = self.reduced_system(it, ev)
        if imag > IMAG_LIMIT * max(1.0, float(np.max(np.abs(A)))):
            raise IllConditioned(f"reduced Newton system has imaginary residue {imag:.2e}")
        dx = _solve_reduced(A, b)
        dpsi = dx[:J]
        dmu1, dmu2 = float(dx[J]), float(dx[J + 1])
        dQ = []
        for Sig in sigmas:
            D = Sig[0] + np.tensordot(dpsi, Sig[1:J + 1], axes=1) + dmu1 * Sig[J + 1]
            dQ.append(_herm(D))
        return NewtonStep(dQ, dpsi, dmu1, dmu2, sigmas)

    def in_domain(self, it: DualIterate) -> bool:
        if np.any(it.psi <= 0.0) or not np.all(np.isfinite(it.psi)):
            return False
        for Q in it.Q:
            try:
                np.linalg.cholesky(Q)
            except np.linalg.LinAlgError:
                return False
        return True

    def line_search(self, it: DualIterate, step: NewtonStep, options: SolverOptions,
                    r0: Optional[float] = None):
        """Backtracking on the residual norm; returns (s, new iterate, new residual)."""
        if r0 is None:
            r0 = self.residual(it)[0]
        s = 1.0
        while s >= STEP_FLOOR:
            cand = it.moved(step, s)
            if self.in_domain(cand):
                try:
                    r1 = self.residual(cand)[0]
                except IllConditioned:
                    r1 = math.inf
                if r1 <= (1.0 - options.alpha * s) * r0:
                    return s, cand, r1
            s *= options.beta
        raise LineSearchStalled(f"step size fell below {STEP_FLOOR:g} (residual {r0:.3e})")

    def solve(self, options: Optional[SolverOptions] = None,
              start: Optional[DualIterate] = None,
              step_fn: Optional[Callable] = None):
        """Run the barrier method; returns ``(iterate, trace)``.

        ``step_fn(it)`` overrides how the Newton direction is computed, which
        lets a reference solver share the outer loop.
        """
        options = options or SolverOptions()
        step_fn = step_fn or self.newton_step
        it = start.copy() if start is not None else self.initial_iterate(options.t0)
        trace = ConvergenceTrace()
        r, _ = self.residual(it)
        trace.record(0, it.t, r, 0.0, self.objective(it))
        for outer in range(options.max_outer):
            inner = 0
            while r >= options.eps_residual:
                if inner >= options.max_inner:
                    raise MaxIterations(
                        f"centering at t={it.t:g} did not converge in {options.max_inner} "
                        f"iterations (residual {r:.3e})", trace, it)
                step = step_fn(it)
                try:
                    s, it, r = self.line_search(it, step, options, r0=r)
                except LineSearchStalled as exc:
                    exc.trace, exc.iterate = trace, it
                    raise
                trace.record(outer, it.t, r, s, self.objective(it))
                inner += 1
            gap = self.m_total / it.t
            trace.gap.append(gap)
            log.debug("outer %d: t=%g gap=%.3e inner=%d", outer, it.t, gap, inner)
            if options.gamma <= 1.0 or gap <= options.eps_gap:
                return it, trace
            it = DualIterate(it.Q, it.psi, it.mu1, it.mu2, it.t * options.gamma)
            r, _ = self.residual(it)
        raise MaxIterations(f"duality gap {self.m_total / it.t:.3e} above "
                            f"{options.eps_gap:g} after {options.max_outer} outer iterations",
                            trace, it)


def _chol_inv(L):
    n = L.shape[0]
    Li = np.linalg.solve(L, np.eye(n, dtype=L.dtype))
    return Li.conj().T @ Li


def _solve_reduced(A, b):
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise SingularKkt("non-finite entries in the reduced Newton system")
    scale = np.max(np.abs(A), axis=1)
    scale[scale == 0.0] = 1.0
    As = A / scale[:, None]
    cond = np.linalg.cond(As)
    if not np.isfinite(cond) or cond > KKT_COND_LIMIT:
        raise SingularKkt(f"reduced Newton matrix condition estimate {cond:.2e}")
    return np.linalg.solve(As, b / scale)


# -- functional interface ----------------------------------------------------

def initial_iterate(ctx: ZfContext, scenario: Scenario, t0: float = 50.0) -> DualIterate:
    return SaddleProblem.from_scenario(ctx, scenario).initial_iterate(t0)


def _layout_for(ctx, psi):
    # N == 1 makes PAPC and SPC coincide, so the length alone is enough
    N, M = ctx.N, ctx.M
    if psi.size == N + M:
        n_power = N
    elif psi.size == 1 + M:
        n_power = 1
    else:
        raise ValueError(f"psi has length {psi.size}; expected {N + M} or {1 + M}")
    pu_rows = [G.shape[0] for G in ctx.Geff[0]] if ctx.Geff else []
    if n_power == N:
        power_group = np.arange(N)
    else:
        power_group = np.zeros(N, int)
    group = np.concatenate([power_group] + [np.full(nm, n_power + m)
                                            for m, nm in enumerate(pu_rows)]).astype(int)
    return MultiplierLayout("PAPC" if n_power == N else "SPC", _stacked_factors(ctx),
                            group, np.ones(psi.size), 1.0, n_power)


def mac_objective(ctx: ZfContext, it: DualIterate,
                  layout: Optional[MultiplierLayout] = None) -> float:
    """``sum_k log |Omega_k + Hk^H Q_k Hk| / |Omega_k|`` in nats."""
    layout = layout if layout is not None else _layout_for(ctx, np.asarray(it.psi))
    return SaddleProblem(ctx, layout).objective(it)


def kkt_residual(ctx: ZfContext, it: DualIterate, scenario: Scenario,
                 layout: Optional[MultiplierLayout] = None):
    """Residual norm of the barrier KKT system and its five components."""
    return SaddleProblem.from_scenario(ctx, scenario, layout).residual(it)


def assemble_newton(ctx: ZfContext, it: DualIterate, scenario: Scenario,
                    layout: Optional[MultiplierLayout] = None) -> NewtonStep:
    """Newton direction by Stein block elimination."""
    return SaddleProblem.from_scenario(ctx, scenario, layout).newton_step(it)


def line_search(ctx: ZfContext, it: DualIterate, step: NewtonStep,
                options: SolverOptions, scenario: Scenario,
                layout: Optional[MultiplierLayout] = None) -> float:
    """Accepted step size in (0, 1]."""
    return SaddleProblem.from_scenario(ctx, scenario, layout).line_search(it, step, options)[0]


def solve_saddle(ctx: ZfContext, scenario: Scenario,
                 options: Optional[SolverOptions] = None,
                 layout: Optional[MultiplierLayout] = None):
    """Saddle point of the barrier problem; returns ``(DualIterate, ConvergenceTrace)``."""
    return SaddleProblem.from_scenario(ctx, scenario, layout).solve(options)
