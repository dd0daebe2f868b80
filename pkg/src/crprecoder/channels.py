"""
Correlated Rayleigh channel generation for the secondary (SU) and primary
(PU) receivers.

Every channel is drawn as ``P^{1/2} W R^{1/2}`` where ``W`` holds i.i.d.
CN(0, 1) entries and ``P``/``R`` are exponential receive/transmit correlation
matrices whose complex coefficient has magnitude ``r`` and a phase drawn
uniformly per receiver. All quantities here are linear (no dB).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InfeasibleZf, InvalidScenario

__all__ = [
    "Scenario",
    "ChannelSet",
    "exp_correlation_matrix",
    "psd_sqrt",
    "trial_rng",
    "generate_channels",
]

POWER_MODES = ("PAPC", "SPC")


@dataclass(frozen=True)
class Scenario:
    """Full description of one cognitive-radio downlink setup.

    Parameters
    ----------
    N : int
        Transmit antennas at the secondary BS.
    n : sequence of int
        Receive antennas of each SU (its length is K).
    n_pu : sequence of int
        Receive antennas of each PU (its length is M; may be empty).
    P_total : float
        Total transmit power (linear).
    I : sequence of float
        Interference thresholds, one per PU (linear).
    per_antenna : sequence of float, optional
        Per-antenna power limits. Defaults to ``P_total / N`` each.
    r : float
        Correlation magnitude in [0, 1].
    seed : int
        Root RNG seed.
    power_mode : {"PAPC", "SPC"}
        Per-antenna or sum power constraint.
    """

    N: int
    n: tuple
    n_pu: tuple
    P_total: float
    I: tuple
    per_antenna: Optional[tuple] = None
    r: float = 0.0
    seed: int = 0
    power_mode: str = "PAPC"

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "n_pu", tuple(int(v) for v in self.n_pu))
        object.__setattr__(self, "I", tuple(float(v) for v in self.I))
        if self.per_antenna is None:
            pa = (float(self.P_total) / self.N,) * self.N
        else:
            pa = tuple(float(v) for v in self.per_antenna)
        object.__setattr__(self, "per_antenna", pa)
        object.__setattr__(self, "power_mode", str(self.power_mode).upper())
        self.validate()

    @property
    def K(self) -> int:
        return len(self.n)

    @property
    def M(self) -> int:
        return len(self.n_pu)

    @property
    def nbar(self) -> List[int]:
        """Null-space dimension left to each SU after zero-forcing the others."""
        total = sum(self.n)
        return [self.N - (total - nk) for nk in self.n]

    def validate(self):
        if self.N < 1 or self.K < 1:
            raise InvalidScenario("need N >= 1 and at least one SU")
        if any(v < 1 for v in self.n) or any(v < 1 for v in self.n_pu):
            raise InvalidScenario("antenna counts must be positive")
        if len(self.I) != self.M:
            raise InvalidScenario(
                f"got {len(self.I)} interference thresholds for {self.M} PUs")
        if len(self.per_antenna) != self.N:
            raise InvalidScenario("per_antenna must have N entries")
        if self.P_total <= 0 or any(v <= 0 for v in self.per_antenna):
            raise InvalidScenario("powers must be strictly positive")
        if any(v <= 0 for v in self.I):
            raise InvalidScenario("interference thresholds must be strictly positive")
        if not 0.0 <= self.r <= 1.0:
            raise InvalidScenario(f"correlation r={self.r} outside [0, 1]")
        if self.power_mode not in POWER_MODES:
            raise InvalidScenario(f"unknown power mode {self.power_mode!r}")
        for k, (nb, nk) in enumerate(zip(self.nbar, self.n)):
            if nb < nk:
                raise InfeasibleZf(
                    f"SU {k}: null space dimension {nb} < {nk} streams")

    def replace(self, **changes) -> "Scenario":
        """Copy with some fields changed; per-antenna limits are re-derived
        from ``P_total`` unless given explicitly."""
        fields = dict(N=self.N, n=self.n, n_pu=self.n_pu, P_total=self.P_total,
                      I=self.I, per_antenna=None, r=self.r, seed=self.seed,
                      power_mode=self.power_mode)
        fields.update(changes)
        return Scenario(**fields)

    @classmethod
    def uniform(cls, N, K, M, n_su=2, n_pu=2, P=10.0, I=1.0, **kwargs):
        """Symmetric scenario: equal antenna counts and thresholds."""
        return cls(N=N, n=(n_su,) * K, n_pu=(n_pu,) * M, P_total=P,
                   I=(I,) * M, **kwargs)


@dataclass
class ChannelSet:
    """Channel matrices from the secondary BS: ``H[k]`` is n_k x N, ``G[m]``
    is n_pu_m x N."""

    H: List[np.ndarray]
    G: List[np.ndarray] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.H[0].shape[1]


def exp_correlation_matrix(size: int, r: float, phase: float = 0.0) -> np.ndarray:
    """Hermitian exponential correlation matrix.

    ``[R]_{ij} = c^{j-i}`` above the diagonal and its conjugate below, with
    ``c = r * exp(1j * phase)``.
    """
    if size < 1:
        raise InvalidScenario("correlation matrix size must be >= 1")
    if not 0.0 <= r <= 1.0:
        raise InvalidScenario(f"correlation r={r} outside [0, 1]")
    c = r * np.exp(1j * phase)
    idx = np.arange(size)
    lag = idx[None, :] - idx[:, None]
    R = c ** np.abs(lag)
    R = np.where(lag < 0, R.conj(), R)
    if r == 0.0:
        # 0**0 is 1, but keep the identity exact for any phase
        R = np.eye(size, dtype=complex)
    return R


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    """Hermitian square root, negative eigenvalues clamped to zero."""
    w, U = np.linalg.eigh(A)
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def trial_rng(seed: int, trial: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent generator for one Monte-Carlo trial.

    Streams are keyed on ``(seed, trial)`` so trials can run in any order.
    A nonzero ``stream`` selects a further independent sequence for the same
    trial (used for the primary system's own channels).
    """
    key = (int(trial),) if stream == 0 else (int(trial), int(stream))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _cscg(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _correlated(rng, rows, cols, r):
    rx_phase, tx_phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
    W = _cscg(rng, (rows, cols))
    if r == 0.0:
        return W
    Prx = psd_sqrt(exp_correlation_matrix(rows, r, rx_phase))
    Rtx = psd_sqrt(exp_correlation_matrix(cols, r, tx_phase))
    return Prx @ W @ Rtx


def generate_channels(scenario: Scenario, trial: int = 0, stream: int = 0) -> ChannelSet:
    """Draw one channel realization; a pure function of (scenario, trial, stream)."""
    rng = trial_rng(scenario.seed, trial, stream)
    H = [_correlated(rng, nk, scenario.N, scenario.r) for nk in scenario.n]
    G = [_correlated(rng, nm, scenario.N, scenario.r) for nm in scenario.n_pu]
    return ChannelSet(H=H, G=G)
