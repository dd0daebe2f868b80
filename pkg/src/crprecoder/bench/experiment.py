"""
Monte-Carlo sweeps over one scenario parameter.

Every trial index owns one channel stream (see
:func:`crprecoder.channels.trial_rng`), and the same stream is reused for all
sweep values and schemes of that trial. Trials run in any order, optionally
in a process pool, and are merged by trial index, so the output depends only
on the experiment definition.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..baselines import proposed, scheme1_full_zf, scheme2_svd_zf
from ..channels import Scenario, generate_channels
from ..errors import FailureBudgetExceeded, InfeasibleZf, InvalidScenario, PrecoderError
from ..saddle import ConvergenceTrace, SolverOptions, solve_saddle
from ..zf import build_zf_context

log = logging.getLogger(__name__)

__all__ = [
    "AXES",
    "SCHEMES",
    "CSV_COLUMNS",
    "TRACE_COLUMNS",
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "db_to_linear",
    "scenario_at",
    "run_experiment",
    "run_trials",
    "aggregate",
    "check_failures",
    "canonical_axis",
    "worker_count",
    "convergence_run",
    "trace_csv",
]

AXES = ("P", "I", "N", "M", "n_pu", "r")
_AXIS_ALIASES = {"ñ": "n_pu", "nt": "n_pu", "n_tilde": "n_pu"}
SCHEMES: Dict[str, Callable] = {
    "proposed": proposed,
    "scheme1": scheme1_full_zf,
    "scheme2": scheme2_svd_zf,
}
CSV_COLUMNS = ("sweep_value", "scheme", "mean_sr_nats", "stderr", "trials",
               "mean_inner_iters", "failures")
TRACE_COLUMNS = ("iter", "t", "residual", "step", "objective")
FAILURE_BUDGET = 0.01
THREADS_ENV = "CR_PRECODER_THREADS"


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".10g")


def canonical_axis(axis: str) -> str:
    axis = _AXIS_ALIASES.get(axis, axis)
    if axis not in AXES:
        raise InvalidScenario(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    return axis


def scenario_at(template: Scenario, axis: str, value) -> Scenario:
    """Template with one parameter set; ``P`` and ``I`` values are in dB."""
    axis = canonical_axis(axis)
    if axis == "P":
        return template.replace(P_total=db_to_linear(value))
    if axis == "I":
        return template.replace(I=(db_to_linear(value),) * template.M)
    if axis == "N":
        return template.replace(N=int(value))
    if axis == "M":
        if not template.n_pu:
            raise InvalidScenario("sweeping M needs a template with at least one PU")
        M = int(value)
        return template.replace(n_pu=(template.n_pu[0],) * M, I=(template.I[0],) * M)
    if axis == "n_pu":
        return template.replace(n_pu=(int(value),) * template.M)
    return template.replace(r=float(value))


@dataclass
class ExperimentSpec:
    """One sweep: a scenario template, the swept axis and its values.

    ``P`` and ``I`` values are given in dB; other axes in natural units.
    """

    scenario: Scenario
    axis: str
    values: Sequence
    trials: int = 200
    schemes: Sequence[str] = ("proposed",)
    options: SolverOptions = field(default_factory=SolverOptions)
    csv_path: Optional[str] = None
    svg_path: Optional[str] = None

    def __post_init__(self):
        self.axis = canonical_axis(self.axis)
        self.values = tuple(self.values)
        self.schemes = tuple(self.schemes)
        if not self.values:
            raise InvalidScenario("sweep needs at least one value")
        if int(self.trials) < 1:
            raise InvalidScenario("trials must be >= 1")
        self.trials = int(self.trials)
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            raise InvalidScenario(f"unknown schemes {unknown}; expected {tuple(SCHEMES)}")
        # fail fast on structurally infeasible points rather than per trial
        for v in self.values:
            scenario_at(self.scenario, self.axis, v)


@dataclass
class ResultRow:
    sweep_value: object
    scheme: str
    mean_sr_nats: float
    stderr: float
    trials: int
    mean_inner_iters: float
    failures: int

    def as_tuple(self):
        return (self.sweep_value, self.scheme, self.mean_sr_nats, self.stderr,
                self.trials, self.mean_inner_iters, self.failures)


@dataclass
class ResultTable:
    """Aggregated sweep results plus the per-trial rates behind them.

    ``trials`` counts attempted trials; ``failures`` of them are excluded
    from the mean and standard error.
    """

    axis: str
    rows: List[ResultRow]
    per_trial: Dict[Tuple[object, str], np.ndarray] = field(default_factory=dict)

    def row(self, value, scheme: str) -> ResultRow:
        for r in self.rows:
            if r.sweep_value == value and r.scheme == scheme:
                return r
        raise KeyError((value, scheme))

    def series(self, scheme: str):
        rows = [r for r in self.rows if r.scheme == scheme]
        return [r.sweep_value for r in rows], np.array([r.mean_sr_nats for r in rows])

    @property
    def schemes(self) -> List[str]:
        return list(dict.fromkeys(r.scheme for r in self.rows))

    @property
    def max_failure_rate(self) -> float:
        return max(r.failures / r.trials for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r.as_tuple()])
        return buf.getvalue()

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def worker_count(requested: Optional[int] = None) -> int:
    """Worker processes: ``requested``, else CR_PRECODER_THREADS, else all cores."""
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise InvalidScenario(f"{THREADS_ENV}={env!r} is not an integer") from None
    n = requested if requested is not None else (os.cpu_count() or 1)
    return max(1, int(n))


def run_trials(fn: Callable, payload, trials: int, workers: Optional[int] = None) -> list:
    """``[fn(payload, i) for i in range(trials)]``, possibly in parallel.

    ``fn`` must be a picklable module-level function. The result order is
    the trial order whatever the execution order was.
    """
    n = min(worker_count(workers), trials)
    if n <= 1:
        return [fn(payload, i) for i in range(trials)]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, [payload] * trials, range(trials),
                             chunksize=max(1, trials // (4 * n))))


def _sweep_trial(spec: ExperimentSpec, trial: int):
    """Rates and inner iteration counts of every (value, scheme) for one trial."""
    out = []
    cache = {}
    for vi, value in enumerate(spec.values):
        sc = scenario_at(spec.scenario, spec.axis, value)
        key = (sc.N, sc.n, sc.n_pu, sc.r)
        if key not in cache:
            cache[key] = generate_channels(sc, trial)
        channels = cache[key]
        for name in spec.schemes:
            try:
                sol = SCHEMES[name](sc, channels, spec.options)
            except InfeasibleZf:
                raise
            except PrecoderError as exc:
                log.warning("trial %d, %s=%s, %s failed: %s", trial, spec.axis, value, name, exc)
                out.append((vi, name, math.nan, math.nan))
                continue
            iters = sol.trace.inner_iterations if sol.trace is not None else math.nan
            out.append((vi, name, sol.rate_total, iters))
    return out


def aggregate(axis: str, values, schemes, results) -> ResultTable:
    """Fold per-trial ``(value_index, scheme, rate, iters)`` lists into a table."""
    trials = len(results)
    rates = {(vi, s): np.full(trials, np.nan) for vi in range(len(values)) for s in schemes}
    iters = {key: np.full(trials, np.nan) for key in rates}
    for t, records in enumerate(results):
        for vi, s, rate, it in records:
            rates[(vi, s)][t] = rate
            iters[(vi, s)][t] = it
    rows = []
    per_trial = {}
    for vi, value in enumerate(values):
        for s in schemes:
            x = rates[(vi, s)]
            ok = np.isfinite(x)
            n_ok = int(ok.sum())
            mean = float(x[ok].mean()) if n_ok else math.nan
            se = float(x[ok].std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
            mean_it = float(iters[(vi, s)][ok].mean()) if n_ok else math.nan
            rows.append(ResultRow(value, s, mean, se, trials, mean_it, trials - n_ok))
            per_trial[(value, s)] = x
    return ResultTable(axis=axis, rows=rows, per_trial=per_trial)


def check_failures(table: ResultTable, budget: float = FAILURE_BUDGET) -> ResultTable:
    worst = table.max_failure_rate
    if worst > budget:
        raise FailureBudgetExceeded(
            f"{worst:.1%} of trials failed at the worst sweep point "
            f"(budget {budget:.0%})", table)
    return table


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None,
                   enforce_budget: bool = True) -> ResultTable:
    """Run every trial of ``spec`` and aggregate one row per (value, scheme).

    Raises :class:`FailureBudgetExceeded` (with the table attached) when more
    than 1% of the trials at any sweep point failed.
    """
    results = run_trials(_sweep_trial, spec, spec.trials, workers)
    table = aggregate(spec.axis, spec.values, spec.schemes, results)
    if spec.csv_path:
        table.write_csv(spec.csv_path)
    if spec.svg_path:
        from .plots import plot_table
        plot_table(table, spec.svg_path)
    return check_failures(table) if enforce_budget else table


def trace_csv(trace: ConvergenceTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace.rows():
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def convergence_run(scenario: Scenario, options: Optional[SolverOptions] = None,
                    trial: int = 0, path: Optional[str] = None):
    """Solve one channel realization and return ``(trace, csv_text)``.

    The CSV has columns iter, t, residual, step, objective; row 0 is the
    starting point. It is also written to ``path`` when given.
    """
    channels = generate_channels(scenario, trial)
    ctx = build_zf_context(scenario, channels)
    _, trace = solve_saddle(ctx, scenario, options)
    text = trace_csv(trace)
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return trace, text
