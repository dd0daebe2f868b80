"""Command-line entry point: ``crprecoder {solve,sweep,convergence,compare,primary}``.

Exit codes: 0 on success, 1 for configuration errors, 2 when a solve fails
or too many Monte-Carlo trials fail.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..channels import generate_channels
from ..duality import design_precoders
from ..errors import ConfigError, FailureBudgetExceeded, InfeasibleZf, InvalidScenario, PrecoderError
from .config import parse_config, read_toml
from .experiment import ExperimentSpec, convergence_run, run_experiment, trace_csv
from .primary import PrimaryExperiment, run_primary_experiment

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2

DEFAULT_VALUES = {"P": [0, 10, 20, 30], "I": [0, 5, 10], "N": [8, 10, 12],
                  "M": [1, 2, 4], "n_pu": [1, 2, 3], "r": [0.0, 0.3, 0.6, 0.9]}


def _number_list(text):
    try:
        return [float(v) if any(c in v for c in ".eE") else int(v)
                for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("config", nargs="?", help="TOML configuration file")
    g = p.add_argument_group("scenario overrides")
    g.add_argument("--N", type=int)
    g.add_argument("--K", type=int)
    g.add_argument("--n-su", dest="n_su", type=int)
    g.add_argument("--M", type=int)
    g.add_argument("--n-pu", dest="n_pu", type=int)
    g.add_argument("--P", type=float, help="total power [dB]")
    g.add_argument("--I", type=float, help="interference threshold [dB]")
    g.add_argument("--r", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--power-mode", dest="power_mode", choices=["PAPC", "SPC"])
    s = p.add_argument_group("solver overrides")
    s.add_argument("--t0", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--eps-residual", dest="eps_residual", type=float)
    s.add_argument("--eps-gap", dest="eps_gap", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--max-inner", dest="max_inner", type=int)
    s.add_argument("--max-outer", dest="max_outer", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sweep_args(p, with_axis=True):
    if with_axis:
        p.add_argument("--axis", choices=["P", "I", "N", "M", "n_pu", "r"])
    p.add_argument("--values", type=_number_list, help="comma-separated sweep values")
    p.add_argument("--trials", type=int)
    p.add_argument("--csv", help="output CSV (default: stdout)")
    p.add_argument("--svg", help="optional SVG plot (needs matplotlib)")
    p.add_argument("--workers", type=int, help="worker processes (default: CR_PRECODER_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crprecoder",
        description="Sum-rate optimal ZF precoding for cognitive-radio MIMO downlinks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one channel realization")
    _add_common(p)
    p.add_argument("--trial", type=int, help="trial index of the channel draw")
    p.add_argument("--trace", help="write the convergence trace CSV here")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over one parameter")
    _add_common(p)
    _add_sweep_args(p)
    p.add_argument("--schemes", type=lambda s: [v for v in s.split(",") if v])

    p = sub.add_parser("convergence", help="residual trace of one solve")
    _add_common(p)
    p.add_argument("--trial", type=int)
    p.add_argument("--trace", help="output CSV (default: stdout)")

    p = sub.add_parser("compare", help="proposed design against both baselines")
    _add_common(p)
    _add_sweep_args(p)

    p = sub.add_parser("primary", help="primary-system rate against primary BS power")
    _add_common(p)
    _add_sweep_args(p, with_axis=False)
    p.add_argument("--N-primary", dest="N_primary", type=int)
    return parser


def _overrides(args) -> dict:
    v = vars(args)
    tables = {
        "scenario": ("N", "K", "n_su", "M", "n_pu", "P", "I", "r", "seed", "power_mode"),
        "solver": ("t0", "gamma", "eps_residual", "eps_gap", "alpha", "beta",
                   "max_inner", "max_outer"),
        "experiment": ("axis", "values", "trials", "schemes", "csv", "svg", "trace",
                       "trial", "N_primary"),
    }
    return {name: {k: v[k] for k in keys if v.get(k) is not None}
            for name, keys in tables.items()}


def _emit(text: str, path, label: str):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"{label} written to {path}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _load(args):
    """File values first, then command-line flags.

    A scalar ``--K``/``--n-su`` (or ``--M``) override turns list-valued
    ``n`` (or ``n_pu``/``I``) entries from the file into their first element
    so the two forms do not conflict.
    """
    ov = _overrides(args)
    data = read_toml(args.config)
    sc = data.setdefault("scenario", {})
    o = ov["scenario"]
    if ("K" in o or "n_su" in o) and isinstance(sc.get("n"), list):
        n = sc.pop("n")
        sc.setdefault("n_su", n[0])
        sc.setdefault("K", len(n))
    if "M" in o:
        for key in ("n_pu", "I"):
            if isinstance(sc.get(key), list):
                sc[key] = sc[key][0]
    return parse_config(data, ov)


def _cmd_solve(cfg, args) -> int:
    sc = cfg.scenario
    trial = int(cfg.experiment.get("trial", 0))
    channels = generate_channels(sc, trial)
    sol = design_precoders(sc, channels, cfg.options)
    print(f"sum rate [nats]: {sol.rate_total:.10g}")
    print("per-user rates [nats]: " + ", ".join(f"{r:.6g}" for r in sol.rates))
    limits = np.asarray(sc.per_antenna)
    print(f"max antenna power / limit: {np.max(sol.per_antenna_power / limits):.6g}")
    if sc.M:
        print("interference / threshold: " + ", ".join(
            f"{v:.6g}" for v in sol.interference / np.asarray(sc.I)))
    print(f"inner iterations: {sol.trace.inner_iterations}")
    path = cfg.experiment.get("trace")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace_csv(sol.trace))
        print(f"trace written to {path}")
    return EXIT_OK


def _cmd_convergence(cfg, args) -> int:
    _, text = convergence_run(cfg.scenario, cfg.options, int(cfg.experiment.get("trial", 0)))
    _emit(text, cfg.experiment.get("trace"), "trace")
    return EXIT_OK


def _spec(cfg, args, axis_default, schemes_default):
    exp = cfg.experiment
    axis = exp.get("axis", axis_default)
    return ExperimentSpec(scenario=cfg.scenario, axis=axis,
                          values=exp.get("values", DEFAULT_VALUES.get(axis, [])),
                          trials=exp.get("trials", 200),
                          schemes=exp.get("schemes", schemes_default),
                          options=cfg.options, svg_path=exp.get("svg"))


def _cmd_sweep(cfg, args, axis_default="P", schemes_default=("proposed",)) -> int:
    spec = _spec(cfg, args, axis_default, schemes_default)
    try:
        table = run_experiment(spec, workers=args.workers)
    except FailureBudgetExceeded as exc:
        _emit(exc.table.to_csv(), cfg.experiment.get("csv"), "table")
        raise
    _emit(table.to_csv(), cfg.experiment.get("csv"), "table")
    return EXIT_OK


def _cmd_compare(cfg, args) -> int:
    cfg.experiment.setdefault("schemes", ["proposed", "scheme1", "scheme2"])
    return _cmd_sweep(cfg, args, axis_default="r",
                      schemes_default=("proposed", "scheme1", "scheme2"))


def _cmd_primary(cfg, args) -> int:
    exp = cfg.experiment
    values = exp.get("values", exp.get("primary_power", [0, 10, 20, 30]))
    pe = PrimaryExperiment(scenario=cfg.scenario, primary_power_db=values,
                           N_primary=exp.get("N_primary"), trials=exp.get("trials", 200),
                           options=cfg.options, svg_path=exp.get("svg"))
    try:
        table = run_primary_experiment(pe, workers=args.workers)
    except FailureBudgetExceeded as exc:
        _emit(exc.table.to_csv(), exp.get("csv"), "table")
        raise
    _emit(table.to_csv(), exp.get("csv"), "table")
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "convergence": _cmd_convergence,
            "compare": _cmd_compare, "primary": _cmd_primary}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidScenario, InfeasibleZf) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FailureBudgetExceeded as exc:
        print(f"failure budget exceeded: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PrecoderError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
