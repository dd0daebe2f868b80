"""
TOML configuration with ``[scenario]``, ``[solver]`` and ``[experiment]`` tables.

Powers and thresholds are written in dB in the file (``P``, ``I`` and the
optional ``per_antenna`` list) and converted to linear units here, once.
Example::

    [scenario]
    N = 10
    K = 3
    n_su = 2        # or n = [2, 2, 2]
    M = 2
    n_pu = 2        # or a list with M entries
    P = 10          # dB
    I = 5           # dB, scalar or list with M entries
    r = 0.0
    seed = 0
    power_mode = "PAPC"

    [solver]
    gamma = 10

    [experiment]
    axis = "P"
    values = [0, 10, 20, 30]
    trials = 200
    schemes = ["proposed"]
    csv = "sweep.csv"
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..channels import Scenario
from ..errors import ConfigError, PrecoderError
from ..saddle import SolverOptions
from .experiment import db_to_linear

__all__ = ["Config", "load_config", "read_toml", "parse_config", "scenario_from_table",
           "options_from_table", "SCENARIO_DEFAULTS"]

SCENARIO_KEYS = {"N", "K", "n", "n_su", "M", "n_pu", "P", "I", "per_antenna", "r",
                 "seed", "power_mode"}
EXPERIMENT_KEYS = {"axis", "values", "trials", "schemes", "csv", "svg", "trace",
                   "trial", "N_primary", "primary_power"}
SOLVER_KEYS = {f.name for f in fields(SolverOptions)}
# missing [scenario] keys fall back to N=10, K=3, M=2, two antennas per receiver
SCENARIO_DEFAULTS = {"N": 10, "K": 3, "n_su": 2, "M": 2, "n_pu": 2, "P": 10.0, "I": 5.0,
                     "r": 0.0, "seed": 0, "power_mode": "PAPC"}


@dataclass
class Config:
    scenario: Scenario
    options: SolverOptions
    experiment: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)


def _check_keys(table: dict, allowed: set, name: str):
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")


def _per_item(value, count: int, name: str) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigError(f"{name} has {len(value)} entries, expected {count}")
        return tuple(value)
    return (value,) * count


def scenario_from_table(tbl: dict) -> Scenario:
    _check_keys(tbl, SCENARIO_KEYS, "scenario")
    given = tbl
    tbl = dict(SCENARIO_DEFAULTS, **tbl)
    try:
        if "n" in tbl:
            n = tuple(int(v) for v in tbl["n"])
            if "K" in given and int(given["K"]) != len(n):
                raise ConfigError(f"K={tbl['K']} disagrees with n={list(n)}")
        else:
            n = (int(tbl["n_su"]),) * int(tbl["K"])
        if isinstance(tbl.get("n_pu"), (list, tuple)):
            n_pu = tuple(int(v) for v in tbl["n_pu"])
            if "M" in given and int(given["M"]) != len(n_pu):
                raise ConfigError(f"M={tbl['M']} disagrees with n_pu={list(n_pu)}")
        else:
            n_pu = (int(tbl["n_pu"]),) * int(tbl["M"])
        M = len(n_pu)
        I_db = _per_item(tbl["I"], M, "I")
        per_antenna = tbl.get("per_antenna")
        if per_antenna is not None:
            per_antenna = tuple(db_to_linear(float(v)) for v in per_antenna)
        return Scenario(N=int(tbl["N"]), n=n, n_pu=n_pu,
                        P_total=db_to_linear(float(tbl["P"])),
                        I=tuple(db_to_linear(float(v)) for v in I_db),
                        per_antenna=per_antenna, r=float(tbl["r"]),
                        seed=int(tbl["seed"]), power_mode=str(tbl["power_mode"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PrecoderError):
            raise
        raise ConfigError(f"bad [scenario] value: {exc}") from exc


def options_from_table(tbl: dict) -> SolverOptions:
    _check_keys(tbl, SOLVER_KEYS, "solver")
    try:
        return SolverOptions(**tbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [solver] value: {exc}") from exc


def _merge(base: dict, overrides: Optional[dict]) -> dict:
    out = copy.deepcopy(base)
    for section, values in (overrides or {}).items():
        out.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    return out


def parse_config(data: dict, overrides: Optional[dict] = None) -> Config:
    """Build a :class:`Config` from parsed TOML plus per-table overrides."""
    data = _merge(data, overrides)
    unknown = sorted(set(data) - {"scenario", "solver", "experiment"})
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(unknown)}")
    experiment = dict(data.get("experiment", {}))
    _check_keys(experiment, EXPERIMENT_KEYS, "experiment")
    return Config(scenario=scenario_from_table(data.get("scenario", {})),
                  options=options_from_table(data.get("solver", {})),
                  experiment=experiment, raw=data)


def read_toml(path: Optional[str]) -> dict:
    """Parsed TOML document, or an empty one when ``path`` is None."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> Config:
    """Read a TOML file (or start empty when ``path`` is None) and apply overrides."""
    return parse_config(read_toml(path), overrides)
