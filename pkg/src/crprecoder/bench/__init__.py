"""Monte-Carlo experiments, primary-system evaluation, configuration and CLI."""

from .experiment import (CSV_COLUMNS, TRACE_COLUMNS, ExperimentSpec, ResultRow, ResultTable,
                         convergence_run, db_to_linear, run_experiment, scenario_at,
                         trace_csv)
from .primary import (PrimaryExperiment, interference_covariance, lambda_max_rescale,
                      primary_rates, primary_system_rate, run_primary_experiment)

__all__ = [
    "CSV_COLUMNS",
    "TRACE_COLUMNS",
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "convergence_run",
    "db_to_linear",
    "run_experiment",
    "scenario_at",
    "trace_csv",
    "PrimaryExperiment",
    "interference_covariance",
    "lambda_max_rescale",
    "primary_rates",
    "primary_system_rate",
    "run_primary_experiment",
]
