"""Genetic matching with probabilistic treatments and confounders."""

from ._core import (
    NoPairsError,
    ProbmatchError,
    SchemaError,
    StochasticScalar,
    ks_two_sample,
    match,
    quantile_distance,
    run_experiment,
    smd,
    validate,
    wilcoxon_signed_rank,
)

__all__ = [
    "NoPairsError",
    "ProbmatchError",
    "SchemaError",
    "StochasticScalar",
    "ks_two_sample",
    "match",
    "quantile_distance",
    "run_experiment",
    "smd",
    "validate",
    "wilcoxon_signed_rank",
]
