"""Likelihood ratio tests with Skovgaard's adjustment for elliptical
errors-in-variables regression."""

from ._core import (
    Dataset,
    DomainError,
    Family,
    FitFailure,
    FitResult,
    InputError,
    NotPositiveDefinite,
    Parameters,
    SimConfig,
    SimReport,
    TestReport,
    discrepancy_curve,
    fit,
    load_dataset,
    loglik,
    lr_test,
    observed_info,
    run_null_study,
    run_power_study,
    score,
    write_dataset,
)

__all__ = [
    "Dataset",
    "DomainError",
    "Family",
    "FitFailure",
    "FitResult",
    "InputError",
    "NotPositiveDefinite",
    "Parameters",
    "SimConfig",
    "SimReport",
    "TestReport",
    "discrepancy_curve",
    "fit",
    "load_dataset",
    "loglik",
    "lr_test",
    "observed_info",
    "run_null_study",
    "run_power_study",
    "score",
    "write_dataset",
]
