"""Survivor average causal effects for outcomes truncated by death.

Gaussian-mixture-of-BART posterior sampling over principal strata, with
estimand summaries, subgroup discovery, chain diagnostics, and the same
file pipeline the command line tool exposes.
"""

from sacebart._core import (
    STRATUM_CONVENTION,
    DataError,
    Dataset,
    Draws,
    Error,
    NumericError,
    UsageError,
    __version__,
    balance,
    benefit_probabilities,
    choose_p,
    csace,
    csace_density,
    dgp_names,
    diagnose,
    differential_effects,
    fit,
    generate,
    likely_set,
    membership,
    oracle_sace,
    pool,
    run_cv,
    run_diagnose,
    run_fit,
    run_simulate,
    run_subgroups,
    run_summarize,
    sace,
    subgroups,
)

__all__ = [
    "STRATUM_CONVENTION",
    "DataError",
    "Dataset",
    "Draws",
    "Error",
    "NumericError",
    "UsageError",
    "__version__",
    "balance",
    "benefit_probabilities",
    "choose_p",
    "csace",
    "csace_density",
    "dgp_names",
    "diagnose",
    "differential_effects",
    "fit",
    "generate",
    "likely_set",
    "membership",
    "oracle_sace",
    "pool",
    "run_cv",
    "run_diagnose",
    "run_fit",
    "run_simulate",
    "run_subgroups",
    "run_summarize",
    "sace",
    "subgroups",
]
