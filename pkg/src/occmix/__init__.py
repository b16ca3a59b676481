"""occmix: N_c-mixture occupancy and abundance models.

Probability functions live in :mod:`occmix.model`, fitting in
:mod:`occmix.estimation`, large-sample limits in :mod:`occmix.asymptotics`,
Wald intervals and bootstrap tests in :mod:`occmix.inference`, simulation in
:mod:`occmix.simulate`, and the command line in :mod:`occmix.cli`.
"""

from occmix.errors import (
    DegenerateData,
    DomainError,
    InvalidStatistic,
    NonConvergence,
    NoRoot,
    NotNested,
    OccmixError,
    SingularInformation,
)
from occmix.model import (
    DetectionMatrix,
    ModelParams,
    SurveyCounts,
    ZIModelParams,
    f_zero_and_plus,
    loglik,
    loglik_zi,
    pmf,
    pmf_closed,
    pmf_oracle,
)
from occmix.estimation import (
    Family,
    FitResult,
    ModelSpec,
    OptimOptions,
    closed_form_double_visit,
    fit,
    fit_zi_conditional,
    moment_estimators,
)
from occmix.asymptotics import limit_c_to_zero, limit_nmix, zib_bias
from occmix.inference import TestResult, bootstrap_pvalue, lrt, wald_ci
from occmix.simulate import GenConfig, StudyCell, StudySummary, generate, run_study

__version__ = "0.1.0"

__all__ = [
    "DegenerateData", "DomainError", "InvalidStatistic", "NonConvergence", "NoRoot",
    "NotNested", "OccmixError", "SingularInformation",
    "DetectionMatrix", "ModelParams", "SurveyCounts", "ZIModelParams",
    "f_zero_and_plus", "loglik", "loglik_zi", "pmf", "pmf_closed", "pmf_oracle",
    "Family", "FitResult", "ModelSpec", "OptimOptions", "closed_form_double_visit",
    "fit", "fit_zi_conditional", "moment_estimators",
    "limit_c_to_zero", "limit_nmix", "zib_bias",
    "TestResult", "bootstrap_pvalue", "lrt", "wald_ci",
    "GenConfig", "StudyCell", "StudySummary", "generate", "run_study",
]
