"""Hybrid rank unit root tests with limit-experiment simulation tools."""

from .densities import (
    GAUSSIAN,
    LAPLACE,
    T3,
    KernelDensityEstimate,
    ReferenceDensity,
    cross_moments,
    fit_kernel_density,
    get_density,
    score_at_rank_quantile,
)
from .errors import (
    ContractViolation,
    DegenerateSampleError,
    DomainError,
    IllConditionedError,
    NumericalError,
    ParameterError,
    RankDeficiencyError,
    RankUnitRootError,
)
from .limitsim import (
    CriticalValueModel,
    LimitSample,
    ahrt_limit_statistic,
    asymptotic_test_power,
    critical_value,
    draw_limit_sample,
    ers_asymptotic_power,
    fit_cv_polynomial,
    power_envelope,
)
from .mcharness import DgpConfig, StudyResult, generate, run_study
from .prewhiten import ArFit, discretize, fit_ar
from .rankpaths import PartialSumPaths, RankData, build_paths, compute_ranks, orthogonalize, stochastic_integral
from .stattests import TestResult, ahrt, ahrt_signed, df_rho, ers_test, hrt, jfg_plugin

__version__ = "0.1.0"
