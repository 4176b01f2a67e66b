"""Monte Carlo and analytic toolkit for waiting-time observables of binary
branching Brownian motion: front exceedance times, per-ancestor descendant
lead times, cohort completion times, and paired-population lead times."""

__version__ = "0.1.0"

from .analytic import (
    CONSTANTS,
    SQRT2,
    BoundSpec,
    Constants,
    biggins_rate,
    bramson_upper,
    bridge_exp_moment,
    gamma_prob,
    gauss_tail_bounds,
    gauss_tail_exact,
    geometric_pmf,
    lalley_sellke_bound,
    m_of_t,
    sigma_cdf,
    sigma_density,
    smalldev_bound,
)
from .core import Population, SimConfig, endpoint_survey, init
from .errors import (
    BbmError,
    DegenerateDesign,
    DomainError,
    InvalidConfig,
    PopulationBudgetExceeded,
    PruningForbidden,
    TruncatedPopulation,
)
from .estimators import (
    F_ENDPOINT_NONNEG,
    F_EXP_SQRT2,
    F_ONE,
    LeftTailReport,
    McEstimate,
    PathFunctional,
    SlopeFit,
    exponent_fit,
    front_tail_estimate,
    left_tail_estimate,
    many_to_one_check,
    many_to_two_check,
    median_log_times,
    pair_sum_quadrature,
)
from .experiments import ExperimentSpec, ReplicateResult, fit_report, run
from .observables import (
    CohortCount,
    CrossingRecord,
    SnapshotLabeling,
    assign_labels,
    cohort_count,
    first_branch_after_snapshot,
    sigma_M_sample,
    theta,
    track_T,
    track_tau,
    two_bbm_T,
)
from .rng import mix64, replicate_seed
