"""Optimistic tracking for learning several discrete distributions uniformly well."""

from .distributions import (
    ArmState,
    DiscreteDistribution,
    DistanceKind,
    EtaInterior,
    FDivergence,
    RngStream,
    distance,
    distance_batch,
    draw,
    empirical,
    sample,
)
from .objectives import (
    ObjectiveSpec,
    TaylorSpec,
    c_kl,
    c_l1,
    c_l2,
    c_sep,
    c_tilde_sep,
    exact_expected_distance,
    objective,
    phi,
    regularity_audit,
    remainder_bound,
    sep_sandwich_constants,
    taylor_f_div,
)
from .confidence import (
    ArmBound,
    ConfidenceSchedule,
    radius_hoeffding,
    upper_kl,
    upper_l1,
    upper_l2,
    upper_sep,
)
from .allocators import (
    Allocation,
    DeviationBand,
    approx_oracle,
    average_cost_oracle,
    default_delta,
    deviation_band,
    largest_remainder,
    optimistic_tracking,
    oracle_kl,
    oracle_power_law,
    uniform,
)
from .harness import (
    EpsFamily,
    ProblemInstance,
    RegretReport,
    RiskEstimate,
    coverage_audit,
    estimate_risk,
    exact_risk_enumeration,
    figure2_sweep,
    lower_bound_experiment,
    regret,
    table1_gaps,
)

__version__ = "0.1.0"
