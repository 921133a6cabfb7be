"""Categorical instrumental-variable models as polytopes: sharp bounds on
linear functionals of the counterfactual distribution, falsification tests,
and simultaneous finite-sample confidence intervals."""

from .core import (
    CellIndex,
    CounterfactualDistribution,
    Dataset,
    Dims,
    ObservedDistribution,
    StratumIndex,
    drop_instrument,
    drop_treatment,
    empirical_distributions,
    index_roundtrip,
    load_csv,
    load_dataset,
    load_json,
)
from .errors import (
    DimensionMismatch,
    DomainError,
    IvPolytopeError,
    LpFailure,
    NoConvergence,
    SizeOverflow,
    ZeroArm,
)
from .inequalities import (
    InequalityRow,
    InequalitySystem,
    SubsetFamily,
    count_inequalities,
    enumerate_full,
    filter_nonredundant,
    marginal_bound_rows,
    system_to_json,
)
from .bounds import (
    BoundsResult,
    LinearFunctional,
    ate,
    closed_form_marginal_bounds,
    falsify,
    falsify_helly,
    marginal,
    parse_functional,
    plugin_bounds,
    raw_functional,
    simulate_falsification,
    stratum_indicator,
)
from .oracle import (
    CoherenceRelation,
    EdgeCertificate,
    VertexSet,
    build_coherence,
    edge_certificate,
    enumerate_vertices,
    lp_redundancy_audit,
    certificate_redundant,
    redundancy_flags,
    strassen_feasible,
    vertex_consistency_report,
)
from .inference import (
    ChernoffSpec,
    ConfidenceInterval,
    CriticalValue,
    TruthInstance,
    confidence_intervals,
    coverage_monte_carlo,
    find_t_alpha,
    g_polynomial,
    log_g_polynomial,
    tail_rhs,
    vertex_mixture_truth,
    weighted_kl,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
