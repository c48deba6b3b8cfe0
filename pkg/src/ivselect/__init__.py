"""Spike-and-slab variable selection for high-dimensional linear IV regression.

The posterior combines a moment-based quasi-likelihood over selected
instruments with a spike-and-slab prior over coefficients and a truncated
sparsity prior over inclusion patterns; a Metropolis-Hastings-within-Gibbs
chain samples it. The package also ships deterministic simulation designs,
a replication harness, contraction diagnostics, and a CLI.
"""

__version__ = "0.1.0"

from .errors import (
    CacheDriftWarning,
    DegenerateDesign,
    DimensionMismatch,
    EmptyChain,
    EmptyPattern,
    IvSelectError,
    MissingThetaDraws,
    NonConvergenceWarning,
    ParseError,
    SingularSystem,
    TooFewRegressors,
    UnmappedRegressor,
    ZeroColumn,
)
from .model import (
    DesignData,
    EigenDiagnostics,
    HyperParams,
    InstrumentMap,
    SparsityPattern,
    contraction_radius,
    default_s_bar,
    enumerate_delta_posterior,
    instrument_set,
    log_marginal_delta,
    log_posterior_unnormalized,
    log_prior_coefficients,
    log_prior_sparsity,
    log_quasi_likelihood,
    masked_coefficients,
    normalize_instruments,
    restricted_eigen_diagnostics,
    theorem_scalings,
)
from .replicate import (
    AggregateReport,
    Metrics,
    compute_metrics,
    credible_interval,
    default_hyper_policy,
    point_estimate,
    replicate_seed,
    run_replications,
    select_model,
)
from .sampler import (
    ChainConfig,
    ChainResult,
    SamplerState,
    accept_reject,
    draw_active_coefficients,
    draw_inactive_coefficients,
    init_state,
    propose_double_flip,
    propose_single_flip,
    refresh_caches,
    run_chain,
    sweep,
)
from .scad import scad_initializer, scad_objective, scad_penalty
from .simulate import (
    GroundTruth,
    SimScenario,
    generate_scenario,
    generate_setup1,
    generate_setup2,
    make_theta_star,
)

__all__ = [name for name in dir() if not name.startswith("_")]
