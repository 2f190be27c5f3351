"""Rate-splitting downlink precoder optimization via generalized power
iteration, with one-ring channel modeling, imperfect-CSIT rate bounds, and
a seeded Monte Carlo evaluation harness."""

from .channel import (
    KlFactor,
    OneRingGeometry,
    SpatialCovariance,
    UserChannelState,
    build_one_ring_covariance,
    kl_factorize,
    lmmse_error_covariance,
    sample_channel,
    sample_csit,
)
from .messages import (
    MessageSet,
    PrecodingProblem,
    StackLayout,
    StackedPrecoder,
)
from .rates import (
    RateBreakdown,
    common_rate_bound,
    exact_breakdown,
    objective_J,
    partial_common_rate_bound,
    private_rate_bound,
    softmin,
)
from .quotients import QuotientPair, build_pair, evaluate_quotient
from .solver import (
    GpiReport,
    SolverConfig,
    build_kkt_operators,
    extract_precoders,
    gpi_step,
    lambda_log2,
    mrt_initial_stack,
    softmin_weights,
    solve,
)
from .baselines import (
    BaselineKind,
    mrt_precoders,
    rzf_precoders,
    sdma_gpi_solve,
)
from .harness import (
    ExperimentSpec,
    TrialRecord,
    derive_seed,
    emit_outputs,
    run_convergence_trace,
    run_sweep,
    run_trial,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineKind",
    "ExperimentSpec",
    "GpiReport",
    "KlFactor",
    "MessageSet",
    "OneRingGeometry",
    "PrecodingProblem",
    "QuotientPair",
    "RateBreakdown",
    "SolverConfig",
    "SpatialCovariance",
    "StackLayout",
    "StackedPrecoder",
    "TrialRecord",
    "UserChannelState",
    "build_kkt_operators",
    "build_one_ring_covariance",
    "build_pair",
    "common_rate_bound",
    "derive_seed",
    "emit_outputs",
    "evaluate_quotient",
    "exact_breakdown",
    "extract_precoders",
    "gpi_step",
    "kl_factorize",
    "lambda_log2",
    "lmmse_error_covariance",
    "mrt_initial_stack",
    "mrt_precoders",
    "objective_J",
    "partial_common_rate_bound",
    "private_rate_bound",
    "run_convergence_trace",
    "run_sweep",
    "run_trial",
    "rzf_precoders",
    "sample_channel",
    "sample_csit",
    "sdma_gpi_solve",
    "softmin",
    "softmin_weights",
    "solve",
]
