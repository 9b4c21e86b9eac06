"""Event-driven channel-feedback control for multi-antenna beamforming.

The package decides, slot by slot, whether a receiver should spend uplink
bits to refresh the transmitter's channel knowledge.  It models the fading
channel as a finite-state chain over (power, alignment) bins, solves the
average-reward control problem for the net throughput — data rate minus a
per-feedback price — and checks the resulting threshold policies against
link-level simulation, with either perfect or codebook-quantized feedback.

Typical flow: ``make_grid`` + ``estimate_transition_model`` build the chain,
``policy_iteration_average`` solves it, ``simulate_policy`` and
``sweep_alpha`` measure the result, and ``lloyd_codebook`` supplies the
finite-rate feedback alphabet.
"""

from .channel import (
    Beamformer,
    ChannelState,
    FadingParams,
    alignment,
    evolve_channel,
    sample_isotropic_channel,
)
from .codebook import (
    Codebook,
    EpsStats,
    epsilon_statistics,
    lloyd_codebook,
    price_increment_bound,
    quantize_shape,
    random_codebook,
)
from .mdp import (
    Policy,
    RewardSpec,
    SolveResult,
    ThresholdProfile,
    average_reward,
    exhaustive_threshold_search,
    extract_threshold,
    policy_iteration_average,
    threshold_lower_bound,
)
from .simulator import (
    Curve,
    CurvePoint,
    EvalResult,
    TrajectoryConfig,
    average_threshold,
    curve_to_csv,
    periodic_baseline,
    refinement_study,
    simulate_periodic,
    simulate_policy,
    sweep_alpha,
)
from .state_grid import (
    GridSpec,
    TransitionModel,
    estimate_transition_model,
    make_grid,
    quantize_state,
)

__version__ = "0.1.0"

__all__ = [
    "Beamformer",
    "ChannelState",
    "Codebook",
    "Curve",
    "CurvePoint",
    "EpsStats",
    "EvalResult",
    "FadingParams",
    "GridSpec",
    "Policy",
    "RewardSpec",
    "SolveResult",
    "ThresholdProfile",
    "TrajectoryConfig",
    "TransitionModel",
    "alignment",
    "average_reward",
    "average_threshold",
    "curve_to_csv",
    "epsilon_statistics",
    "estimate_transition_model",
    "evolve_channel",
    "exhaustive_threshold_search",
    "extract_threshold",
    "lloyd_codebook",
    "make_grid",
    "periodic_baseline",
    "policy_iteration_average",
    "price_increment_bound",
    "quantize_shape",
    "quantize_state",
    "random_codebook",
    "refinement_study",
    "sample_isotropic_channel",
    "simulate_periodic",
    "simulate_policy",
    "sweep_alpha",
    "threshold_lower_bound",
]
