"""stochres: simulation and capacity analysis for stochastic bit reservoirs."""

__version__ = "0.1.0"

from .reservoir import (
    BitstringDistribution,
    InputMeasure,
    InputSequence,
    Reservoir,
    ReservoirSpec,
    StochasticGate,
    TrajectoryEnsemble,
    build_reservoir,
    fading_memory_error,
    run_exact,
    sample_trajectories,
    step_exact,
)
from .signals import SignalMatrix, empirical_probabilities, probability_signals
from .transforms import (
    moments_for_masks,
    moments_from_probabilities,
    moments_from_samples,
    probabilities_from_moments,
)
from .capacity import (
    CapacityReport,
    EigentaskDecomposition,
    IPCReport,
    TargetBasis,
    build_target_basis,
    capacity,
    eigentask_decomposition,
    gram_matrices,
    ipc_probability_rep,
    ipc_spectral,
    shot_averaged_second_moment,
    total_capacity,
)
from .experiments import (
    LearnabilityCurve,
    ScalingCurve,
    ShatterWitness,
    SwitchingFamily,
    TailFit,
    classify_tails,
    detection_sample_threshold,
    fat_shattering_lower_bound,
    power_basis_demo,
    sample_complexity_curve,
    scan_system_size,
    shift_register_flip_family,
    switching_family,
)
from .qembed import bernoulli_channel, correlated_flip_check, rotation_pair, verify_rate_relation

__all__ = [
    "BitstringDistribution",
    "CapacityReport",
    "EigentaskDecomposition",
    "IPCReport",
    "InputMeasure",
    "InputSequence",
    "LearnabilityCurve",
    "Reservoir",
    "ReservoirSpec",
    "ScalingCurve",
    "ShatterWitness",
    "SignalMatrix",
    "StochasticGate",
    "SwitchingFamily",
    "TailFit",
    "TargetBasis",
    "TrajectoryEnsemble",
    "bernoulli_channel",
    "build_reservoir",
    "build_target_basis",
    "capacity",
    "classify_tails",
    "correlated_flip_check",
    "detection_sample_threshold",
    "eigentask_decomposition",
    "empirical_probabilities",
    "fading_memory_error",
    "fat_shattering_lower_bound",
    "gram_matrices",
    "ipc_probability_rep",
    "ipc_spectral",
    "moments_for_masks",
    "moments_from_probabilities",
    "moments_from_samples",
    "power_basis_demo",
    "probabilities_from_moments",
    "probability_signals",
    "rotation_pair",
    "run_exact",
    "sample_complexity_curve",
    "sample_trajectories",
    "scan_system_size",
    "shot_averaged_second_moment",
    "shift_register_flip_family",
    "step_exact",
    "switching_family",
    "total_capacity",
    "verify_rate_relation",
]
