"""Multi-fidelity bandit simulation library.

Arms can be played at cheap biased fidelities or at the expensive target
level; policies spend a capital budget rather than a play count. The
package provides the multi-fidelity confidence-bound policy, a classical
single-fidelity baseline, budgeted episode simulation with cost-weighted
regret accounting, synthetic problem generators, partition and bound
diagnostics, and a CLI that writes deterministic CSV/JSON reports.
"""

__version__ = "0.1.0"

from .analysis import (
    ArmUsage,
    BoundReport,
    LowerBoundReport,
    PartitionReport,
    UpperBoundReport,
    bound_report,
    fidelity_usage_report,
    kappa_rho,
    lower_bound_coefficient,
    partition_arms,
    upper_bound_coefficient,
)
from .model import (
    Bernoulli,
    ConcentrationModel,
    DecayReport,
    FidelityLadder,
    GapMatrix,
    Gaussian,
    ProblemInstance,
    bernoulli,
    check_decay_assumption,
    default_concentration,
    fidelity_threshold,
    gamma,
    gammas,
    gaps,
    psi,
    psi_inv,
    subgaussian,
    validate_instance,
)
from .policies import (
    PolicyState,
    StepDecision,
    bound_k,
    bound_mks,
    fresh_state,
    mfucb_select,
    mfucb_update,
    play_cap,
    ucb_select,
)
from .presets import PRESETS, default_capital, preset
from .simulator import (
    BatchResult,
    EpisodeResult,
    GaussianSample,
    GeneratorSpec,
    InvariantViolation,
    PolicyAggregate,
    UniformGrid,
    checkpoint_grid,
    generate_instance,
    run_batch,
    run_episode,
    sample_reward,
)

__all__ = [
    "ArmUsage",
    "Bernoulli",
    "BatchResult",
    "BoundReport",
    "ConcentrationModel",
    "DecayReport",
    "EpisodeResult",
    "FidelityLadder",
    "GapMatrix",
    "Gaussian",
    "GaussianSample",
    "GeneratorSpec",
    "InvariantViolation",
    "LowerBoundReport",
    "PRESETS",
    "PartitionReport",
    "PolicyAggregate",
    "PolicyState",
    "ProblemInstance",
    "StepDecision",
    "UpperBoundReport",
    "__version__",
    "bernoulli",
    "bound_k",
    "bound_mks",
    "bound_report",
    "check_decay_assumption",
    "checkpoint_grid",
    "default_capital",
    "default_concentration",
    "fidelity_threshold",
    "fidelity_usage_report",
    "fresh_state",
    "gamma",
    "gammas",
    "gaps",
    "generate_instance",
    "kappa_rho",
    "lower_bound_coefficient",
    "mfucb_select",
    "mfucb_update",
    "partition_arms",
    "play_cap",
    "preset",
    "psi",
    "psi_inv",
    "run_batch",
    "run_episode",
    "sample_reward",
    "subgaussian",
    "ucb_select",
    "upper_bound_coefficient",
    "validate_instance",
]
