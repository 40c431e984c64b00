"""Direct multi-emitter localization from a moving antenna array.

Pipeline: synthesize snapshots for a scene (:mod:`covloc.scene`), estimate
and stack per-instant covariances (:mod:`covloc.covariance`), then recover
emitter positions by sparse recovery over the candidate dictionary
(:mod:`covloc.dictionary`, :mod:`covloc.solver`).  :mod:`covloc.crb`
bounds the achievable accuracy and :mod:`covloc.bench` runs seeded
Monte-Carlo sweeps.
"""

from .covariance import (
    CovarianceMeasurement,
    NoiseCovariance,
    estimate_covariance,
    estimate_noise_floor,
    measure_snapshots,
    noise_covariance,
    stack_measurement,
)
from .crb import CrbResult, compute_crb
from .dictionary import CandidateSet, DictionaryMatrix, atom, atom_derivative, build
from .errors import (
    BoundUndefinedError,
    ConfigError,
    CovlocError,
    GeometryError,
    NumericalError,
    RankDeficiencyError,
)
from .scene import (
    SPEED_OF_LIGHT_MPS,
    ArrayTrajectory,
    Scenario,
    SnapshotBlock,
    random_linear_trajectory,
    scenario_from_dict,
    scenario_from_json,
    steering_vector,
    synthesize,
)
from .solver import (
    GridSpec,
    LineSearchSpec,
    LocalizationResult,
    SolverConfig,
    SolverState,
    l0_oracle,
    objective,
    position_gradient,
    prune,
    refine_positions,
    reweighted_rho,
    solve_off_grid,
    solve_on_grid,
    surrogate_weights,
    update_rho,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayTrajectory",
    "BoundUndefinedError",
    "CandidateSet",
    "ConfigError",
    "CovarianceMeasurement",
    "CovlocError",
    "CrbResult",
    "DictionaryMatrix",
    "GeometryError",
    "GridSpec",
    "LineSearchSpec",
    "LocalizationResult",
    "NoiseCovariance",
    "NumericalError",
    "RankDeficiencyError",
    "Scenario",
    "SnapshotBlock",
    "SolverConfig",
    "SolverState",
    "SPEED_OF_LIGHT_MPS",
    "atom",
    "atom_derivative",
    "build",
    "compute_crb",
    "estimate_covariance",
    "estimate_noise_floor",
    "l0_oracle",
    "measure_snapshots",
    "noise_covariance",
    "objective",
    "position_gradient",
    "prune",
    "random_linear_trajectory",
    "refine_positions",
    "reweighted_rho",
    "scenario_from_dict",
    "scenario_from_json",
    "solve_off_grid",
    "solve_on_grid",
    "stack_measurement",
    "steering_vector",
    "surrogate_weights",
    "synthesize",
    "update_rho",
]
