"""
Copyright (c) 2026 rdm-dynamics developers. All rights reserved.

rdm-dynamics: nonlinear reduced density matrix dynamics on a periodic 1D grid
"""

from __future__ import annotations

from ._contract import InfluenceModel
from ._core import (
    DegenerateStateError,
    DensityMatrix,
    DiagnosticsRecord,
    SimulationError,
    SpatialGrid,
    StateAnnihilatedError,
    TwoParticleState,
    WaveFunction,
    diagnostics,
    fourier,
    fully_mixed,
    gaussian,
    inverse_fourier,
    min_eigenvalue,
    mixture,
    partial_trace,
    pure_density,
    to_momentum,
    to_position,
)
from ._version import version as __version__
from .composite import (
    EprPreparation,
    InteractionSpec,
    MomentumMeasurement,
    PositionMeasurement,
    entanglement_run,
    evolve_composite,
    measure_R,
    pointer_state,
    prepare_epr,
    product_state,
    reduced,
    width_sweep,
)
from .config import ConfigError, ConfigIssue, ScenarioConfig, parse_config
from .evolve import (
    EvolveConfig,
    NormFluxLog,
    RunResult,
    continuity_residual,
    density_flux,
    gain_step,
    normalize,
    register,
    run,
    step,
)
from .influence import (
    DetectorArray,
    Dephased,
    Element,
    EprMomentumGain,
    EprPositionGain,
    PairStatistics,
    RateField,
    ZeroModel,
    check_dominance,
    epr_target_position,
    fire_element,
    rate,
)
from .measurement import (
    DetectorComparison,
    EnsembleConfig,
    EnsembleReport,
    collapse,
    detector_comparison,
    element_weights,
    ensemble_report,
    sample_and_collapse,
    sample_element,
)
from .propagator import (
    PotentialSpec,
    free_kernel,
    harmonic_kernel,
    kernel_convergence,
    schrodinger_step,
    timesliced_kernel,
    vonneumann_step,
)
from .scenarios import run_scenario

__all__ = [
    "ConfigError",
    "ConfigIssue",
    "DegenerateStateError",
    "DensityMatrix",
    "Dephased",
    "DetectorArray",
    "DetectorComparison",
    "DiagnosticsRecord",
    "Element",
    "EnsembleConfig",
    "EnsembleReport",
    "EprMomentumGain",
    "EprPositionGain",
    "EprPreparation",
    "EvolveConfig",
    "InfluenceModel",
    "InteractionSpec",
    "MomentumMeasurement",
    "NormFluxLog",
    "PairStatistics",
    "PositionMeasurement",
    "PotentialSpec",
    "RateField",
    "RunResult",
    "ScenarioConfig",
    "SimulationError",
    "SpatialGrid",
    "StateAnnihilatedError",
    "TwoParticleState",
    "WaveFunction",
    "ZeroModel",
    "__version__",
    "check_dominance",
    "collapse",
    "continuity_residual",
    "density_flux",
    "detector_comparison",
    "diagnostics",
    "element_weights",
    "ensemble_report",
    "entanglement_run",
    "epr_target_position",
    "evolve_composite",
    "fire_element",
    "fourier",
    "free_kernel",
    "fully_mixed",
    "gain_step",
    "gaussian",
    "harmonic_kernel",
    "inverse_fourier",
    "kernel_convergence",
    "measure_R",
    "min_eigenvalue",
    "mixture",
    "normalize",
    "parse_config",
    "partial_trace",
    "pointer_state",
    "prepare_epr",
    "product_state",
    "pure_density",
    "rate",
    "reduced",
    "register",
    "run",
    "run_scenario",
    "sample_and_collapse",
    "sample_element",
    "schrodinger_step",
    "step",
    "timesliced_kernel",
    "to_momentum",
    "to_position",
    "vonneumann_step",
    "width_sweep",
]
