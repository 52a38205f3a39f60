"""EVM Milne - rescaled Einstein-Vlasov-Maxwell slices near the Milne model.

This package evolves and verifies the rescaled Einstein-Vlasov-Maxwell
system in constant-mean-curvature, spatially harmonic gauge: slice state,
geometry, Vlasov transport, Maxwell potentials, elliptic gauge solves,
energies and the reporting harness.
"""

from .backgrounds import BackgroundConfig, BackgroundGeometry, FlatTorus, HomogeneousHyperbolic
from .config import RunConfig, default_log_level, thread_count
from .elliptic import SolverSettings, solve_lapse, solve_shift, solve_time_derivatives
from .energies import (
    EnergyOrders,
    EnergyReport,
    EnergyWeights,
    decay_fit,
    energy_report,
    gronwall_check,
    support_radius,
    total_energy,
)
from .errors import (
    ConfigError,
    EllipticSolvabilityError,
    EVMError,
    FitDomainError,
    FrameChangeMismatch,
    GaugeProjectionFailed,
    InvalidWeights,
    LapsePositivityViolation,
    ShiftTooLarge,
    SingularMetric,
    SolverDiverged,
    StepSizeViolation,
    SupportOverflow,
)
from .evolution import (
    EvolutionConfig,
    SliceEvolver,
    StepRecord,
    alternative_evolution_form,
    constraint_residuals,
    step,
)
from .geometry import SliceGeometry, einstein_spectrum, geometric_time_derivatives
from .harness import ScenarioOutcome, fixed_point, reduce, run_scenario, verify
from .kinetic import commutator_suite, transport_rhs
from .maxwell import FaradayField, faraday_from_potential, gauge_project, maxwell_stress
from .moments import SourceSet, assemble_sources
from .particles import ParticleCloud, particle_moments, push_characteristics
from .report import CSV_COLUMNS, build_summary, emit_report
from .scenarios import build_initial_state, milne_state
from .state import (
    DistributionGrid,
    LapseShift,
    MomentumLattice,
    PotentialState,
    SliceState,
    SpatialMetric,
    TraceFreeSym2,
)

__version__ = "0.1.0"

__all__ = [
    # Backgrounds
    "BackgroundConfig",
    "BackgroundGeometry",
    "FlatTorus",
    "HomogeneousHyperbolic",
    # State
    "DistributionGrid",
    "LapseShift",
    "MomentumLattice",
    "PotentialState",
    "SliceState",
    "SpatialMetric",
    "TraceFreeSym2",
    # Geometry and kinetics
    "SliceGeometry",
    "einstein_spectrum",
    "geometric_time_derivatives",
    "commutator_suite",
    "transport_rhs",
    "FaradayField",
    "faraday_from_potential",
    "gauge_project",
    "maxwell_stress",
    "SourceSet",
    "assemble_sources",
    # Elliptic
    "SolverSettings",
    "solve_lapse",
    "solve_shift",
    "solve_time_derivatives",
    # Evolution
    "EvolutionConfig",
    "SliceEvolver",
    "StepRecord",
    "alternative_evolution_form",
    "constraint_residuals",
    "step",
    "ParticleCloud",
    "particle_moments",
    "push_characteristics",
    # Energies
    "EnergyOrders",
    "EnergyReport",
    "EnergyWeights",
    "decay_fit",
    "energy_report",
    "gronwall_check",
    "support_radius",
    "total_energy",
    # Runs
    "RunConfig",
    "default_log_level",
    "thread_count",
    "ScenarioOutcome",
    "build_initial_state",
    "milne_state",
    "fixed_point",
    "reduce",
    "run_scenario",
    "verify",
    "CSV_COLUMNS",
    "build_summary",
    "emit_report",
    # Errors
    "EVMError",
    "ConfigError",
    "EllipticSolvabilityError",
    "FitDomainError",
    "FrameChangeMismatch",
    "GaugeProjectionFailed",
    "InvalidWeights",
    "LapsePositivityViolation",
    "ShiftTooLarge",
    "SingularMetric",
    "SolverDiverged",
    "StepSizeViolation",
    "SupportOverflow",
    # Version
    "__version__",
]
