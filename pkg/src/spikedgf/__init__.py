"""Gradient flow on the normalized Stiefel manifold for multi-spiked tensor
estimation: model, flow integrators, noiseless correlation dynamics,
closed-form predictors and Monte-Carlo harnesses."""

from .dynamics import evolve_correlations_only, integrate
from .errors import (
    AmbiguousSelectionError,
    BudgetError,
    ConfigError,
    DomainError,
    IntegrationError,
    ManifoldError,
    NotPositiveDefiniteError,
    ReductionBreakdownError,
    SamplingError,
    SpikedGFError,
)
from .experiments import (
    Cell,
    CellResult,
    SweepSpec,
    concentration_experiment,
    parity_experiment,
    recovery_sweep,
    write_sweep,
)
from .manifold import (
    check_point,
    orthogonality_error,
    polar_retract,
    project_tangent,
    sample_positive,
    sample_uniform,
    symmetric_inverse_sqrt,
)
from .model import (
    SpikedModel,
    correlations,
    euclidean_risk_gradient,
    generate,
    generator_m,
    generator_m_projection,
    hamiltonian,
    load_model,
    noise_drift,
    point_with_correlations,
    riemannian_gradient,
    save_model,
)
from .population import EliminationReport, detect_elimination, integrate_population, population_rhs
from .theory import (
    EnvelopeParams,
    GreedySelection,
    Regime,
    blowup_time,
    envelope_lower,
    envelope_upper,
    epsilon_n,
    greedy_selection,
    hitting_time_bounds,
    init_matrix,
    predict_hitting_heuristic,
    prediction_report,
    regime_classifier,
)
from .trajectory import FlowConfig, Trajectory

__version__ = "0.1.0"
