"""Entropy-minimal martingale couplings between finitely supported measures."""

from .core import (
    Coupling,
    Gauge,
    Potentials,
    Residuals,
    apply_gauge,
    canonical_gauge,
    coupling_from_potentials,
    dual_objective,
    log_density,
    rel_entropy,
    residuals,
)
from .exceptions import (
    AtomOutOfRange,
    EmptySupport,
    Infeasible,
    InfeasibleRow,
    MBridgeError,
    MeanMismatch,
    NonConvergence,
    NonPositiveWeight,
    NotNormalized,
    ShapeMismatch,
)
from .measures import (
    DiscreteMeasure,
    FeasibilityReport,
    ProblemInstance,
    center_pair,
    check_feasibility,
    make_instance,
    potential_fn,
    validate_measure,
)
from .oracle import (
    GeneratorSpec,
    coupling_distance,
    dykstra_solve,
    generate_instance,
    two_point_closed_form,
)
from .solver import Mode, SolveReport, SolverConfig, solve, solve_relaxed, solve_row, update_g

__version__ = "0.1.0"
