"""Variational data assimilation of parabolic PDE initial conditions.

The package estimates the initial condition of a linear or semilinear
parabolic equation from sparse space-time point observations, with the
control constrained to a norm ball.  It provides exact discrete
adjoints and Hessian quadratic forms, first- and second-order optimality
checks, and a twin-experiment command line driver.
"""

from .assimilation import (
    AssimilationProblem,
    ConstraintSpec,
    CostParts,
    DiagonalWeights,
    LaplacianForm,
    ObservationSet,
    QuadraticFormEvaluator,
    ScaledIdentity,
    coercivity_margin,
    constraint_gradient,
    constraint_value,
    cost_and_gradient,
    evaluate_cost,
    evaluate_cost_parts,
    evaluate_gradient,
    hessian_quadratic_form,
    lagrangian_hessian_form,
)
from .config import ExperimentConfig, load_config, parse, save_config, serialize
from .errors import (
    AssimilationError,
    ConfigError,
    ConfigNotFoundError,
    DegenerateMultiplierError,
    DegeneratePairError,
    EllipticityError,
    GradCheckError,
    MultiplierSignError,
    NonlinearityError,
    OracleError,
    ScaleError,
    SolverError,
    StagnationError,
)
from .grid import (
    DiffusionField,
    DiscreteOperator,
    Grid,
    assemble_operator,
    build_grid,
    inner_product,
    l2_norm,
    lp_integral,
)
from .optimize import (
    GrowthProbeReport,
    KktReport,
    OptimConfig,
    OptimHistory,
    SscReport,
    kkt_check,
    optimize,
    project_to_ball,
    quadratic_growth_probe,
    recover_multiplier,
    sample_cone_directions,
    ssc_check,
)
from .sensitivity import (
    PointSource,
    discrete_delta,
    solve_adjoint,
    solve_second_tangent,
    solve_tangent,
)
from .stepping import (
    Nonlinearity,
    StateTrajectory,
    StepSolver,
    TimeGrid,
    lipschitz_probe,
    mild_solution_oracle,
    solve_linear,
    solve_semilinear,
)
from .twin import (
    GeneratedData,
    ObservationPlan,
    TwinResult,
    build_problem,
    generate_truth,
    run_assimilation,
)

__version__ = "0.1.0"

__all__ = [
    "AssimilationError",
    "AssimilationProblem",
    "ConfigError",
    "ConfigNotFoundError",
    "ConstraintSpec",
    "CostParts",
    "DegenerateMultiplierError",
    "DegeneratePairError",
    "DiagonalWeights",
    "DiffusionField",
    "DiscreteOperator",
    "EllipticityError",
    "ExperimentConfig",
    "GeneratedData",
    "GradCheckError",
    "Grid",
    "GrowthProbeReport",
    "KktReport",
    "LaplacianForm",
    "MultiplierSignError",
    "Nonlinearity",
    "NonlinearityError",
    "ObservationPlan",
    "ObservationSet",
    "OptimConfig",
    "OptimHistory",
    "OracleError",
    "PointSource",
    "QuadraticFormEvaluator",
    "ScaleError",
    "ScaledIdentity",
    "SolverError",
    "SscReport",
    "StagnationError",
    "StateTrajectory",
    "StepSolver",
    "TimeGrid",
    "TwinResult",
    "assemble_operator",
    "build_grid",
    "build_problem",
    "coercivity_margin",
    "constraint_gradient",
    "constraint_value",
    "cost_and_gradient",
    "discrete_delta",
    "evaluate_cost",
    "evaluate_cost_parts",
    "evaluate_gradient",
    "generate_truth",
    "hessian_quadratic_form",
    "inner_product",
    "kkt_check",
    "l2_norm",
    "lagrangian_hessian_form",
    "lipschitz_probe",
    "load_config",
    "lp_integral",
    "mild_solution_oracle",
    "optimize",
    "parse",
    "project_to_ball",
    "quadratic_growth_probe",
    "recover_multiplier",
    "run_assimilation",
    "sample_cone_directions",
    "save_config",
    "serialize",
    "solve_adjoint",
    "solve_linear",
    "solve_second_tangent",
    "solve_semilinear",
    "solve_tangent",
    "ssc_check",
    "__version__",
]
