"""Sparse transport solvers with two applications on top.

The core is a stochastic dual ascent solver for discrete optimal
transport that keeps only potentials and a sparse support in memory,
certified against an exact network-simplex oracle.  On top of it sit a
transport-aligned domain-adaptation trainer and a shape-morphing
engine, plus a command line for all three.
"""
from .adapt import (
    AdaptConfig,
    AdaptMode,
    AdaptModel,
    ClassifierParams,
    EncoderParams,
    EvalPath,
    LabeledBatch,
    augmented_features,
    cross_entropy_loss,
    entropy_regularizer,
    evaluate,
    forward_latent,
    init_model,
    make_rotated_gaussian_task,
    model_from_json,
    model_to_json,
    run_synthetic_benchmark,
    total_loss,
    train,
    transport_loss,
)
from .dual import (
    OTSolution,
    SolverConfig,
    SolverState,
    StepDecay,
    dual_objective,
    extract_support,
    parse_solver_config,
    project_feasible,
    solution_to_json,
    solve,
)
from .errors import CapacityError, Diverged, InvalidInput, SupportEmpty
from .exact import (
    ExactSolution,
    Infeasible,
    dense_gamma_bytes,
    solve_exact,
    solve_restricted,
)
from .measures import (
    CostOracle,
    DiscreteMeasure,
    Metric,
    PointCloud,
    TransportPlan,
    cost_entry,
    marginals,
    plan_cost,
    plan_from_json,
    plan_to_json,
    read_point_cloud_csv,
    uniform_measure,
    write_point_cloud_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "AdaptMode",
    "AdaptModel",
    "CapacityError",
    "ClassifierParams",
    "CostOracle",
    "DiscreteMeasure",
    "Diverged",
    "EncoderParams",
    "EvalPath",
    "ExactSolution",
    "Infeasible",
    "InvalidInput",
    "LabeledBatch",
    "Metric",
    "OTKitError",
    "OTSolution",
    "PointCloud",
    "SolverConfig",
    "SolverState",
    "StepDecay",
    "SupportEmpty",
    "TransportPlan",
    "augmented_features",
    "cost_entry",
    "cross_entropy_loss",
    "dense_gamma_bytes",
    "dual_objective",
    "entropy_regularizer",
    "evaluate",
    "extract_support",
    "forward_latent",
    "init_model",
    "make_rotated_gaussian_task",
    "marginals",
    "model_from_json",
    "model_to_json",
    "parse_solver_config",
    "plan_cost",
    "plan_from_json",
    "plan_to_json",
    "project_feasible",
    "read_point_cloud_csv",
    "run_synthetic_benchmark",
    "solution_to_json",
    "solve",
    "solve_exact",
    "solve_restricted",
    "total_loss",
    "train",
    "transport_loss",
    "uniform_measure",
    "write_point_cloud_csv",
    "__version__",
]
