"""Robust sparse subspace clustering with corrupted and missing data."""
from .certificates import (CriterionReport, check_nontrivial, check_optimality_certificate,
                           check_subspace_detection, construct_dual_certificate,
                           default_lambda, deterministic_criterion,
                           intermediate_detection_criterion, missing_data_criteria,
                           nontriviality_lambda_lower, nu_norm_diagnostics,
                           random_model_criteria)
from .clustering import (AffinityGraph, DegenerateGraphError, affinity_from_weights,
                         build_affinity, clustering_error,
                         estimate_num_clusters, lsssc, spectral_cluster)
from .core import (ColumnSolution, ConvergenceError, DataMatrix, DegenerateDualError,
                   DimensionMismatchError, GeometrySummary, InfeasibleError,
                   InvalidParameterError, MaskMatrix, SubspaceEnsemble, validate_dataset)
from .experiments import (Bisection, Cell, ExperimentConfig, Success, TrialResult, run_sweep,
                          run_trial)
from .generator import (GeneratorConfig, NoiseSpec, add_bounded_noise, apply_missing, generate,
                        sample_points, sample_subspaces)
from .geometry import (SymmetricPolytope, compute_incoherence, compute_r,
                       perturbation_inradius_bound, polar_duality_check, restricted_inradius)
from .solver import (SolverOptions, dual_direction, solve_column, solve_lsssc,
                     solve_noiseless_l1)

__all__ = [
    "AffinityGraph", "Bisection", "Cell", "ColumnSolution", "ConvergenceError", "CriterionReport", "DataMatrix",
    "DegenerateDualError", "DegenerateGraphError", "DimensionMismatchError",
    "ExperimentConfig", "GeneratorConfig", "GeometrySummary", "InfeasibleError",
    "InvalidParameterError", "MaskMatrix", "NoiseSpec", "SolverOptions", "SubspaceEnsemble",
    "Success", "SymmetricPolytope", "TrialResult", "add_bounded_noise", "apply_missing",
    "affinity_from_weights", "build_affinity", "check_nontrivial", "check_optimality_certificate",
    "check_subspace_detection", "clustering_error", "compute_incoherence", "compute_r",
    "construct_dual_certificate", "default_lambda", "deterministic_criterion",
    "dual_direction", "estimate_num_clusters", "generate", "intermediate_detection_criterion",
    "lsssc", "missing_data_criteria", "nontriviality_lambda_lower", "nu_norm_diagnostics",
    "perturbation_inradius_bound", "polar_duality_check", "random_model_criteria",
    "restricted_inradius", "run_sweep", "run_trial", "sample_points", "sample_subspaces",
    "solve_column", "solve_lsssc", "solve_noiseless_l1", "spectral_cluster",
    "validate_dataset",
]
