"""Sparse inverse covariance estimation by thresholding and max-det completion."""

from .barrier import ChordalFactor, complete_factor, factor_primal, f_star
from .chordal import ChordalEmbedding, CliqueTree, build_clique_tree, embed, symbolic_embed
from .estimator import ThresholdMDMC
from .exceptions import (
    ConvergenceError,
    InputError,
    NotCompletable,
    NotPositiveDefinite,
    SparseCovError,
    StallError,
)
from .io import read_matrix_market, read_pattern, read_samples, write_matrix_market, write_samples
from .newton_cg import SolverConfig, SolverReport, newton_solve
from .pipeline import kkt_check, rgl_estimate, theorem1_check
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern, build_pattern
from .threshold import LambdaSpec, threshold_covariance

__version__ = "0.1.0"

__all__ = [
    "SparsityPattern",
    "SparseSymMatrix",
    "SampleMatrix",
    "build_pattern",
    "LambdaSpec",
    "threshold_covariance",
    "ChordalEmbedding",
    "CliqueTree",
    "embed",
    "symbolic_embed",
    "build_clique_tree",
    "ChordalFactor",
    "factor_primal",
    "complete_factor",
    "f_star",
    "SolverConfig",
    "SolverReport",
    "newton_solve",
    "rgl_estimate",
    "kkt_check",
    "theorem1_check",
    "ThresholdMDMC",
    "read_matrix_market",
    "write_matrix_market",
    "read_pattern",
    "read_samples",
    "write_samples",
    "SparseCovError",
    "InputError",
    "NotPositiveDefinite",
    "NotCompletable",
    "StallError",
    "ConvergenceError",
]
