"""Weighted-average ensembles of modified-Cholesky covariance estimates."""

from .errors import (CholEnsembleError, ConvergenceFailure, InfeasibleProblem, InvalidInput,
                     NoFeasibleXi, NotPositiveDefinite, NumericalError, ParseError, StageError)
from .linalg_core import Permutation
from .mcd import CholeskyFactors, DataMatrix, LassoConfig, lasso_fit, mcd_fit, reconstruct
from .simplex_qp import SimplexQP, WeightVector, solve, solve_penalized
from .wae_ensemble import METHODS, EnsembleResult, estimate, sample_orderings

__all__ = [
    "CholEnsembleError", "ConvergenceFailure", "InfeasibleProblem", "InvalidInput",
    "NoFeasibleXi", "NotPositiveDefinite", "NumericalError", "ParseError", "StageError",
    "Permutation", "CholeskyFactors", "DataMatrix", "LassoConfig", "lasso_fit", "mcd_fit",
    "reconstruct", "SimplexQP", "WeightVector", "solve", "solve_penalized", "METHODS",
    "EnsembleResult", "estimate", "sample_orderings",
]
