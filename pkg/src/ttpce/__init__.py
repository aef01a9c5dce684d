"""Tensor-train polynomial chaos for elliptic PDEs with random coefficients."""

from .cross import BlockEvaluator, FunctionEvaluator, block_cross, dmrg_cross
from .errors import (CoercivityError, DomainError, EvaluationError, FactorizationError,
                     InvalidInputError, SingularSubmatrixError)
from .experiment import ExperimentConfig, ResultTable, run_experiment, sweep
from .fem import build_lshape_mesh
from .postproc import covariance, exceedance_probability, mean_field
from .random_field import build_kappa_tt, build_pce_problem
from .solver import SolverOptions, als_solve
from .tt import TTMatrix, TTTensor, tt_dot, tt_load, tt_round, tt_save

__version__ = "0.1.0"
