"""Surrogate and K-surrogate dual bounds for polynomial MINLPs."""

from .estimator import SurrogateDual, check_model
from .lp import LinearProgram, LpSolution, LPStatus, solve_lp
from .metrics import gap_closed, shifted_geomean, target_bound
from .minlp import (
    SolveLimits,
    SubProblem,
    SubSolveOutcome,
    SubStatus,
    lagrangian_value,
    solve_subproblem,
)
from .mip import MipLimits, MipProblem, MipSolution, MipStatus, solve_mip
from .model import (
    AggregationMatrix,
    Model,
    ModelError,
    Polynomial,
    aggregate,
    evaluate,
    load_model,
    parse_model,
)
from .relax import build_reformulation, emit_cuts
from .surrogate import (
    BendersConfig,
    BendersReport,
    MasterState,
    build_master_milp,
    evaluate_K_surrogate,
    run_benders,
    solve_master_lp,
)
from .tree import AggregationPool, NodeContext, local_bound

__version__ = "0.1.0"
