"""Alternating variance-reduced solvers for stochastic bilevel problems."""
from .core import DivergenceError, draw_batch, make_rng, project_ball
from .estimators import EstimatorConfig, EstimatorState, anchor, vr_step
from .oracle import ProblemOracle, TupleBatch, dir_v, dir_x, dir_y
from .solver import OuterState, SolverConfig, aux_refine, ll_refine, outer_step, solve

__all__ = [
    "DivergenceError",
    "EstimatorConfig",
    "EstimatorState",
    "OuterState",
    "ProblemOracle",
    "SolverConfig",
    "TupleBatch",
    "anchor",
    "aux_refine",
    "dir_v",
    "dir_x",
    "dir_y",
    "draw_batch",
    "ll_refine",
    "make_rng",
    "outer_step",
    "project_ball",
    "solve",
    "vr_step",
]

__version__ = "0.1.0"
