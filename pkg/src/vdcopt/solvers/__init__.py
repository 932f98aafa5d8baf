"""Solvers for the full and split placement-and-routing problem."""

from .base import EXHAUSTIVE, FIRST_FEASIBLE, TIME_LIMITED, Deadline, SolveBudget, SolveReport
from .decompose import DecompParams, brute_force_min, solve_decomposed
from .exact import InsufficientCapacityError, greedy_first_fit, solve_exact, solve_routing_exact
from .paths import enumerate_flow_paths
from .sa import SaParams, solve_sa
from .split import ROUTING_SOLVERS, solve_split

__all__ = [
    "EXHAUSTIVE", "FIRST_FEASIBLE", "TIME_LIMITED", "Deadline", "SolveBudget", "SolveReport",
    "DecompParams", "brute_force_min", "solve_decomposed",
    "InsufficientCapacityError", "greedy_first_fit", "solve_exact", "solve_routing_exact",
    "enumerate_flow_paths", "SaParams", "solve_sa", "ROUTING_SOLVERS", "solve_split",
]
