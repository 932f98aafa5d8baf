"""Two-phase split method: greedy server placement, then routing only."""

from __future__ import annotations

import time

from ..model import build_full_cqm, build_routing_cqm, check_feasibility, embed, evaluate_objective
from ..qubo import PenaltyConfig, cqm_to_qubo
from ..topology import Proxytree
from .base import SolveBudget, SolveReport
from .decompose import DecompParams, solve_decomposed
from .exact import greedy_first_fit, solve_routing_exact
from .sa import SaParams, solve_sa

ROUTING_SOLVERS = ("exact", "sa", "decomposed")


def solve_split(tree: Proxytree, routing_solver: str = "exact", budget: SolveBudget | None = None,
                *, sa_params: SaParams | None = None, decomp_params: DecompParams | None = None,
                penalty: PenaltyConfig | None = None, placement=None) -> SolveReport:
    """Place VMs with first-fit, then route flows with ``routing_solver``.

    The reported energy and feasibility refer to the full model, so split and
    full results are directly comparable. ``placement`` overrides the greedy
    first phase. ``proof_of_optimality`` is always false because the placement
    is fixed; ``extra["routing_optimal"]`` says whether the routing phase was
    proven optimal.
    """
    if routing_solver not in ROUTING_SOLVERS:
        raise ValueError(f"unknown routing solver {routing_solver!r}; use one of {ROUTING_SOLVERS}")
    budget = budget or SolveBudget()
    name = f"split-{routing_solver}"
    start = time.monotonic()
    if placement is None:
        placement = greedy_first_fit(tree)

    if routing_solver == "exact":
        report = solve_routing_exact(tree, placement, budget, name=name)
        report.extra["routing_optimal"] = report.proof_of_optimality
        report.proof_of_optimality = False
        report.wall_time = time.monotonic() - start
        return report

    routing = build_routing_cqm(tree, placement)
    q = cqm_to_qubo(routing, penalty)
    if routing_solver == "sa":
        sub = solve_sa(q, sa_params, budget, name=name)
        seed = (sa_params or SaParams()).seed
    else:
        sub = solve_decomposed(q, decomp_params, budget, name=name)
        seed = (decomp_params or DecompParams()).seed
    full = build_full_cqm(tree)
    sample = embed(tree, routing.placement, sub.sample)
    energy = evaluate_objective(full, sample)
    feasible = not check_feasibility(full, sample)
    extra = dict(sub.extra)
    extra.update(placement=dict(routing.placement), routing_optimal=False,
                 qubo_variables=q.num_variables)
    return SolveReport(name, sample, energy, feasible, time.monotonic() - start, sub.iterations,
                       seed, False, extra)
