import dataclasses
import math

import numpy as np
import pytest

from oracles import brute_force_optimum
from vdcopt.model import build_full_cqm, check_feasibility, evaluate_objective
from vdcopt.solvers import (InsufficientCapacityError, SolveBudget, greedy_first_fit, solve_exact,
                            solve_routing_exact)
from vdcopt.topology import Flow, build_proxytree


def test_depth2_optimum(tree2):
    r = solve_exact(tree2)
    assert r.energy == 130
    assert r.feasible and r.proof_of_optimality
    assert check_feasibility(build_full_cqm(tree2), r.sample) == []


def test_depth3_optimum(tree3):
    r = solve_exact(tree3)
    assert r.energy == 376 and r.proof_of_optimality


def test_depth4_optimum():
    r = solve_exact(build_proxytree(depth=4))
    assert r.energy == 984 and r.proof_of_optimality


def test_two_vms_per_server():
    r = solve_exact(build_proxytree(depth=2, server_capacity=20))
    assert r.energy == 68 == 2 * (10 + 2 * 12)
    placement = r.extra["placement"]
    assert placement[0] == placement[1] and placement[2] == placement[3]


@pytest.mark.parametrize("capacity", [10, 12, 20])
def test_pruning_never_removes_optimum_depth2(capacity):
    tree = build_proxytree(depth=2, server_capacity=capacity)
    reference = solve_exact(tree, symmetry=False, bound_pruning=False).energy
    assert solve_exact(tree).energy == reference
    assert solve_exact(tree, symmetry=False).energy == reference
    assert solve_exact(tree, bound_pruning=False).energy == reference


@pytest.mark.parametrize("capacity, kwargs", [
    (10, {"symmetry": False}), (10, {"bound_pruning": False}), (20, {"symmetry": False}),
])
def test_pruning_never_removes_optimum_depth3(capacity, kwargs):
    # with both prunings off depth 3 takes about a minute, so each is disabled in turn
    tree = build_proxytree(depth=3, server_capacity=capacity)
    assert solve_exact(tree, **kwargs).energy == solve_exact(tree).energy


def test_depth3_two_vms_per_server():
    assert solve_exact(build_proxytree(depth=3, server_capacity=20)).energy == 204 == 4 * (15 + 3 * 12)


@pytest.mark.parametrize("capacity, rate, util", [
    (10, 4, 6), (12, 2, 6), (20, 4, 6), (10, 8, 5), (20, 9, 6), (15, 5, 5), (18, 6, 6),
])
def test_matches_brute_force_oracle(capacity, rate, util):
    tree = build_proxytree(depth=2, server_capacity=capacity, avg_data_rate=rate, vm_util=util)
    expected, _ = brute_force_optimum(tree)
    r = solve_exact(tree, monotone=False)
    assert r.energy == expected
    assert solve_exact(tree).energy == expected


def test_unroutable_instance_reported_infeasible():
    # server links carry 8 units, flows need 9, and VMs cannot share a server
    tree = build_proxytree(depth=2, avg_data_rate=9)
    assert brute_force_optimum(tree)[0] == math.inf
    r = solve_exact(tree)
    assert not r.found and not r.feasible and math.isnan(r.energy)


def test_first_feasible_returns_a_feasible_sample(tree3):
    r = solve_exact(tree3, SolveBudget.parse("first-feasible"))
    assert r.feasible and not r.proof_of_optimality
    assert r.energy >= 376


def test_time_limited_budget_is_honoured():
    tree = build_proxytree(depth=4)
    r = solve_exact(tree, SolveBudget.parse("time:0.05"))
    assert r.wall_time < 0.05 + 0.5
    assert r.feasible


def test_depth_cap():
    with pytest.raises(ValueError, match="capped"):
        solve_exact(build_proxytree(depth=5))


def test_report_energy_is_model_objective(tree3):
    r = solve_exact(tree3)
    assert evaluate_objective(build_full_cqm(tree3), r.sample) == r.energy
    assert r.summary().startswith("solver=exact energy=376 feasible=True")
    assert r.to_dict()["energy"] == 376


def test_greedy_first_fit_examples():
    assert greedy_first_fit(build_proxytree(depth=2)) == {0: 0, 1: 1, 2: 2, 3: 3}
    assert greedy_first_fit(build_proxytree(depth=2, vm_util=5)) == {0: 0, 1: 0, 2: 1, 3: 1}
    tree = dataclasses.replace(build_proxytree(depth=2), vm_util=(11,) * 4)
    with pytest.raises(InsufficientCapacityError):
        greedy_first_fit(tree)


def test_routing_exact_for_fixed_placements(tree2):
    assert solve_routing_exact(tree2, [0, 1, 2, 3]).extra["routing_cost"] == 42
    crossed = solve_routing_exact(tree2, {0: 0, 1: 2, 2: 1, 3: 3})
    assert crossed.extra["routing_cost"] > 42


def test_colocated_flow_has_no_routing(tree2):
    tree = build_proxytree(depth=2, server_capacity=20)
    r = solve_routing_exact(tree, [0, 0, 1, 1])
    assert r.extra["paths"] == {0: [], 1: []}
    assert not any(v for var, v in r.sample.items() if var.kind == "flow_edge")


def test_swapped_pairing_costs_more(tree2):
    tree = dataclasses.replace(tree2, flows=(Flow(0, 0, 2, 4), Flow(1, 1, 3, 4)))
    assert solve_exact(tree).energy == brute_force_optimum(tree)[0] == 130
    assert solve_routing_exact(tree, greedy_first_fit(tree)).energy == 178
