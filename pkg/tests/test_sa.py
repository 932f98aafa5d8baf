import numpy as np
import pytest

from vdcopt.model import build_full_cqm, check_feasibility
from vdcopt.qubo import QuboModel, cqm_to_qubo
from vdcopt.solvers import SaParams, SolveBudget, solve_sa
from vdcopt.solvers.sa import EXPLICIT, beta_schedule, default_betas
from vdcopt.topology import build_proxytree


def test_single_variable():
    q = QuboModel.from_coefficients(["x"], {("x", "x"): 5.0})
    r = solve_sa(q, SaParams(sweeps=50, restarts=2))
    assert r.sample == {"x": 0} and r.energy == 0


def test_zero_coefficient_qubo_energy_is_offset():
    q = QuboModel.from_coefficients(["a", "b", "c"], {}, offset=7.5)
    r = solve_sa(q, SaParams(sweeps=10, restarts=1))
    assert r.energy == 7.5


def test_small_frustrated_qubo_finds_minimum():
    coeffs = {("a", "a"): -1, ("b", "b"): -1, ("c", "c"): -1,
              ("a", "b"): 2, ("b", "c"): 2, ("a", "c"): 2}
    q = QuboModel.from_coefficients("abc", coeffs)
    r = solve_sa(q, SaParams(sweeps=200, restarts=3, slack_mode=EXPLICIT))
    assert r.energy == -1
    assert sum(r.sample.values()) == 1


def test_params_validation():
    with pytest.raises(ValueError):
        SaParams(sweeps=0)
    with pytest.raises(ValueError):
        SaParams(beta_hot=2.0, beta_cold=1.0)
    with pytest.raises(ValueError):
        SaParams(slack_mode="other")


def test_schedule_geometric():
    b = beta_schedule(0.1, 10.0, 5)
    assert b[0] == pytest.approx(0.1) and b[-1] == pytest.approx(10.0)
    assert np.allclose(b[1:] / b[:-1], b[1] / b[0])


def test_default_betas_ordered(qubo2):
    for mode in ("marginal", "explicit"):
        hot, cold = default_betas(qubo2, mode)
        assert 0 < hot < cold


def test_reproducible_given_seed(qubo2):
    a = solve_sa(qubo2, SaParams(sweeps=300, restarts=3, seed=11))
    b = solve_sa(qubo2, SaParams(sweeps=300, restarts=3, seed=11))
    assert a.sample == b.sample
    assert a.extra["restart_energies"] == b.extra["restart_energies"]


def test_feasible_flag_is_honest(qubo2, full2):
    for seed in range(5):
        r = solve_sa(qubo2, SaParams(sweeps=30, restarts=1, seed=seed))
        assert r.feasible == (check_feasibility(full2, r.sample) == [])


def test_majority_of_seeds_reach_optimum_with_longer_schedule(qubo2):
    hits = sum(solve_sa(qubo2, SaParams(sweeps=2000, restarts=20, seed=seed)).energy == 130
               for seed in range(10))
    assert hits > 5


def test_explicit_mode_runs_and_reports(qubo2):
    r = solve_sa(qubo2, SaParams(sweeps=200, restarts=2, seed=0, slack_mode=EXPLICIT))
    assert r.extra["slack_mode"] == EXPLICIT
    assert r.extra["qubo_energy"] >= 130


def test_time_limited_keeps_restarting():
    q = cqm_to_qubo(build_full_cqm(build_proxytree(depth=3)))
    r = solve_sa(q, SaParams(sweeps=100, restarts=1), SolveBudget.parse("time:0.3"))
    assert r.extra["restarts"] > 1
    assert 0.3 <= r.wall_time < 0.3 + 0.2


def test_first_feasible_stops_early(qubo2):
    r = solve_sa(qubo2, SaParams(sweeps=1000, restarts=10), SolveBudget.parse("first-feasible"))
    assert r.feasible
    assert r.iterations < 1000
