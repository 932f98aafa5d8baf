import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from vdcopt.bench import (BenchRecord, ConfigError, ConflictError, ExperimentConfig,
                          RecordFormatError, append_record, load_records, persist_records,
                          render_table, run_experiment)
from vdcopt.solvers import SaParams, SolveBudget


def rec(depth=2, variant="full", solver="exact", energy=130.0, rep=0, wall=0.5, feasible=True):
    return BenchRecord(depth, variant, solver, energy, wall, feasible, rep, rep, 0.0)


def test_single_exact_run():
    records = run_experiment(ExperimentConfig(depths=(2,), solvers=("exact",)))
    assert len(records) == 1
    assert records[0].energy == 130 and records[0].feasible


def test_first_feasible_restriction_property():
    cfg = ExperimentConfig(depths=(2, 3), solvers=("exact", "split-exact"),
                           budget=SolveBudget.parse("first-feasible"))
    records = run_experiment(cfg)
    assert len(records) == 4
    for depth in (2, 3):
        cell = {r.variant: r.energy for r in records if r.depth == depth}
        assert cell["split"] >= cell["full"]


def test_empty_depths():
    assert run_experiment(ExperimentConfig(depths=())) == []


def test_unknown_solver_rejected_before_running(tmp_path):
    out = tmp_path / "r.jsonl"
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(depths=(2,), solvers=("exact", "gurobi"), out=str(out)))
    assert not out.exists()


@pytest.mark.parametrize("field, value", [("reps", 0), ("depths", (1, 2))])
def test_invalid_config(field, value):
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(**{field: value}))


def test_records_appended_during_run(tmp_path):
    out = tmp_path / "r.jsonl"
    seen = []

    def progress(r):
        seen.append(len(load_records(str(out))))

    run_experiment(ExperimentConfig(depths=(2, 3), solvers=("exact",), out=str(out)), progress)
    assert seen == [1, 2]


def test_seeds_follow_repetitions():
    cfg = ExperimentConfig(depths=(2,), solvers=("sa",), reps=3, seed_base=10,
                           sa_params=SaParams(sweeps=100, restarts=1))
    assert [r.seed for r in run_experiment(cfg)] == [10, 11, 12]


def test_deterministic_energies():
    cfg = ExperimentConfig(depths=(2,), solvers=("sa", "split-decomposed"), reps=2,
                           sa_params=SaParams(sweeps=200, restarts=2))
    a = [(r.energy, r.feasible) for r in run_experiment(cfg)]
    b = [(r.energy, r.feasible) for r in run_experiment(cfg)]
    assert a == b


def test_reference_wall_time_becomes_budget():
    cfg = ExperimentConfig(depths=(3,), solvers=("sa",), reference="exact",
                           budget=SolveBudget.parse("time:5"), sa_params=SaParams(sweeps=50))
    ref, other = run_experiment(cfg)
    assert ref.solver == "exact"
    # the annealer stops once the exact solver's time is used up
    assert other.wall_time < max(ref.wall_time, 1e-3) + 0.25


def test_depth_cap_becomes_nan():
    (r,) = run_experiment(ExperimentConfig(depths=(5,), solvers=("exact",)))
    assert math.isnan(r.energy) and not r.feasible and "capped" in r.note


def test_render_energy_table():
    records = [rec(2, energy=130.0), rec(3, energy=376.0)]
    assert render_table(records) == (
        "| Depth | Full exact |\n"
        "|---|---|\n"
        "| 2 | 130 |\n"
        "| 3 | 376 |\n")


def test_render_empty():
    assert render_table([]) == "| Depth |\n|---|\n"


def test_mean_with_count():
    records = [rec(energy=100.0, rep=0), rec(energy=140.0, rep=1)]
    assert "| 2 | 120 (n=2) |" in render_table(records)


def test_missing_cells_are_nan():
    records = [rec(2, "split", energy=168.4), rec(2, "full"), rec(3, "full", energy=376.0),
               rec(3, "split", energy=math.nan, feasible=False)]
    table = render_table(records)
    assert table.splitlines()[0] == "| Depth | Split exact | Full exact |"
    assert "| 2 | 168.4 | 130 |" in table
    assert "| 3 | NaN | 376 |" in table


def test_partial_nan_annotated():
    records = [rec(energy=100.0, rep=0), rec(energy=math.nan, rep=1, feasible=False)]
    assert "100 (n=1 of 2)" in render_table(records)


def test_time_layout():
    records = [rec(wall=0.25, rep=0), rec(wall=0.75, rep=1)]
    assert "| 2 | 0.5 (n=2) |" in render_table(records, layout="time")


def test_csv_format():
    text = render_table([rec(energy=math.nan, feasible=False)], fmt="csv")
    lines = text.splitlines()
    assert lines[0] == "depth,variant,solver,energy,time_s,feasible,rep,seed"
    assert lines[1] == "2,full,exact,NaN,0.500000,false,0,0"


def test_conflicting_duplicates_listed():
    with pytest.raises(ConflictError, match="depth=2 full/exact rep=0"):
        render_table([rec(energy=130.0), rec(energy=140.0)])


def test_identical_duplicates_collapse():
    assert "| 2 | 130 |" in render_table([rec(), rec()])


def test_round_trip(tmp_path):
    path = str(tmp_path / "r.jsonl")
    records = [rec(2), rec(3, "split", "sa", 400.5, rep=1), rec(4, energy=math.nan, feasible=False)]
    persist_records(records, path)
    back = load_records(path)
    assert back[:2] == records[:2]
    assert math.isnan(back[2].energy) and back[2].depth == 4


def test_truncated_final_line(tmp_path):
    path = tmp_path / "r.jsonl"
    persist_records([rec(2), rec(3)], str(path))
    with open(path, "a") as fh:
        fh.write('{"depth": 4, "varia')
    with pytest.raises(RecordFormatError) as err:
        load_records(str(path))
    assert err.value.line == 3
    assert [r.depth for r in err.value.records] == [2, 3]
    assert [r.depth for r in load_records(str(path), strict=False)] == [2, 3]


def test_malformed_middle_line(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text(rec().to_json() + "\nnot json\n" + rec(3).to_json() + "\n")
    with pytest.raises(RecordFormatError, match="line 2"):
        load_records(str(path), strict=False)


def test_empty_file(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text("")
    assert load_records(str(path)) == []


def test_append_record(tmp_path):
    path = str(tmp_path / "r.jsonl")
    append_record(rec(2), path)
    append_record(rec(3), path)
    assert [r.depth for r in load_records(path)] == [2, 3]


record_strategy = st.builds(
    rec, depth=st.integers(2, 4), variant=st.sampled_from(["split", "full"]),
    solver=st.sampled_from(["exact", "sa", "decomposed"]),
    energy=st.one_of(st.just(math.nan), st.integers(50, 500).map(float)),
    rep=st.integers(0, 3), wall=st.floats(0, 10))


@settings(max_examples=50, deadline=None)
@given(st.lists(record_strategy, max_size=25), st.randoms())
def test_aggregation_permutation_invariant(records, rnd):
    unique = {}
    for r in records:
        unique.setdefault((r.depth, r.variant, r.solver, r.rep), r)
    records = list(unique.values())
    shuffled = records[:]
    rnd.shuffle(shuffled)
    assert render_table(records) == render_table(shuffled)
    assert render_table(records, fmt="csv") == render_table(shuffled, fmt="csv")


@settings(max_examples=30, deadline=None)
@given(st.lists(record_strategy, max_size=10))
def test_persist_load_round_trip(tmp_path_factory, records):
    path = str(tmp_path_factory.mktemp("rt") / "r.jsonl")
    persist_records(records, path)
    back = load_records(path)
    assert [r.to_json() for r in back] == [r.to_json() for r in records]
