"""Benchmark campaigns: run solvers over tree depths, persist and tabulate results.

Records are stored one JSON object per line with the fields ``depth``,
``variant`` (``split`` or ``full``), ``solver``, ``energy`` (``null`` when no
solution was reported), ``wall_time``, ``feasible``, ``rep``, ``seed``,
``timestamp`` and ``note``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

from .model import build_full_cqm
from .qubo import PenaltyConfig, cqm_to_qubo
from .solvers import (TIME_LIMITED, DecompParams, SaParams, SolveBudget, SolveReport,
                      solve_decomposed, solve_exact, solve_sa, solve_split)
from .topology import TreeParams, build_proxytree

BASE_SOLVERS = ("exact", "sa", "decomposed")
SOLVER_SPECS = BASE_SOLVERS + tuple(f"split-{s}" for s in BASE_SOLVERS)
VARIANTS = ("split", "full")
CSV_COLUMNS = ("depth", "variant", "solver", "energy", "time_s", "feasible", "rep", "seed")


class ConfigError(ValueError):
    pass


class RecordFormatError(ValueError):
    """Malformed record file; ``records`` holds every complete line read before the bad one."""

    def __init__(self, message: str, line: int, records: list["BenchRecord"]):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.records = records


class ConflictError(ValueError):
    pass


def parse_solver_spec(spec: str) -> tuple[str, str]:
    """``"split-sa"`` -> ``("split", "sa")``; ``"exact"`` -> ``("full", "exact")``."""
    spec = spec.strip()
    if spec not in SOLVER_SPECS:
        raise ConfigError(f"unknown solver {spec!r}; choose from {', '.join(SOLVER_SPECS)}")
    if spec.startswith("split-"):
        return "split", spec[len("split-"):]
    return "full", spec


@dataclass(frozen=True)
class ExperimentConfig:
    depths: tuple[int, ...] = (2, 3)
    solvers: tuple[str, ...] = ("exact", "split-exact")
    budget: SolveBudget = field(default_factory=SolveBudget)
    reps: int = 1
    seed_base: int = 0
    tree_params: TreeParams = field(default_factory=TreeParams)
    out: str | None = None
    reference: str | None = None
    sa_params: SaParams = field(default_factory=SaParams)
    decomp_params: DecompParams = field(default_factory=DecompParams)
    report_infeasible: bool = False

    def validate(self) -> None:
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if any(d < 2 for d in self.depths):
            raise ConfigError("every depth must be >= 2")
        for spec in self.solvers:
            parse_solver_spec(spec)
        if self.reference is not None:
            parse_solver_spec(self.reference)


@dataclass(frozen=True)
class BenchRecord:
    depth: int
    variant: str
    solver: str
    energy: float
    wall_time: float
    feasible: bool
    rep: int
    seed: int
    timestamp: float = 0.0
    note: str = ""

    @property
    def spec(self) -> str:
        return self.solver if self.variant == "full" else f"split-{self.solver}"

    def to_json(self) -> str:
        doc = asdict(self)
        if math.isnan(self.energy):
            doc["energy"] = None
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchRecord":
        names = {f.name for f in fields(cls)}
        missing = {"depth", "variant", "solver", "energy", "wall_time", "feasible", "rep",
                   "seed"} - doc.keys()
        if missing:
            raise ValueError(f"missing fields {sorted(missing)}")
        extra = doc.keys() - names
        if extra:
            raise ValueError(f"unknown fields {sorted(extra)}")
        doc = dict(doc)
        doc["energy"] = math.nan if doc["energy"] is None else float(doc["energy"])
        if doc["variant"] not in VARIANTS:
            raise ValueError(f"bad variant {doc['variant']!r}")
        return cls(**doc)

    def same_result(self, other: "BenchRecord") -> bool:
        both_nan = math.isnan(self.energy) and math.isnan(other.energy)
        return (both_nan or self.energy == other.energy) and self.feasible == other.feasible


def run_one(tree, variant: str, solver: str, budget: SolveBudget, seed: int,
            sa_params: SaParams, decomp_params: DecompParams,
            penalty: PenaltyConfig | None = None, qubo_cache: dict | None = None) -> SolveReport:
    """Run one solver spec on ``tree`` and return its report."""
    sa_params = replace(sa_params, seed=seed)
    decomp_params = replace(decomp_params, seed=seed)
    if variant == "split":
        return solve_split(tree, solver, budget, sa_params=sa_params, decomp_params=decomp_params,
                           penalty=penalty)
    if solver == "exact":
        return solve_exact(tree, budget)
    # the QUBO is rebuilt only when the tree changes
    cache = qubo_cache if qubo_cache is not None else {}
    if cache.get("tree") is not tree:
        cache.update(tree=tree, q=cqm_to_qubo(build_full_cqm(tree), penalty))
    q = cache["q"]
    if solver == "sa":
        return solve_sa(q, sa_params, budget)
    return solve_decomposed(q, decomp_params, budget)


def append_record(record: BenchRecord, path: str) -> None:
    """Append one record and force it to disk before returning."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _record(depth, variant, solver, report: SolveReport, rep, seed, keep_infeasible, note=""):
    energy = report.energy
    if not report.found or (not report.feasible and not keep_infeasible):
        energy = math.nan
    return BenchRecord(depth, variant, solver, float(energy), report.wall_time, report.feasible,
                       rep, seed, time.time(), note)


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[BenchRecord]:
    """Run every (depth, repetition, solver) combination sequentially.

    With a time-limited budget and a ``reference`` solver, the reference runs
    first and its measured wall time becomes the budget of every other solver
    in the same depth and repetition. Each record is appended to ``cfg.out``
    (if set) before the next run starts. ``progress`` is called with every
    finished record.
    """
    cfg.validate()
    specs = list(cfg.solvers)
    timed_reference = cfg.budget.mode == TIME_LIMITED and cfg.reference is not None
    if timed_reference:
        specs = [cfg.reference] + [s for s in specs if s != cfg.reference]
    records: list[BenchRecord] = []
    for depth in sorted(cfg.depths):
        tree = build_proxytree(cfg.tree_params, depth=depth)
        cache: dict = {}
        for rep in range(cfg.reps):
            seed = cfg.seed_base + rep
            budget = cfg.budget
            for spec in specs:
                variant, solver = parse_solver_spec(spec)
                note = ""
                try:
                    report = run_one(tree, variant, solver, budget, seed, cfg.sa_params,
                                     cfg.decomp_params, qubo_cache=cache)
                except ValueError as exc:
                    # e.g. the exact solver's depth cap; the cell becomes NaN
                    report = SolveReport(spec, None, math.nan, False, 0.0, seed=seed)
                    note = str(exc)
                rec = _record(depth, variant, solver, report, rep, seed, cfg.report_infeasible, note)
                records.append(rec)
                if cfg.out:
                    append_record(rec, cfg.out)
                if progress is not None:
                    progress(rec)
                if timed_reference and spec == cfg.reference:
                    budget = SolveBudget(TIME_LIMITED, max(report.wall_time, 1e-3))
    return records


def persist_records(records: Iterable[BenchRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_records(path: str, strict: bool = True) -> list[BenchRecord]:
    """Read a record file.

    A malformed line raises :class:`RecordFormatError` carrying its line
    number and the records read so far. With ``strict=False`` a malformed
    final line (an interrupted append) is dropped instead.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out: list[BenchRecord] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(BenchRecord.from_dict(json.loads(line)))
        except (ValueError, TypeError, AttributeError) as exc:
            if not strict and number == len(lines):
                break
            raise RecordFormatError(str(exc), number, out) from None
    return out


def _check_conflicts(records: Sequence[BenchRecord]) -> list[BenchRecord]:
    seen: dict[tuple, BenchRecord] = {}
    clashes = []
    for rec in records:
        key = (rec.depth, rec.variant, rec.solver, rec.rep)
        if key in seen:
            if not seen[key].same_result(rec):
                clashes.append(key)
            continue
        seen[key] = rec
    if clashes:
        listed = ", ".join(f"depth={d} {v}/{s} rep={r}" for d, v, s, r in sorted(set(clashes)))
        raise ConflictError(f"conflicting records for {listed}")
    return list(seen.values())


def _solver_order(name: str) -> tuple:
    return (BASE_SOLVERS.index(name) if name in BASE_SOLVERS else len(BASE_SOLVERS), name)


def _number(x: float, digits: int) -> str:
    text = f"{x:.{digits}f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _cell(values: list[float], total: int, digits: int) -> str:
    finite = [x for x in values if not math.isnan(x)]
    if not finite:
        return "NaN"
    text = _number(sum(finite) / len(finite), digits)
    if total > 1 or len(finite) != total:
        text += f" (n={len(finite)})" if len(finite) == total else f" (n={len(finite)} of {total})"
    return text


def render_table(records: Iterable[BenchRecord], layout: str = "energy",
                 fmt: str = "markdown") -> str:
    """Depth-by-(variant, solver) table of mean energies or wall times.

    Columns list the split variant before the full one for each solver;
    cells with no usable value read ``NaN``. The ``csv`` format instead lists
    one row per record with the columns in :data:`CSV_COLUMNS`.
    """
    if layout not in ("energy", "time"):
        raise ValueError(f"unknown layout {layout!r}")
    if fmt not in ("markdown", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    recs = _check_conflicts(list(records))
    recs.sort(key=lambda r: (r.depth, VARIANTS.index(r.variant), _solver_order(r.solver), r.rep))

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in recs:
            energy = "NaN" if math.isnan(r.energy) else _number(r.energy, 6)
            writer.writerow([r.depth, r.variant, r.solver, energy, f"{r.wall_time:.6f}",
                             str(r.feasible).lower(), r.rep, r.seed])
        return buf.getvalue()

    solvers = sorted({r.solver for r in recs}, key=_solver_order)
    columns = [(v, s) for s in solvers for v in VARIANTS
               if any(r.solver == s and r.variant == v for r in recs)]
    cells: dict[tuple, list[float]] = defaultdict(list)
    for r in recs:
        cells[(r.depth, r.variant, r.solver)].append(
            r.energy if layout == "energy" else r.wall_time)
    digits = 2 if layout == "energy" else 3
    header = ["Depth"] + [f"{v.capitalize()} {s}" for v, s in columns]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for depth in sorted({r.depth for r in recs}):
        row = [str(depth)]
        for v, s in columns:
            values = cells.get((depth, v, s), [])
            row.append(_cell(values, len(values), digits))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
