"""Penalty reformulation of a :class:`CqmModel` into an unconstrained QUBO.

Each constraint contributes ``lagrange * residual**2``. Equalities use
``lhs - rhs`` directly; an inequality ``lhs <= rhs`` gets a non-negative
integer slack ``z`` encoded in truncated binary so that ``0 <= z <= R`` with
``R = rhs - min(lhs)`` exactly. Link-activation implications ``a <= b`` use
the two-variable penalty ``a * (1 - b)`` and need no slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .model import (EQ, IMPLICATION_FAMILIES, LE, CqmModel, MissingVariableError, Sample, Var,
                    check_feasibility, evaluate_objective)


class UnsupportedModelError(ValueError):
    pass


class TriviallyInfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    lagrange: float = 1.0
    slack_policy: str = "binary-expansion"
    auto_weight: bool = True

    def __post_init__(self):
        if self.slack_policy != "binary-expansion":
            raise ValueError(f"unsupported slack policy {self.slack_policy!r}")
        if not self.auto_weight and not self.lagrange > 0:
            raise ValueError("lagrange must be > 0")


def auto_lagrange(model: CqmModel) -> float:
    return 1.0 + sum(c for c in model.objective.values() if c > 0)


def slack_bits_for(range_: int) -> int:
    if range_ < 0:
        raise ValueError("slack range must be non-negative")
    return 0 if range_ == 0 else math.ceil(math.log2(range_ + 1))


def slack_weights(range_: int) -> list[int]:
    """Truncated binary weights ``1, 2, 4, ..., R - (2**(b-1) - 1)`` summing to ``R``."""
    b = slack_bits_for(range_)
    if b == 0:
        return []
    weights = [2 ** i for i in range(b - 1)]
    weights.append(range_ - (2 ** (b - 1) - 1))
    return weights


def encode_slack(value: int, weights: list[int]) -> list[int]:
    """Bits reproducing ``value`` (``0 <= value <= sum(weights)``) under ``weights``."""
    if not weights:
        return []
    b = len(weights)
    bits = [0] * b
    if value > 2 ** (b - 1) - 1:
        bits[-1] = 1
        value -= weights[-1]
    for i in range(b - 1):
        bits[i] = (value >> i) & 1
    return bits


def _integral(x: float) -> bool:
    return float(x).is_integer()


@dataclass(frozen=True)
class QuboModel:
    variables: tuple
    quadratic: dict
    offset: float = 0.0
    slack_registry: dict = field(default_factory=dict)
    lagrange: float = 0.0
    num_source: int = 0
    source: CqmModel | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_coefficients(cls, variables, coefficients: Mapping, offset: float = 0.0) -> "QuboModel":
        """Plain QUBO over ``variables``; keys of ``coefficients`` are variable pairs."""
        variables = tuple(variables)
        pos = {var: i for i, var in enumerate(variables)}
        quad: dict = {}
        for (a, b), coef in coefficients.items():
            _accumulate(quad, pos[a], pos[b], coef)
        return cls(variables, _prune(quad), float(offset), {}, 0.0, len(variables), None)

    @cached_property
    def index(self) -> dict:
        return {var: i for i, var in enumerate(self.variables)}

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @cached_property
    def linear(self) -> np.ndarray:
        h = np.zeros(self.num_variables)
        for (a, b), coef in self.quadratic.items():
            if a == b:
                h[a] = coef
        return h

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric off-diagonal couplings as (indptr, indices, data)."""
        n = self.num_variables
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for (a, b), coef in self.quadratic.items():
            if a != b:
                nbrs[a].append((b, coef))
                nbrs[b].append((a, coef))
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            indptr[i + 1] = indptr[i] + len(nbrs[i])
        indices = np.empty(indptr[-1], dtype=np.int64)
        data = np.empty(indptr[-1], dtype=np.float64)
        for i in range(n):
            row = sorted(nbrs[i])
            indices[indptr[i]:indptr[i + 1]] = [j for j, _ in row]
            data[indptr[i]:indptr[i + 1]] = [c for _, c in row]
        return indptr, indices, data

    def energy_array(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        indptr, indices, data = self.csr
        rows = np.repeat(np.arange(self.num_variables), np.diff(indptr))
        pair = 0.5 * float(np.sum(data * x[rows] * x[indices]))
        return float(self.offset + self.linear @ x + pair)

    def to_array(self, sample: Mapping) -> np.ndarray:
        out = np.empty(self.num_variables)
        for i, var in enumerate(self.variables):
            try:
                out[i] = sample[var]
            except KeyError:
                raise MissingVariableError(var) from None
        return out

    def to_sample(self, x) -> Sample:
        return {var: int(round(val)) for var, val in zip(self.variables, x)}

    def source_sample(self, x) -> Sample:
        """Strip slack bits from a QUBO assignment (array or mapping)."""
        if isinstance(x, Mapping):
            return {var: int(x[var]) for var in self.variables[:self.num_source]}
        return {var: int(round(val)) for var, val in zip(self.variables[:self.num_source], x)}


def _accumulate(quad: dict, a: int, b: int, coef: float) -> None:
    if a > b:
        a, b = b, a
    quad[(a, b)] = quad.get((a, b), 0.0) + coef


def _prune(quad: dict) -> dict:
    return {k: c for k, c in sorted(quad.items()) if c != 0}


def _add_square(quad: dict, terms: list[tuple[int, float]], const: float, weight: float) -> float:
    """Add ``weight * (sum c_i y_i + const)**2`` over binaries; return the constant part."""
    for n, (i, ci) in enumerate(terms):
        _accumulate(quad, i, i, weight * (ci * ci + 2.0 * ci * const))
        for j, cj in terms[n + 1:]:
            _accumulate(quad, i, j, 2.0 * weight * ci * cj)
    return weight * const * const


def _is_implication(con) -> bool:
    if con.family not in IMPLICATION_FAMILIES or con.sense != LE or con.rhs != 0:
        return False
    return sorted(con.terms.values()) == [-1.0, 1.0]


def cqm_to_qubo(model: CqmModel, cfg: PenaltyConfig | None = None) -> QuboModel:
    cfg = cfg or PenaltyConfig()
    lagrange = auto_lagrange(model) if cfg.auto_weight else float(cfg.lagrange)

    plan = []  # (constraint, slack weights or None for implications)
    for con in model.constraints:
        if con.sense == EQ:
            plan.append((con, []))
            continue
        if _is_implication(con):
            plan.append((con, None))
            continue
        if con.max_lhs() <= con.rhs:
            continue  # can never be violated
        range_ = con.rhs - con.min_lhs()
        if range_ < 0:
            raise TriviallyInfeasibleError(f"constraint {con.id} cannot be satisfied by any assignment")
        if not (_integral(range_) and all(_integral(c) for c in con.terms.values())):
            raise UnsupportedModelError(
                f"constraint {con.id} has non-integer data; integer slack cannot close it exactly")
        plan.append((con, slack_weights(int(range_))))

    variables = list(model.variables)
    registry: dict[str, list[tuple[Var, int]]] = {}
    for con, weights in plan:
        if weights:
            bits = [Var("slack", (con.id, b)) for b in range(len(weights))]
            registry[con.id] = list(zip(bits, weights))
            variables.extend(bits)
    pos = {var: i for i, var in enumerate(variables)}

    quad: dict = {}
    for var, coef in model.objective.items():
        _accumulate(quad, pos[var], pos[var], coef)
    offset = model.offset
    for con, weights in plan:
        if weights is None:
            a = next(var for var, c in con.terms.items() if c > 0)
            b = next(var for var, c in con.terms.items() if c < 0)
            _accumulate(quad, pos[a], pos[a], lagrange)
            _accumulate(quad, pos[a], pos[b], -lagrange)
            continue
        terms = [(pos[var], c) for var, c in con.terms.items()]
        terms += [(pos[bit], float(w)) for bit, w in registry.get(con.id, [])]
        offset += _add_square(quad, terms, -con.rhs, lagrange)

    return QuboModel(tuple(variables), _prune(quad), float(offset), registry, lagrange,
                     len(model.variables), model)


def qubo_energy(q: QuboModel, x: Mapping) -> float:
    total = q.offset
    for var in q.variables:
        if var not in x:
            raise MissingVariableError(var)
    for (a, b), coef in q.quadratic.items():
        va = x[q.variables[a]]
        if va:
            total += coef * va * x[q.variables[b]]
    return total


def complete_slacks(model: CqmModel, q: QuboModel, x: Mapping) -> Sample:
    """Extend a source sample with the penalty-minimising slack bits."""
    out = {var: x[var] for var in model.variables}
    for cid, bits in q.slack_registry.items():
        con = model.constraint_index[cid]
        need = con.rhs - con.lhs(x)
        top = sum(w for _, w in bits)
        value = int(min(max(round(need), 0), top))
        for (var, _), bit in zip(bits, encode_slack(value, [w for _, w in bits])):
            out[var] = bit
    return out


def penalty_breakdown(model: CqmModel, q: QuboModel, x: Mapping) -> dict[str, float]:
    """Per-constraint penalty contribution of a completed QUBO sample (diagnostics)."""
    out = {}
    for con in model.constraints:
        resid = con.lhs(x) - con.rhs
        if con.sense == LE:
            bits = q.slack_registry.get(con.id)
            if bits is None:
                if _is_implication(con):
                    out[con.id] = q.lagrange * max(resid, 0.0)
                continue
            resid += sum(w * x[var] for var, w in bits)
        out[con.id] = q.lagrange * resid * resid
    return out


# --- interchange format ----------------------------------------------------

def export_qubo(q: QuboModel) -> str:
    """Sparse coordinate text: header comments, ``n nnz`` line, then ``i j coeff`` rows."""
    lines = [
        "# vdcopt-qubo/1",
        f"# offset {q.offset!r}",
        f"# lagrange {q.lagrange!r}",
    ]
    lines += [f"# var {i} {var}" for i, var in enumerate(q.variables)]
    lines.append(f"{q.num_variables} {len(q.quadratic)}")
    lines += [f"{a} {b} {coef!r}" for (a, b), coef in sorted(q.quadratic.items())]
    return "\n".join(lines) + "\n"


def read_qubo(text: str) -> QuboModel:
    """Parse :func:`export_qubo` output; variables come back as their names."""
    offset = 0.0
    lagrange = 0.0
    names: dict[int, str] = {}
    header = None
    quad: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split(maxsplit=2)
            if parts and parts[0] == "offset":
                offset = float(parts[1])
            elif parts and parts[0] == "lagrange":
                lagrange = float(parts[1])
            elif parts and parts[0] == "var":
                names[int(parts[1])] = parts[2]
            continue
        fields = line.split()
        try:
            if header is None:
                header = (int(fields[0]), int(fields[1]))
                continue
            a, b, coef = int(fields[0]), int(fields[1]), float(fields[2])
        except (IndexError, ValueError):
            raise ValueError(f"line {lineno}: malformed entry {raw!r}") from None
        if not (0 <= a <= b < header[0]):
            raise ValueError(f"line {lineno}: index out of range or not upper-triangular")
        _accumulate(quad, a, b, coef)
    if header is None:
        raise ValueError("missing 'n nnz' header line")
    if len(quad) != header[1]:
        raise ValueError(f"expected {header[1]} entries, found {len(quad)}")
    variables = tuple(names.get(i, str(i)) for i in range(header[0]))
    return QuboModel(variables, _prune(quad), offset, {}, lagrange, header[0], None)


def decode(q: QuboModel, x) -> tuple[Sample, float, bool]:
    """Source sample, its objective, and its feasibility for a QUBO assignment."""
    arr = q.to_array(x) if isinstance(x, Mapping) else np.asarray(x, dtype=float)
    sample = q.source_sample(arr)
    if q.source is None:
        return sample, q.energy_array(arr), True
    return sample, evaluate_objective(q.source, sample), not check_feasibility(q.source, sample)
