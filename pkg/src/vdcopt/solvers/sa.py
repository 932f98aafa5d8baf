"""Single-flip Metropolis simulated annealing on a QUBO.

Two move sets are available:

``marginal`` (default when the QUBO remembers its source model)
    Flips only source variables and keeps every slack register at its
    conditional optimum. An inequality then costs
    ``lagrange * max(0, lhs - rhs)**2``, which is exactly the QUBO energy
    minimised over its slack bits, so reported energies are still QUBO
    energies. Without this, every flow-edge flip must be paired with a
    slack-bit flip worth ``lagrange * d**2`` and the chain freezes.

``explicit``
    Plain single-flip dynamics over all QUBO variables, slack bits included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..model import is_feasible_array
from ..qubo import QuboModel, complete_slacks, decode
from .base import TIME_LIMITED, SolveBudget, SolveReport

MARGINAL = "marginal"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class SaParams:
    sweeps: int = 1000
    restarts: int = 10
    beta_hot: float | None = None
    beta_cold: float | None = None
    seed: int = 0
    slack_mode: str = MARGINAL

    def __post_init__(self):
        if self.sweeps <= 0 or self.restarts <= 0:
            raise ValueError("sweeps and restarts must be positive")
        if self.beta_hot is not None and self.beta_cold is not None and not (
                0 < self.beta_hot < self.beta_cold):
            raise ValueError("need 0 < beta_hot < beta_cold")
        if self.slack_mode not in (MARGINAL, EXPLICIT):
            raise ValueError(f"unknown slack mode {self.slack_mode!r}")


@njit(cache=True)
def _qubo_sweep(x, field, indptr, indices, data, beta, rand):
    for i in range(x.size):
        delta = field[i] if x[i] == 0 else -field[i]
        if delta <= 0.0 or rand[i] < math.exp(-beta * delta):
            step = 1.0 if x[i] == 0 else -1.0
            x[i] = 1 - x[i]
            for p in range(indptr[i], indptr[i + 1]):
                field[indices[p]] += data[p] * step


@njit(cache=True)
def _qubo_fields(x, h, indptr, indices, data):
    out = h.copy()
    for i in range(x.size):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] += data[p]
    return out


@njit(cache=True)
def _marginal_sweep(x, lhs, cost, colptr, rows, vals, rhs, is_eq, lagrange, beta, rand):
    for i in range(x.size):
        step = 1.0 if x[i] == 0 else -1.0
        delta = cost[i] * step
        for p in range(colptr[i], colptr[i + 1]):
            r = rows[p]
            old = lhs[r] - rhs[r]
            new = old + vals[p] * step
            if is_eq[r]:
                delta += lagrange * (new * new - old * old)
            else:
                po = old * old if old > 0.0 else 0.0
                pn = new * new if new > 0.0 else 0.0
                delta += lagrange * (pn - po)
        if delta <= 0.0 or rand[i] < math.exp(-beta * delta):
            x[i] = 1 - x[i]
            for p in range(colptr[i], colptr[i + 1]):
                lhs[rows[p]] += vals[p] * step


def _median_rule(scales: np.ndarray, min_coef: float) -> tuple[float, float]:
    """Hot end accepts a median-sized uphill flip with p=0.8, cold end the smallest one with p=0.01."""
    scales = scales[scales > 0]
    typical = float(np.median(scales)) if scales.size else 1.0
    hot = math.log(1 / 0.8) / max(typical, min_coef)
    cold = math.log(100.0) / min_coef
    if hot >= cold:
        hot = cold / 10.0
    return hot, cold


def default_betas(q: QuboModel, slack_mode: str = MARGINAL) -> tuple[float, float]:
    if slack_mode == MARGINAL and q.source is not None:
        c, a, _, _ = q.source.arrays
        scales = np.abs(c) + q.lagrange * np.asarray(a.multiply(a).sum(axis=0)).ravel()
        nz = np.abs(c[c != 0])
        return _median_rule(scales, float(nz.min()) if nz.size else 1.0)
    indptr, _, data = q.csr
    row_abs = np.array([np.abs(data[indptr[i]:indptr[i + 1]]).sum()
                        for i in range(q.num_variables)])
    scales = np.abs(q.linear) + row_abs
    coeffs = np.abs(np.fromiter(q.quadratic.values(), float, len(q.quadratic)))
    coeffs = coeffs[coeffs > 0]
    return _median_rule(scales, float(coeffs.min()) if coeffs.size else 1.0)


def beta_schedule(hot: float, cold: float, sweeps: int) -> np.ndarray:
    if sweeps == 1:
        return np.array([cold])
    return np.geomspace(hot, cold, sweeps)


def prepare(q: QuboModel) -> None:
    """Build the cached sparse structures and load the compiled kernels.

    Solvers call this before starting their clock, so time budgets measure
    search rather than one-off setup.
    """
    q.csr, q.linear
    if q.source is not None:
        q.source.arrays
    x = np.zeros(1, dtype=np.int8)
    one = np.zeros(1)
    ptr = np.zeros(2, dtype=np.int64)
    empty_i = np.zeros(0, dtype=np.int32)
    _qubo_sweep(x, one.copy(), ptr, empty_i, one[:0], 1.0, one)
    _qubo_fields(x, one, ptr, empty_i, one[:0])
    _marginal_sweep(x, one.copy(), one, ptr.astype(np.int32), empty_i, one[:0], one,
                    np.zeros(1, dtype=bool), 1.0, 1.0, one)


def polish_slacks(q: QuboModel, x: np.ndarray) -> np.ndarray:
    """Set slack bits to their penalty-minimising values for the source part of ``x``."""
    if q.source is None or not q.slack_registry:
        return np.asarray(x, dtype=float)
    full = complete_slacks(q.source, q, q.to_sample(x))
    return q.to_array(full)


class _Chain:
    """One annealing chain in either move set; ``x`` always spans all QUBO variables."""

    def __init__(self, q: QuboModel, mode: str, rng: np.random.Generator):
        self.q = q
        self.mode = mode
        self.rng = rng
        n_moves = q.num_source if mode == MARGINAL else q.num_variables
        self.state = rng.integers(0, 2, n_moves).astype(np.int8)
        if mode == MARGINAL:
            c, a, rhs, is_eq = q.source.arrays
            csc = a.tocsc()
            self.args = (c, csc.indptr, csc.indices, csc.data, rhs, is_eq, float(q.lagrange))
            self.lhs = csc @ self.state.astype(float)
        else:
            indptr, indices, data = q.csr
            self.args = (indptr, indices, data)
            self.field = _qubo_fields(self.state, q.linear, indptr, indices, data)

    def sweep(self, beta: float) -> None:
        rand = self.rng.random(self.state.size)
        if self.mode == MARGINAL:
            c, colptr, rows, vals, rhs, is_eq, lagrange = self.args
            _marginal_sweep(self.state, self.lhs, c, colptr, rows, vals, rhs, is_eq, lagrange,
                            beta, rand)
        else:
            _qubo_sweep(self.state, self.field, *self.args, beta, rand)

    def source_part(self) -> np.ndarray:
        return self.state[:self.q.num_source].astype(float)

    def full(self) -> np.ndarray:
        if self.mode == MARGINAL:
            x = np.zeros(self.q.num_variables)
            x[:self.q.num_source] = self.state
            return polish_slacks(self.q, x)
        return polish_slacks(self.q, self.state.astype(float))


def solve_sa(q: QuboModel, params: SaParams | None = None, budget: SolveBudget | None = None,
             name: str = "sa") -> SolveReport:
    """Anneal ``q`` with best-of-restarts and report the decoded best sample.

    Under a ``time_limited`` budget restarts continue until the deadline; with
    ``first_feasible`` the run stops after the first sweep whose decoded
    source sample satisfies every constraint.

    The reported ``energy`` is the source-model objective of the decoded
    sample; ``extra["qubo_energy"]`` holds the penalised value after slack
    completion. Infeasible results are reported with ``feasible=False``.
    """
    params = params or SaParams()
    budget = budget or SolveBudget()
    prepare(q)
    deadline = budget.deadline()
    rng = np.random.default_rng(params.seed)
    mode = params.slack_mode if q.source is not None else EXPLICIT
    hot, cold = default_betas(q, mode)
    hot = params.beta_hot if params.beta_hot is not None else hot
    cold = params.beta_cold if params.beta_cold is not None else cold
    betas = beta_schedule(hot, cold, params.sweeps)
    src = q.source

    best_x, best_e = None, math.inf
    restart_energies = []
    sweeps_done = 0
    restarts = 0
    hit_feasible = False
    while restarts == 0 or not deadline.expired():
        if budget.mode != TIME_LIMITED and restarts >= params.restarts:
            break
        chain = _Chain(q, mode, rng)
        for beta in betas:
            chain.sweep(beta)
            sweeps_done += 1
            if budget.first_feasible and (src is None or is_feasible_array(src, chain.source_part())):
                hit_feasible = True
                break
            if deadline.expired():
                break
        x = chain.full()
        e = q.energy_array(x)
        restart_energies.append(e)
        restarts += 1
        if e < best_e or hit_feasible:
            best_e, best_x = e, x
        if hit_feasible:
            break

    sample, energy, feasible = decode(q, best_x)
    return SolveReport(name, sample, energy, feasible, deadline.elapsed(), sweeps_done, params.seed,
                       False, {"qubo_energy": best_e, "restarts": restarts, "slack_mode": mode,
                               "restart_energies": restart_energies,
                               "beta_hot": hot, "beta_cold": cold})
