"""Decompose / sub-sample / compose loop on a QUBO.

Each round ranks variables by energy impact (magnitude of the single-flip
energy change under the current sample), clamps everything outside the
selected window, solves the window exactly (Gray-code enumeration) or by
annealing, and writes the result back only if it strictly lowers the energy;
after an accepted write every slack register is re-completed exactly, which
can only lower the energy further. The starting sample comes from one
annealing restart (``init="sa"``) or is uniformly random.
When a round does not improve, the window rolls down the ranking; a full
pass without improvement means no window can change the sample any more.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..model import is_feasible_array
from ..qubo import QuboModel, decode
from .base import TIME_LIMITED, SolveBudget, SolveReport
from .sa import EXPLICIT, SaParams, _qubo_fields, polish_slacks, prepare, solve_sa

EXACT_LIMIT = 25


@dataclass(frozen=True)
class DecompParams:
    size: int = 20
    rounds: int = 50
    selection: str = "energy-impact"
    seed: int = 0
    exact_limit: int = EXACT_LIMIT
    sub_sweeps: int = 200
    sub_restarts: int = 2
    init: str = "sa"

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("subproblem size must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.selection != "energy-impact":
            raise ValueError(f"unknown selection rule {self.selection!r}")
        if self.init not in ("sa", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.exact_limit > 30:
            raise ValueError("exact_limit above 30 is not enumerable")


@njit(cache=True)
def _gray_min(h, nbr_ptr, nbr_idx, nbr_val):
    n = h.size
    z = np.zeros(n, dtype=np.int8)
    field = h.copy()
    energy = 0.0
    best = 0.0
    best_code = 0
    code = 0
    for step in range(1, 1 << n):
        # Gray code flips the lowest set bit of the step counter
        i = 0
        while not (step >> i) & 1:
            i += 1
        if z[i] == 0:
            energy += field[i]
            z[i] = 1
            sign = 1.0
        else:
            energy -= field[i]
            z[i] = 0
            sign = -1.0
        for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
            field[nbr_idx[p]] += sign * nbr_val[p]
        code ^= 1 << i
        if energy < best - 1e-9:
            best = energy
            best_code = code
    out = np.zeros(n, dtype=np.int8)
    for i in range(n):
        out[i] = (best_code >> i) & 1
    return out, best


def brute_force_min(h: np.ndarray, J: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact minimiser of ``h.z + sum_{i<j} J_ij z_i z_j`` over binary ``z``.

    ``J`` is symmetric with zero diagonal. Gray-code enumeration with
    incremental local fields; ties keep the earliest assignment visited, so
    the all-zero assignment wins any tie at energy 0.
    """
    h = np.asarray(h, dtype=float)
    n = h.size
    if n > 30:
        raise ValueError("too many variables to enumerate")
    ptr = np.zeros(n + 1, dtype=np.int64)
    idx, val = [], []
    for i in range(n):
        nz = np.nonzero(J[i])[0]
        idx.extend(nz.tolist())
        val.extend(J[i, nz].tolist())
        ptr[i + 1] = len(idx)
    return _gray_min(h, ptr, np.array(idx, dtype=np.int64), np.array(val, dtype=float))


def _subproblem(q: QuboModel, x: np.ndarray, field: np.ndarray, sel: np.ndarray):
    """Clamped sub-QUBO over ``sel``: linear terms carry the frozen neighbours."""
    indptr, indices, data = q.csr
    k = sel.size
    pos = {int(v): p for p, v in enumerate(sel)}
    J = np.zeros((k, k))
    h = field[sel].copy()
    for p, i in enumerate(sel):
        for ptr in range(indptr[i], indptr[i + 1]):
            j = int(indices[ptr])
            if j in pos:
                J[p, pos[j]] = data[ptr]
                h[p] -= data[ptr] * x[j]  # remove in-window contribution
    return h, J


def _sub_energy(h: np.ndarray, J: np.ndarray, z: np.ndarray) -> float:
    z = z.astype(float)
    return float(h @ z + 0.5 * z @ J @ z)


def solve_decomposed(q: QuboModel, params: DecompParams | None = None,
                     budget: SolveBudget | None = None, name: str = "decomposed") -> SolveReport:
    params = params or DecompParams()
    budget = budget or SolveBudget()
    prepare(q)
    deadline = budget.deadline()
    n = q.num_variables
    size = min(params.size, n)
    rng = np.random.default_rng(params.seed)
    indptr, indices, data = q.csr

    if params.init == "sa":
        seed = int(rng.integers(2 ** 31))
        if deadline.end is not None:
            warm_budget = SolveBudget(TIME_LIMITED, max(deadline.end - time.monotonic(), 1e-6))
        else:
            warm_budget = budget
        warm = solve_sa(q, SaParams(restarts=1, seed=seed), warm_budget)
        x = np.zeros(n, dtype=np.int8)
        x[:q.num_source] = [warm.sample[var] for var in q.variables[:q.num_source]]
        x = polish_slacks(q, x).astype(np.int8)
    else:
        x = rng.integers(0, 2, n).astype(np.int8)
    field = _qubo_fields(x, q.linear, indptr, indices, data)
    energy = q.energy_array(x)
    trace = [energy]
    start = 0
    stale = 0
    rounds = 0
    converged = False
    for _ in range(params.rounds):
        if deadline.expired():
            break
        order = np.argsort(-np.abs(field), kind="stable")
        sel = order[start:start + size]
        if sel.size < size:
            sel = order[n - size:]
        sel = np.sort(sel)
        h, J = _subproblem(q, x, field, sel)
        current = x[sel].copy()
        if size <= params.exact_limit:
            z, _ = brute_force_min(h, J)
        else:
            sub = QuboModel.from_coefficients(
                range(size), {**{(a, a): h[a] for a in range(size)},
                              **{(a, b): J[a, b] for a in range(size) for b in range(a + 1, size)
                                 if J[a, b]}})
            seed = int(rng.integers(2 ** 31))
            rep = solve_sa(sub, SaParams(params.sub_sweeps, params.sub_restarts, seed=seed,
                                         slack_mode=EXPLICIT))
            z = np.array([rep.sample[a] for a in range(size)], dtype=np.int8)
        gain = _sub_energy(h, J, current) - _sub_energy(h, J, z)
        rounds += 1
        if gain > 1e-9:
            for p, i in enumerate(sel):
                if x[i] != z[p]:
                    step = 1.0 if z[p] else -1.0
                    x[i] = z[p]
                    field[indices[indptr[i]:indptr[i + 1]]] += data[indptr[i]:indptr[i + 1]] * step
            if q.source is not None and q.slack_registry:
                # second composer move: exact re-completion of every slack register
                x = polish_slacks(q, x).astype(np.int8)
                field = _qubo_fields(x, q.linear, indptr, indices, data)
            energy = q.energy_array(x)
            start = 0
            stale = 0
        else:
            stale += size
            start += size
            if start >= n:
                start = 0
        trace.append(energy)
        if budget.first_feasible and (q.source is None or
                                      is_feasible_array(q.source, x[:q.num_source].astype(float))):
            break
        if stale >= n:
            converged = True
            break

    sample, obj, feasible = decode(q, x)
    return SolveReport(name, sample, obj, feasible, deadline.elapsed(), rounds, params.seed, False,
                       {"qubo_energy": energy, "round_energies": trace, "converged": converged,
                        "subproblem_size": size})
