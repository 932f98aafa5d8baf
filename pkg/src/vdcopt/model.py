"""Constrained binary model for joint VM placement and flow routing.

Variable naming (``str(var)``):

============  ==========================  =====================================
kind          name                        meaning
============  ==========================  =====================================
server_on     ``s[i]``                    server ``i`` powered on
vm_assign     ``v[j,i]``                  VM ``j`` hosted on server ``i``
switch_on     ``sw[k]``                   switch with node id ``k`` powered on
flow_edge     ``rho[f,a,b]``              flow ``f`` traverses link ``a -> b``
link_on       ``on[a,b]``                 link between ``a < b`` active
slack         ``slack[<cid>,b]``          bit ``b`` of a constraint's slack
============  ==========================  =====================================

Constraint families, one constraint per quantifier instance:

``cap[i]``            sum_j u_j v[j,i] - C_i s[i] <= 0
``assign[j]``         sum_i v[j,i] == 1
``src_cap[f,i]``      sum_k rho[f,i,k] - v[src(f),i] <= 0
``dst_cap[f,i]``      sum_k rho[f,k,i] - v[dst(f),i] <= 0
``balance[f,i]``      v[src,i] - v[dst,i] - out_f(i) + in_f(i) == 0
``conserve[f,k]``     in_f(k) - out_f(k) == 0
``link_cap[a,b]``     sum_f d_f (rho[f,a,b] + rho[f,b,a]) - C_ab on[a,b] <= 0
``link_on_lo[a,b]``   on[a,b] - on(a) <= 0
``link_on_hi[a,b]``   on[a,b] - on(b) <= 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .topology import Proxytree

LE = "<="
EQ = "=="

FAMILY_LABELS = {
    "cap": "server capacity",
    "assign": "VM assignment",
    "src_cap": "outgoing flows per server",
    "dst_cap": "incoming flows per server",
    "balance": "flow balance at servers",
    "conserve": "flow conservation at switches",
    "link_cap": "link bandwidth",
    "link_on_lo": "link needs its upper node on",
    "link_on_hi": "link needs its lower node on",
}

# families of the form ``a - b <= 0`` over two binaries
IMPLICATION_FAMILIES = frozenset({"link_on_lo", "link_on_hi"})


class Var(NamedTuple):
    kind: str
    idx: tuple

    def __str__(self) -> str:
        prefix = _PREFIX[self.kind]
        return f"{prefix}[{','.join(str(i) for i in self.idx)}]"

    def __repr__(self) -> str:
        return str(self)


_PREFIX = {
    "server_on": "s",
    "vm_assign": "v",
    "switch_on": "sw",
    "flow_edge": "rho",
    "link_on": "on",
    "slack": "slack",
}


def s(i: int) -> Var:
    return Var("server_on", (i,))


def v(j: int, i: int) -> Var:
    return Var("vm_assign", (j, i))


def sw(k: int) -> Var:
    return Var("switch_on", (k,))


def rho(f: int, a: int, b: int) -> Var:
    return Var("flow_edge", (f, a, b))


def on_link(a: int, b: int) -> Var:
    return Var("link_on", (a, b) if a < b else (b, a))


def on_node(tree: Proxytree, n: int) -> Var:
    return s(n) if tree.is_server(n) else sw(n)


Sample = dict  # Var -> 0/1


class MissingVariableError(KeyError):
    def __init__(self, var):
        super().__init__(f"sample has no value for variable {var}")
        self.var = var


class InfeasiblePlacementError(ValueError):
    pass


@dataclass(frozen=True)
class LinearConstraint:
    id: str
    family: str
    terms: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if not self.terms:
            raise ValueError(f"constraint {self.id} has no terms")
        if self.sense not in (LE, EQ):
            raise ValueError(f"constraint {self.id}: unknown sense {self.sense!r}")
        if not all(math.isfinite(c) for c in self.terms.values()) or not math.isfinite(self.rhs):
            raise ValueError(f"constraint {self.id} has non-finite data")

    def lhs(self, sample: Mapping) -> float:
        total = 0.0
        for var, coef in self.terms.items():
            try:
                total += coef * sample[var]
            except KeyError:
                raise MissingVariableError(var) from None
        return total

    def min_lhs(self) -> float:
        return sum(min(c, 0.0) for c in self.terms.values())

    def max_lhs(self) -> float:
        return sum(max(c, 0.0) for c in self.terms.values())


class Violation(NamedTuple):
    constraint_id: str
    lhs: float
    sense: str
    rhs: float


@dataclass(frozen=True)
class CqmModel:
    variables: tuple
    objective: dict
    constraints: tuple
    offset: float = 0.0
    name: str = "full"
    tree: Proxytree | None = field(default=None, repr=False, compare=False)
    placement: dict | None = field(default=None, repr=False, compare=False)

    @cached_property
    def index(self) -> dict:
        return {var: pos for pos, var in enumerate(self.variables)}

    @cached_property
    def constraint_index(self) -> dict:
        return {c.id: c for c in self.constraints}

    @cached_property
    def arrays(self):
        """Objective vector, constraint matrix (CSR), rhs and equality mask."""
        idx = self.index
        c = np.zeros(len(self.variables))
        for var, coef in self.objective.items():
            c[idx[var]] = coef
        rows, cols, vals = [], [], []
        for r, con in enumerate(self.constraints):
            for var, coef in con.terms.items():
                rows.append(r)
                cols.append(idx[var])
                vals.append(coef)
        a = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), len(self.variables)))
        rhs = np.array([con.rhs for con in self.constraints], dtype=float)
        is_eq = np.array([con.sense == EQ for con in self.constraints], dtype=bool)
        return c, a, rhs, is_eq

    def to_array(self, sample: Mapping) -> np.ndarray:
        out = np.empty(len(self.variables))
        for pos, var in enumerate(self.variables):
            try:
                out[pos] = sample[var]
            except KeyError:
                raise MissingVariableError(var) from None
        return out

    def to_sample(self, x: Sequence) -> Sample:
        return {var: int(round(val)) for var, val in zip(self.variables, x)}

    def family_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for con in self.constraints:
            counts[con.family] = counts.get(con.family, 0) + 1
        return counts

    def __str__(self) -> str:
        return export_model(self)


class _Builder:
    def __init__(self):
        self.variables: dict = {}
        self.objective: dict = {}
        self.constraints: list[LinearConstraint] = []

    def var(self, var: Var) -> Var:
        self.variables.setdefault(var, None)
        return var

    def cost(self, var: Var, coef: float) -> None:
        if coef:
            self.objective[var] = self.objective.get(var, 0.0) + coef

    def add(self, cid: str, family: str, terms: Iterable[tuple], sense: str, rhs: float) -> None:
        merged: dict = {}
        for var, coef in terms:
            merged[var] = merged.get(var, 0.0) + coef
        merged = {k: c for k, c in merged.items() if c != 0}
        self.constraints.append(LinearConstraint(cid, family, merged, sense, float(rhs)))

    def build(self, name: str, tree: Proxytree, offset: float = 0.0,
              placement: dict | None = None) -> CqmModel:
        missing = [var for var in self.objective if var not in self.variables]
        for con in self.constraints:
            missing.extend(var for var in con.terms if var not in self.variables)
        if missing:
            raise AssertionError(f"undeclared variables: {missing[:5]}")
        return CqmModel(tuple(self.variables), dict(self.objective), tuple(self.constraints),
                        float(offset), name, tree, placement)


def _directed_edges(tree: Proxytree):
    for link in tree.links:
        a, b = link.key
        yield a, b
        yield b, a


def _switch_flow_cost(tree: Proxytree, a: int, b: int) -> float:
    """Dynamic cost a directed flow edge contributes through its switch endpoints."""
    return sum(tree.dyn_power(n) for n in (a, b) if not tree.is_server(n))


def _add_server_part(b: _Builder, tree: Proxytree) -> None:
    for i in tree.servers:
        b.var(s(i))
        for j in tree.vms:
            b.var(v(j, i))
    for i in tree.servers:
        b.cost(s(i), tree.idle_power(i))
        for j in tree.vms:
            b.cost(v(j, i), tree.dyn_power(i) * tree.vm_util[j])
    for i in tree.servers:
        b.add(f"cap[{i}]", "cap",
              [(v(j, i), tree.vm_util[j]) for j in tree.vms] + [(s(i), -tree.server_capacity[i])],
              LE, 0)
    for j in tree.vms:
        b.add(f"assign[{j}]", "assign", [(v(j, i), 1) for i in tree.servers], EQ, 1)


def _add_network_part(b: _Builder, tree: Proxytree, v_const: Mapping | None = None,
                      s_const: Mapping | None = None) -> None:
    """Switch/flow/link part of the model.

    With ``v_const``/``s_const`` given, placement variables are substituted by
    constants and link activations toward powered-on servers are dropped.
    """
    for k in tree.switches:
        b.var(sw(k))
    for fl in tree.flows:
        for a, c in _directed_edges(tree):
            b.var(rho(fl.id, a, c))
    for link in tree.links:
        b.var(on_link(*link.key))

    for k in tree.switches:
        b.cost(sw(k), tree.idle_power(k))
    for fl in tree.flows:
        for a, c in _directed_edges(tree):
            b.cost(rho(fl.id, a, c), _switch_flow_cost(tree, a, c))

    def vterm(j: int, i: int, coef: float):
        """Either a variable term or a constant folded into the rhs."""
        if v_const is None:
            return [(v(j, i), coef)], 0.0
        return [], coef * v_const[(j, i)]

    for fl in tree.flows:
        for i in tree.servers:
            nbrs = tree._adjacency[i]
            terms, const = vterm(fl.src_vm, i, -1)
            b.add(f"src_cap[{fl.id},{i}]", "src_cap",
                  [(rho(fl.id, i, k), 1) for k in nbrs] + terms, LE, -const)
        for i in tree.servers:
            nbrs = tree._adjacency[i]
            terms, const = vterm(fl.dst_vm, i, -1)
            b.add(f"dst_cap[{fl.id},{i}]", "dst_cap",
                  [(rho(fl.id, k, i), 1) for k in nbrs] + terms, LE, -const)
    for fl in tree.flows:
        for i in tree.servers:
            nbrs = tree._adjacency[i]
            t1, c1 = vterm(fl.src_vm, i, 1)
            t2, c2 = vterm(fl.dst_vm, i, -1)
            b.add(f"balance[{fl.id},{i}]", "balance",
                  t1 + t2 + [(rho(fl.id, i, k), -1) for k in nbrs]
                  + [(rho(fl.id, k, i), 1) for k in nbrs], EQ, -(c1 + c2))
    for fl in tree.flows:
        for k in tree.switches:
            nbrs = tree._adjacency[k]
            b.add(f"conserve[{fl.id},{k}]", "conserve",
                  [(rho(fl.id, n, k), 1) for n in nbrs] + [(rho(fl.id, k, n), -1) for n in nbrs],
                  EQ, 0)
    for link in tree.links:
        a, c = link.key
        terms = []
        for fl in tree.flows:
            terms += [(rho(fl.id, a, c), fl.data_rate), (rho(fl.id, c, a), fl.data_rate)]
        b.add(f"link_cap[{a},{c}]", "link_cap", terms + [(on_link(a, c), -link.capacity)], LE, 0)
    for link in tree.links:
        a, c = link.key
        for fam, n in (("link_on_lo", a), ("link_on_hi", c)):
            if s_const is not None and tree.is_server(n):
                state = s_const[n]
                if state:
                    continue  # on[a,c] <= 1 always holds
                b.add(f"{fam}[{a},{c}]", fam, [(on_link(a, c), 1)], LE, 0)
            else:
                b.add(f"{fam}[{a},{c}]", fam, [(on_link(a, c), 1), (on_node(tree, n), -1)], LE, 0)


def build_full_cqm(tree: Proxytree) -> CqmModel:
    b = _Builder()
    _add_server_part(b, tree)
    _add_network_part(b, tree)
    return b.build("full", tree)


def build_assignment_cqm(tree: Proxytree) -> CqmModel:
    b = _Builder()
    _add_server_part(b, tree)
    return b.build("assignment", tree)


def normalize_placement(tree: Proxytree, placement) -> dict[int, int]:
    """Accept a mapping or a sequence ``vm -> server``; check totality and capacity."""
    if isinstance(placement, Mapping):
        mapping = dict(placement)
    else:
        mapping = dict(enumerate(placement))
    missing = [j for j in tree.vms if j not in mapping]
    if missing:
        raise InfeasiblePlacementError(f"placement is missing VMs {missing}")
    extra = [j for j in mapping if j not in range(tree.num_vms)]
    if extra:
        raise InfeasiblePlacementError(f"placement names unknown VMs {extra}")
    load = [0.0] * tree.num_servers
    for j, i in mapping.items():
        if i not in tree.servers:
            raise InfeasiblePlacementError(f"VM {j} placed on non-server node {i}")
        load[i] += tree.vm_util[j]
    for i, used in enumerate(load):
        if used > tree.server_capacity[i]:
            raise InfeasiblePlacementError(
                f"server {i} overloaded: load {used} exceeds capacity {tree.server_capacity[i]}")
    return mapping


def placement_cost(tree: Proxytree, placement: Mapping[int, int]) -> float:
    used = set(placement.values())
    cost = sum(tree.idle_power(i) for i in used)
    cost += sum(tree.dyn_power(i) * tree.vm_util[j] for j, i in placement.items())
    return cost


def build_routing_cqm(tree: Proxytree, placement) -> CqmModel:
    """Path-planning model for a fixed VM placement.

    Placement variables become constants; their energy is carried in
    ``offset`` so objectives stay comparable with the full model.
    """
    mapping = normalize_placement(tree, placement)
    v_const = {(j, i): int(mapping[j] == i) for j in tree.vms for i in tree.servers}
    used = set(mapping.values())
    s_const = {i: int(i in used) for i in tree.servers}
    b = _Builder()
    _add_network_part(b, tree, v_const=v_const, s_const=s_const)
    return b.build("routing", tree, offset=placement_cost(tree, mapping), placement=mapping)


def embed(tree: Proxytree, placement, routing_sample: Mapping) -> Sample:
    """Full-model sample from a placement plus a routing-model sample."""
    mapping = normalize_placement(tree, placement)
    used = set(mapping.values())
    out: Sample = {}
    for i in tree.servers:
        out[s(i)] = int(i in used)
        for j in tree.vms:
            out[v(j, i)] = int(mapping[j] == i)
    for var, val in routing_sample.items():
        if var.kind in ("server_on", "vm_assign"):
            continue
        out[var] = int(val)
    return out


def evaluate_objective(model: CqmModel, sample: Mapping) -> float:
    total = model.offset
    for var in model.variables:
        if var not in sample:
            raise MissingVariableError(var)
    for var, coef in model.objective.items():
        total += coef * sample[var]
    return total


def check_feasibility(model: CqmModel, sample: Mapping, tol: float = 1e-9) -> list[Violation]:
    for var in model.variables:
        if var not in sample:
            raise MissingVariableError(var)
    out = []
    for con in model.constraints:
        lhs = con.lhs(sample)
        bad = lhs > con.rhs + tol if con.sense == LE else abs(lhs - con.rhs) > tol
        if bad:
            out.append(Violation(con.id, lhs, con.sense, con.rhs))
    return out


def is_feasible_array(model: CqmModel, x: np.ndarray, tol: float = 1e-9) -> bool:
    """Vectorised feasibility test for a 0/1 vector in ``model.variables`` order."""
    _, a, rhs, is_eq = model.arrays
    lhs = a @ x
    le_ok = lhs[~is_eq] <= rhs[~is_eq] + tol
    eq_ok = np.abs(lhs[is_eq] - rhs[is_eq]) <= tol
    return bool(le_ok.all() and eq_ok.all())


def objective_array(model: CqmModel, x: np.ndarray) -> float:
    c = model.arrays[0]
    return float(model.offset + c @ x)


def _fmt(coef: float) -> str:
    return str(int(coef)) if float(coef).is_integer() else repr(float(coef))


def _linexpr(terms: Mapping) -> str:
    parts = []
    for var, coef in terms.items():
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(coef))} {var}")
    return " ".join(parts) if parts else "0"


def export_model(model: CqmModel) -> str:
    """Render the model as a plain-text constraint list (LP-like)."""
    lines = [
        f"\\ vdcopt model: {model.name}",
        f"\\ variables: {len(model.variables)}  constraints: {len(model.constraints)}",
        "minimize",
        f"  obj: {_linexpr(model.objective)}" + (f" + {_fmt(model.offset)}" if model.offset else ""),
        "subject to",
    ]
    for con in model.constraints:
        lines.append(f"  {con.id}: {_linexpr(con.terms)} {con.sense} {_fmt(con.rhs)}")
    lines.append("binary")
    lines.extend(f"  {var}" for var in model.variables)
    lines.append("end")
    return "\n".join(lines) + "\n"
