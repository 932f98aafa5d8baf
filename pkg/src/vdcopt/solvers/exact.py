"""Exact branch-and-bound over the structured problem.

The search is two-level: VM placements are enumerated first (capacity
checked, symmetry reduced, bounded), and each complete placement is routed by
a second branch-and-bound over joint path selections with link-capacity
checks. Both levels prune on ``committed cost + lower bound >= incumbent``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model import build_full_cqm, check_feasibility, evaluate_objective, normalize_placement
from ..model import on_link, placement_cost, rho, s, sw, v
from ..topology import Proxytree
from .base import Deadline, SolveBudget, SolveReport
from .paths import enumerate_flow_paths

DEFAULT_DEPTH_CAP = 4


class InsufficientCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class _Path:
    nodes: tuple[int, ...]
    switches: tuple[int, ...]
    links: tuple[tuple[int, int], ...]
    dyn_cost: float


class _Network:
    """Cached per-tree data for the routing search."""

    def __init__(self, tree: Proxytree, monotone: bool = True):
        self.tree = tree
        self.monotone = monotone
        self._paths: dict[tuple[int, int], list[_Path]] = {}
        self.cap = {link.key: link.capacity for link in tree.links}
        self.idle = {k: tree.idle_power(k) for k in tree.switches}
        self.dyn = {k: tree.dyn_power(k) for k in tree.switches}
        upper = tree.switches_at(tree.depth - 2)
        self.min_upper_idle = min(self.idle[k] for k in upper)

    def paths(self, a: int, b: int) -> list[_Path]:
        key = (a, b)
        if key not in self._paths:
            out = []
            for nodes in enumerate_flow_paths(self.tree, a, b, monotone=self.monotone):
                if not nodes:
                    out.append(_Path((), (), (), 0.0))
                    continue
                switches = tuple(nodes[1:-1])
                links = tuple((x, y) if x < y else (y, x) for x, y in zip(nodes, nodes[1:]))
                # each transit switch carries one incoming and one outgoing edge
                dyn = sum(2 * self.dyn[k] for k in switches)
                out.append(_Path(tuple(nodes), switches, links, dyn))
            self._paths[key] = out
        return self._paths[key]

    def min_dyn(self, a: int, b: int) -> float:
        return min(p.dyn_cost for p in self.paths(a, b))

    def routing_bound(self, endpoints: list[tuple[int, int]]) -> float:
        """Lower bound on routing energy for flows between the given servers."""
        tree = self.tree
        leaves = set()
        crosses = False
        total = 0.0
        for a, b in endpoints:
            if a == b:
                continue
            la, lb = tree.leaf_of(a), tree.leaf_of(b)
            leaves.update((la, lb))
            crosses |= la != lb
            total += self.min_dyn(a, b)
        total += sum(self.idle[k] for k in leaves)
        if crosses:
            total += self.min_upper_idle
        return total


class _Stats:
    def __init__(self, deadline: Deadline):
        self.deadline = deadline
        self.nodes = 0
        self.timed_out = False

    def tick(self) -> bool:
        self.nodes += 1
        if self.nodes % 64 == 0 and self.deadline.expired():
            self.timed_out = True
        return self.timed_out


def _route(net: _Network, placement: dict[int, int], bound: float, stats: _Stats,
           first_feasible: bool, bound_pruning: bool):
    """Cheapest joint path selection for ``placement`` with cost < ``bound``.

    Returns ``(routing_cost, {flow_id: _Path})`` or ``None``.
    """
    tree = net.tree
    flows = [(fl, placement[fl.src_vm], placement[fl.dst_vm]) for fl in tree.flows]
    fixed = {fl.id: net.paths(a, b)[0] for fl, a, b in flows if a == b}
    todo = [(fl, a, b) for fl, a, b in flows if a != b]
    # most constrained first: fewest candidate paths
    todo.sort(key=lambda t: (len(net.paths(t[1], t[2])), t[0].id))

    suffix_dyn = [0.0] * (len(todo) + 1)
    for pos in range(len(todo) - 1, -1, -1):
        _, a, b = todo[pos]
        suffix_dyn[pos] = suffix_dyn[pos + 1] + net.min_dyn(a, b)
    suffix_leaves: list[set[int]] = [set() for _ in range(len(todo) + 1)]
    for pos in range(len(todo) - 1, -1, -1):
        _, a, b = todo[pos]
        suffix_leaves[pos] = suffix_leaves[pos + 1] | {tree.leaf_of(a), tree.leaf_of(b)}

    on_count: dict[int, int] = {}
    load: dict[tuple[int, int], float] = {}
    chosen: dict[int, _Path] = {}
    best = [bound, None]

    def marginal(path: _Path) -> float:
        return path.dyn_cost + sum(net.idle[k] for k in set(path.switches) if not on_count.get(k))

    def dfs(pos: int, cost: float) -> bool:
        if stats.tick():
            return True
        if pos == len(todo):
            if cost < best[0]:
                best[0], best[1] = cost, dict(chosen)
            return first_feasible
        if bound_pruning:
            lb = cost + suffix_dyn[pos] + sum(
                net.idle[k] for k in suffix_leaves[pos] if not on_count.get(k))
            if lb >= best[0]:
                return False
        fl, a, b = todo[pos]
        options = sorted(net.paths(a, b), key=lambda p: (marginal(p), p.nodes))
        for path in options:
            if any(load.get(l, 0.0) + fl.data_rate > net.cap[l] for l in path.links):
                continue
            extra = marginal(path)
            for l in path.links:
                load[l] = load.get(l, 0.0) + fl.data_rate
            for k in path.switches:
                on_count[k] = on_count.get(k, 0) + 1
            chosen[fl.id] = path
            stop = dfs(pos + 1, cost + extra)
            del chosen[fl.id]
            for k in path.switches:
                on_count[k] -= 1
            for l in path.links:
                load[l] -= fl.data_rate
            if stop:
                return True
        return False

    dfs(0, 0.0)
    if best[1] is None:
        return None
    routes = {**fixed, **best[1]}
    return best[0], routes


def routing_sample(tree: Proxytree, placement: dict[int, int], routes: dict) -> dict:
    """Full-model sample for a placement and one path per flow."""
    used = set(placement.values())
    sample = {}
    for i in tree.servers:
        sample[s(i)] = int(i in used)
        for j in tree.vms:
            sample[v(j, i)] = int(placement[j] == i)
    for k in tree.switches:
        sample[sw(k)] = 0
    for fl in tree.flows:
        for link in tree.links:
            a, b = link.key
            sample[rho(fl.id, a, b)] = 0
            sample[rho(fl.id, b, a)] = 0
    for link in tree.links:
        sample[on_link(*link.key)] = 0
    for fid, path in routes.items():
        nodes = path.nodes if isinstance(path, _Path) else tuple(path)
        for x, y in zip(nodes, nodes[1:]):
            sample[rho(fid, x, y)] = 1
            sample[on_link(x, y)] = 1
        for k in nodes[1:-1]:
            sample[sw(k)] = 1
    return sample


def greedy_first_fit(tree: Proxytree) -> dict[int, int]:
    """Place VMs in index order on the lowest-index server that still fits them."""
    free = list(tree.server_capacity)
    placement = {}
    for j in tree.vms:
        need = tree.vm_util[j]
        for i in tree.servers:
            if free[i] >= need:
                free[i] -= need
                placement[j] = i
                break
        else:
            raise InsufficientCapacityError(f"no server has room for VM {j} (needs {need})")
    return placement


def _placement_candidates(tree: Proxytree, load: list[float], symmetry: bool) -> list[int]:
    if not symmetry:
        return list(tree.servers)
    out = []
    empty_group_taken = False
    for g in range(tree.num_servers // 2):
        pair = (2 * g, 2 * g + 1)
        group_used = any(load[i] > 0 for i in pair)
        if not group_used:
            if empty_group_taken:
                continue
            empty_group_taken = True
            out.append(pair[0])
            continue
        first_empty = True
        for i in pair:
            if load[i] > 0:
                out.append(i)
            elif first_empty:
                out.append(i)
                first_empty = False
    return out


def _symmetric(tree: Proxytree) -> bool:
    return len(set(tree.server_capacity)) == 1 and len(
        {tree.idle_power(i) for i in tree.servers}) == 1


def _finish(tree: Proxytree, name: str, placement, routes, stats: _Stats, wall: float,
            proof: bool, extra: dict | None = None) -> SolveReport:
    extra = dict(extra or {})
    extra["nodes"] = stats.nodes
    extra["timed_out"] = stats.timed_out
    if placement is None:
        return SolveReport(name, None, math.nan, False, wall, stats.nodes, None, False, extra)
    model = build_full_cqm(tree)
    sample = routing_sample(tree, placement, routes)
    energy = evaluate_objective(model, sample)
    feasible = not check_feasibility(model, sample)
    extra["placement"] = {int(j): int(i) for j, i in placement.items()}
    extra["paths"] = {int(f): list(p.nodes) for f, p in sorted(routes.items())}
    return SolveReport(name, sample, energy, feasible, wall, stats.nodes, None,
                       proof and feasible, extra)


def solve_routing_exact(tree: Proxytree, placement, budget: SolveBudget | None = None,
                        monotone: bool = True, name: str = "split-exact") -> SolveReport:
    """Optimal routing for a fixed placement (second phase of the split method)."""
    budget = budget or SolveBudget()
    deadline = budget.deadline()
    mapping = normalize_placement(tree, placement)
    stats = _Stats(deadline)
    net = _Network(tree, monotone)
    result = _route(net, mapping, math.inf, stats, budget.first_feasible, True)
    wall = deadline.elapsed()
    if result is None:
        return _finish(tree, name, None, None, stats, wall, False)
    proof = budget.mode == "exhaustive" and not stats.timed_out
    report = _finish(tree, name, mapping, result[1], stats, wall, proof,
                     {"routing_cost": result[0], "placement_cost": placement_cost(tree, mapping)})
    return report


def solve_exact(tree: Proxytree, budget: SolveBudget | None = None, *, symmetry: bool = True,
                bound_pruning: bool = True, monotone: bool = True,
                depth_cap: int = DEFAULT_DEPTH_CAP) -> SolveReport:
    """Global optimum of the full model by structured branch-and-bound.

    ``symmetry`` and ``bound_pruning`` can be switched off to cross-check that
    pruning never removes the optimum. ``monotone`` restricts routes to
    up-then-down paths; set it to ``False`` to search every simple path.
    """
    if tree.depth > depth_cap:
        raise ValueError(f"exact solver is capped at depth {depth_cap}, tree has depth {tree.depth}")
    budget = budget or SolveBudget()
    deadline = budget.deadline()
    first = budget.first_feasible
    stats = _Stats(deadline)
    net = _Network(tree, monotone)
    symmetry = symmetry and _symmetric(tree)

    vms = list(tree.vms)
    util = tree.vm_util
    server_dyn = min(tree.dyn_power(i) for i in tree.servers)
    server_idle = min(tree.idle_power(i) for i in tree.servers)
    cap_max = max(tree.server_capacity)
    # VMs larger than half a server can never share one
    min_servers = max(math.ceil(sum(util) / cap_max - 1e-9),
                      sum(1 for u in util if 2 * u > cap_max))
    leaf_dyn = min(net.dyn[k] for k in tree.leaf_switches)
    split_forced = {fl.id for fl in tree.flows if util[fl.src_vm] + util[fl.dst_vm] > cap_max}
    suffix_util_cost = [0.0] * (len(vms) + 1)
    for pos in range(len(vms) - 1, -1, -1):
        suffix_util_cost[pos] = suffix_util_cost[pos + 1] + server_dyn * util[vms[pos]]

    load = [0.0] * tree.num_servers
    placement: dict[int, int] = {}
    incumbent = [math.inf, None, None]

    def lower_bound(pos: int, cost: float) -> float:
        used = sum(1 for x in load if x > 0)
        lb = cost + suffix_util_cost[pos] + server_idle * max(0, min_servers - used)
        pairs = []
        for fl in tree.flows:
            if fl.src_vm in placement and fl.dst_vm in placement:
                pairs.append((placement[fl.src_vm], placement[fl.dst_vm]))
            elif fl.id in split_forced:
                lb += 2 * leaf_dyn  # at least one transit switch
        return lb + net.routing_bound(pairs)

    def place(pos: int, cost: float) -> bool:
        if stats.tick():
            return True
        if pos == len(vms):
            bound = incumbent[0] - cost if bound_pruning else math.inf
            result = _route(net, placement, bound, stats, first, bound_pruning)
            if result is not None and cost + result[0] < incumbent[0]:
                incumbent[0] = cost + result[0]
                incumbent[1] = dict(placement)
                incumbent[2] = result[1]
                return first
            return stats.timed_out
        if bound_pruning and lower_bound(pos, cost) >= incumbent[0]:
            return False
        j = vms[pos]
        for i in _placement_candidates(tree, load, symmetry):
            if load[i] + util[j] > tree.server_capacity[i]:
                continue
            extra = tree.dyn_power(i) * util[j] + (tree.idle_power(i) if load[i] == 0 else 0.0)
            load[i] += util[j]
            placement[j] = i
            stop = place(pos + 1, cost + extra)
            del placement[j]
            load[i] -= util[j]
            if stop:
                return True
        return False

    place(0, 0.0)
    wall = deadline.elapsed()
    proof = budget.mode == "exhaustive" and not stats.timed_out
    return _finish(tree, "exact", incumbent[1], incumbent[2], stats, wall, proof,
                   {"symmetry": symmetry, "bound_pruning": bound_pruning, "monotone": monotone})
