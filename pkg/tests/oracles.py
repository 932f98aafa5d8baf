"""Independent reference computations used to freeze expected values.

Nothing here touches the model builder or the solvers: energies are computed
straight from the tree's power tables and paths come from networkx.
"""

import itertools
import math

import networkx as nx
import numpy as np


def tree_graph(tree):
    g = nx.Graph()
    g.add_nodes_from(n.id for n in tree.nodes)
    for link in tree.links:
        g.add_edge(link.endpoint_lo, link.endpoint_hi, capacity=link.capacity)
    return g


def simple_paths(g, tree, a, b):
    """All simple server-to-server paths that do not pass through a third server."""
    if a == b:
        return [[]]
    out = []
    for p in nx.all_simple_paths(g, a, b):
        if not any(tree.is_server(n) for n in p[1:-1]):
            out.append(p)
    return out


def _feasible_placements(tree):
    cap = tree.server_capacity
    for assign in itertools.product(tree.servers, repeat=tree.num_vms):
        load = [0.0] * tree.num_servers
        for j, i in enumerate(assign):
            load[i] += tree.vm_util[j]
        if all(load[i] <= cap[i] for i in tree.servers):
            yield assign


def brute_force_optimum(tree):
    """Minimum energy over every capacity-feasible placement and every joint choice of simple paths."""
    g = tree_graph(tree)
    path_cache = {}
    best = math.inf
    best_arg = None
    for assign in _feasible_placements(tree):
        used = set(assign)
        server_cost = sum(tree.idle_power(i) for i in used)
        server_cost += sum(tree.dyn_power(assign[j]) * tree.vm_util[j] for j in tree.vms)
        if server_cost >= best:
            continue
        options = []
        for f in tree.flows:
            key = (assign[f.src_vm], assign[f.dst_vm])
            if key not in path_cache:
                path_cache[key] = simple_paths(g, tree, *key)
            options.append(path_cache[key])
        for combo in itertools.product(*options):
            load = {}
            switches = set()
            dyn = 0.0
            for f, p in zip(tree.flows, combo):
                for a, b in zip(p, p[1:]):
                    k = (min(a, b), max(a, b))
                    load[k] = load.get(k, 0.0) + f.data_rate
                    for n in (a, b):
                        if not tree.is_server(n):
                            switches.add(n)
                            dyn += tree.dyn_power(n)
            if any(load[k] > g.edges[k]["capacity"] for k in load):
                continue
            total = server_cost + dyn + sum(tree.idle_power(k) for k in switches)
            if total < best:
                best, best_arg = total, (assign, combo)
    return best, best_arg


def slack_range(con):
    """rhs minus the smallest achievable left-hand side over binaries."""
    lo = sum(min(0.0, c) for c in con.terms.values())
    return con.rhs - lo


def _all_assignments(n):
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


def enumerate_qubo_min(h, J, low_bits=16):
    """Exhaustive minimum of h.z + sum_{i<j} J_ij z_i z_j.

    The variables are split into a low block, whose 2**low energies are
    tabulated once, and a high block that is looped over; the cross
    couplings are added as a matrix-vector product per high assignment.
    """
    h = np.asarray(h, dtype=float)
    J = np.asarray(J, dtype=float)
    n = len(h)
    lo = min(n, low_bits)
    upper = np.triu(J, 1)
    z_lo = _all_assignments(lo)
    e_lo = z_lo @ h[:lo] + np.einsum("ij,ij->i", z_lo @ upper[:lo, :lo], z_lo)
    cross = z_lo @ upper[:lo, lo:]
    best = math.inf
    best_z = None
    for z_hi in _all_assignments(n - lo):
        e = e_lo + cross @ z_hi + h[lo:] @ z_hi + z_hi @ upper[lo:, lo:] @ z_hi
        i = int(np.argmin(e))
        if e[i] < best:
            best = float(e[i])
            best_z = np.concatenate([z_lo[i], z_hi]).astype(int)
    return best, best_z
