"""Layered switch/server tree used as the data-center topology.

Switch level ``i`` (``0 <= i < depth``) holds ``2**i`` switches and consecutive
switch levels are completely bipartite. Every switch on the deepest switch
level (the *leaf* switches) is wired to exactly two servers, so a tree of
depth ``D`` has ``2**D`` servers and ``2**D - 1`` switches.

Node ids are stable: servers are ``0..M-1`` and switches ``M..M+K-1`` in
breadth-first order starting at the root.

Power and capacity parameters are scaled per level from a base value::

    idle(level)     = idle_base * depth - idle_step * level
    dyn(level)      = dyn_base  * depth - dyn_step  * level
    link_cap(layer) = link_cap_base * depth - link_step * layer

where servers sit on level ``depth`` and a link's layer is the level of its
shallower endpoint.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any

SERVER = "server"
SWITCH = "switch"

FORMAT_TAG = "vdcopt-tree/1"


class InvalidParameterError(ValueError):
    """Raised when tree parameters violate their invariants."""


class TreeFormatError(ValueError):
    """Raised when a tree document cannot be parsed or fails validation.

    ``location`` is either ``"line L, column C"`` for syntax errors or a
    field path such as ``"links[3].capacity"`` for schema errors.
    """

    def __init__(self, message: str, location: str = "<document>"):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class TreeParams:
    depth: int = 2
    server_capacity: float = 10
    vm_util: float = 6
    link_cap_base: float = 5
    idle_base: float = 10
    dyn_base: float = 2
    avg_data_rate: float = 4
    idle_step: float = 5
    dyn_step: float = 1
    link_step: float = 2

    def validate(self) -> None:
        if not isinstance(self.depth, int) or isinstance(self.depth, bool):
            raise InvalidParameterError(f"depth must be an integer, got {self.depth!r}")
        if self.depth < 2:
            raise InvalidParameterError(f"depth must be >= 2, got {self.depth}")
        for name in ("server_capacity", "vm_util", "link_cap_base", "idle_base",
                     "dyn_base", "avg_data_rate"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("idle_step", "dyn_step", "link_step"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if self.vm_util > self.server_capacity:
            raise InvalidParameterError(
                f"vm_util ({self.vm_util}) exceeds server_capacity ({self.server_capacity})")
        # scaled values must stay positive down to the deepest level
        if self.idle_base * self.depth - self.idle_step * self.depth <= 0:
            raise InvalidParameterError("idle power becomes non-positive at server level")
        if self.dyn_base * self.depth - self.dyn_step * self.depth <= 0:
            raise InvalidParameterError("dynamic power becomes non-positive at server level")
        if self.link_cap_base * self.depth - self.link_step * (self.depth - 1) <= 0:
            raise InvalidParameterError("link capacity becomes non-positive at server links")


@dataclass(frozen=True)
class Node:
    id: int
    level: int
    kind: str


@dataclass(frozen=True)
class Link:
    endpoint_lo: int
    endpoint_hi: int
    layer: int
    capacity: float

    @property
    def key(self) -> tuple[int, int]:
        """Endpoints ordered by id (the undirected link key)."""
        a, b = self.endpoint_lo, self.endpoint_hi
        return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Flow:
    id: int
    src_vm: int
    dst_vm: int
    data_rate: float


@dataclass(frozen=True)
class Proxytree:
    depth: int
    num_servers: int
    num_vms: int
    num_switches: int
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    flows: tuple[Flow, ...]
    level_idle_power: tuple[float, ...]
    level_dyn_power: tuple[float, ...]
    level_link_capacity: tuple[float, ...]
    server_capacity: tuple[float, ...]
    vm_util: tuple[float, ...]
    params: TreeParams = field(default_factory=TreeParams, compare=False)

    @property
    def servers(self) -> range:
        return range(self.num_servers)

    @property
    def switches(self) -> range:
        return range(self.num_servers, self.num_servers + self.num_switches)

    @property
    def vms(self) -> range:
        return range(self.num_vms)

    def node(self, node_id: int) -> Node:
        if not 0 <= node_id < len(self.nodes):
            raise KeyError(f"unknown node id {node_id}")
        return self.nodes[node_id]

    def is_server(self, node_id: int) -> bool:
        return self.node(node_id).kind == SERVER

    def idle_power(self, node_id: int) -> float:
        return self.level_idle_power[self.node(node_id).level]

    def dyn_power(self, node_id: int) -> float:
        return self.level_dyn_power[self.node(node_id).level]

    def switches_at(self, level: int) -> list[int]:
        return [n.id for n in self.nodes if n.kind == SWITCH and n.level == level]

    @property
    def leaf_switches(self) -> list[int]:
        return self.switches_at(self.depth - 1)

    def leaf_of(self, server: int) -> int:
        """The single switch a server is wired to."""
        if not self.is_server(server):
            raise ValueError(f"node {server} is not a server")
        (leaf,) = self._adjacency[server]
        return leaf

    @cached_property
    def _adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for link in self.links:
            adj[link.endpoint_lo].append(link.endpoint_hi)
            adj[link.endpoint_hi].append(link.endpoint_lo)
        return {k: tuple(sorted(v)) for k, v in adj.items()}

    @cached_property
    def link_index(self) -> dict[tuple[int, int], Link]:
        return {link.key: link for link in self.links}

    def link_between(self, a: int, b: int) -> Link:
        return self.link_index[(a, b) if a < b else (b, a)]


def _scaled_levels(params: TreeParams) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
    d = params.depth
    idle = tuple(params.idle_base * d - params.idle_step * i for i in range(d + 1))
    dyn = tuple(params.dyn_base * d - params.dyn_step * i for i in range(d + 1))
    caps = tuple(params.link_cap_base * d - params.link_step * i for i in range(d))
    return idle, dyn, caps


def build_proxytree(params: TreeParams | None = None, **overrides: Any) -> Proxytree:
    """Generate the tree for ``params``; keyword overrides patch the defaults.

    >>> t = build_proxytree(depth=2)
    >>> (t.num_servers, t.num_switches, len(t.links), len(t.flows))
    (4, 3, 6, 2)
    """
    if params is None:
        params = TreeParams(**overrides)
    elif overrides:
        params = TreeParams(**{**asdict(params), **overrides})
    params.validate()

    depth = params.depth
    m = 2 ** depth
    k = 2 ** depth - 1
    idle, dyn, caps = _scaled_levels(params)

    nodes = [Node(i, depth, SERVER) for i in range(m)]
    level_ids: list[list[int]] = []
    next_id = m
    for level in range(depth):
        ids = list(range(next_id, next_id + 2 ** level))
        next_id += len(ids)
        level_ids.append(ids)
        nodes.extend(Node(i, level, SWITCH) for i in ids)

    links: list[Link] = []
    for level in range(depth - 1):
        for a in level_ids[level]:
            for b in level_ids[level + 1]:
                links.append(Link(a, b, level, caps[level]))
    for pos, leaf in enumerate(level_ids[depth - 1]):
        for server in (2 * pos, 2 * pos + 1):
            links.append(Link(leaf, server, depth - 1, caps[depth - 1]))

    flows = tuple(Flow(f, 2 * f, 2 * f + 1, params.avg_data_rate) for f in range(m // 2))
    return Proxytree(
        depth=depth,
        num_servers=m,
        num_vms=m,
        num_switches=k,
        nodes=tuple(nodes),
        links=tuple(links),
        flows=flows,
        level_idle_power=idle,
        level_dyn_power=dyn,
        level_link_capacity=caps,
        server_capacity=(params.server_capacity,) * m,
        vm_util=(params.vm_util,) * m,
        params=params,
    )


def adjacent_nodes(tree: Proxytree, node: int) -> list[int]:
    if node not in tree._adjacency:
        raise KeyError(f"unknown node id {node}")
    return list(tree._adjacency[node])


def validate_tree(tree: Proxytree) -> None:
    """Check every structural invariant; raise ``ValueError`` naming the first failure."""
    d = tree.depth
    if d < 2:
        raise ValueError(f"depth must be >= 2, got {d}")
    m = 2 ** d
    if tree.num_servers != m:
        raise ValueError(f"num_servers must be 2**depth = {m}, got {tree.num_servers}")
    if tree.num_vms != tree.num_servers:
        raise ValueError(f"num_vms must equal num_servers ({m}), got {tree.num_vms}")
    if tree.num_switches != m - 1:
        raise ValueError(f"num_switches must be {m - 1}, got {tree.num_switches}")
    if len(tree.nodes) != 2 * m - 1:
        raise ValueError(f"expected {2 * m - 1} nodes, got {len(tree.nodes)}")
    for pos, n in enumerate(tree.nodes):
        if n.id != pos:
            raise ValueError(f"node at position {pos} has id {n.id}")
        if pos < m and (n.kind != SERVER or n.level != d):
            raise ValueError(f"node {pos} must be a server on level {d}")
        if pos >= m and n.kind != SWITCH:
            raise ValueError(f"node {pos} must be a switch")
    for level in range(d):
        if len(tree.switches_at(level)) != 2 ** level:
            raise ValueError(f"switch level {level} must contain {2 ** level} switches")
    if len(tree.level_idle_power) != d + 1 or len(tree.level_dyn_power) != d + 1:
        raise ValueError("per-level power tables must have depth + 1 entries")
    if len(tree.level_link_capacity) != d:
        raise ValueError("per-layer link capacity table must have depth entries")

    expected = sum(2 ** i * 2 ** (i + 1) for i in range(d - 1)) + m
    if len(tree.links) != expected:
        raise ValueError(f"expected {expected} links, got {len(tree.links)}")
    seen = set()
    for link in tree.links:
        lo, hi = tree.node(link.endpoint_lo), tree.node(link.endpoint_hi)
        if hi.level != lo.level + 1 or link.layer != lo.level:
            raise ValueError(f"link {link.endpoint_lo}-{link.endpoint_hi} does not join adjacent levels")
        if link.capacity != tree.level_link_capacity[link.layer] or link.capacity <= 0:
            raise ValueError(f"link {link.endpoint_lo}-{link.endpoint_hi} has inconsistent capacity")
        if link.key in seen:
            raise ValueError(f"duplicate link {link.key}")
        seen.add(link.key)
    for level in range(d - 1):
        for a in tree.switches_at(level):
            for b in tree.switches_at(level + 1):
                if (a, b) not in seen:
                    raise ValueError(f"switch levels {level} and {level + 1} are not completely bipartite")
    for s in tree.servers:
        if len(tree._adjacency[s]) != 1:
            raise ValueError(f"server {s} must have exactly one adjacent switch")
    for leaf in tree.switches_at(d - 1):
        if sum(1 for n in tree._adjacency[leaf] if n < m) != 2:
            raise ValueError(f"leaf switch {leaf} must connect exactly two servers")

    if len(tree.server_capacity) != m or len(tree.vm_util) != tree.num_vms:
        raise ValueError("server_capacity / vm_util lengths do not match the tree")
    if len(tree.flows) != tree.num_vms // 2:
        raise ValueError(f"expected {tree.num_vms // 2} flows, got {len(tree.flows)}")
    for f in tree.flows:
        if (f.src_vm, f.dst_vm) != (2 * f.id, 2 * f.id + 1):
            raise ValueError(f"flow {f.id} must pair VMs ({2 * f.id}, {2 * f.id + 1})")
        if f.data_rate <= 0:
            raise ValueError(f"flow {f.id} has non-positive data rate")


# --- document format -------------------------------------------------------

def tree_to_dict(tree: Proxytree) -> dict[str, Any]:
    return {
        "format": FORMAT_TAG,
        "depth": tree.depth,
        "params": asdict(tree.params),
        "num_servers": tree.num_servers,
        "num_vms": tree.num_vms,
        "num_switches": tree.num_switches,
        "level_idle_power": list(tree.level_idle_power),
        "level_dyn_power": list(tree.level_dyn_power),
        "level_link_capacity": list(tree.level_link_capacity),
        "server_capacity": list(tree.server_capacity),
        "vm_util": list(tree.vm_util),
        "nodes": [{"id": n.id, "level": n.level, "kind": n.kind} for n in tree.nodes],
        "links": [{"lo": l.endpoint_lo, "hi": l.endpoint_hi, "layer": l.layer,
                   "capacity": l.capacity} for l in tree.links],
        "flows": [{"id": f.id, "src": f.src_vm, "dst": f.dst_vm, "data_rate": f.data_rate}
                  for f in tree.flows],
    }


def serialize_tree(tree: Proxytree) -> str:
    return json.dumps(tree_to_dict(tree), indent=1) + "\n"


def _get(obj: Any, key: str, path: str, kind: type | tuple[type, ...]) -> Any:
    if not isinstance(obj, dict):
        raise TreeFormatError("expected an object", path or "<document>")
    if key not in obj:
        raise TreeFormatError(f"missing field {key!r}", path or "<document>")
    value = obj[key]
    where = f"{path}.{key}" if path else key
    if kind in (int, float, (int, float)) and isinstance(value, bool):
        raise TreeFormatError("expected a number", where)
    if not isinstance(value, kind):
        raise TreeFormatError(f"expected {getattr(kind, '__name__', 'number')}", where)
    return value


def tree_from_dict(doc: Any) -> Proxytree:
    num = (int, float)
    if not isinstance(doc, dict):
        raise TreeFormatError("top level must be an object")
    fmt = doc.get("format")
    if fmt != FORMAT_TAG:
        raise TreeFormatError(f"unsupported format {fmt!r}, expected {FORMAT_TAG!r}", "format")

    raw_params = _get(doc, "params", "", dict)
    try:
        params = TreeParams(**raw_params)
    except TypeError as exc:
        raise TreeFormatError(str(exc), "params") from None

    def number_list(key: str) -> tuple[float, ...]:
        values = _get(doc, key, "", list)
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, num):
                raise TreeFormatError("expected a number", f"{key}[{i}]")
        return tuple(values)

    nodes = []
    for i, n in enumerate(_get(doc, "nodes", "", list)):
        p = f"nodes[{i}]"
        kind = _get(n, "kind", p, str)
        if kind not in (SERVER, SWITCH):
            raise TreeFormatError(f"unknown node kind {kind!r}", f"{p}.kind")
        nodes.append(Node(_get(n, "id", p, int), _get(n, "level", p, int), kind))
    links = []
    for i, l in enumerate(_get(doc, "links", "", list)):
        p = f"links[{i}]"
        links.append(Link(_get(l, "lo", p, int), _get(l, "hi", p, int),
                          _get(l, "layer", p, int), _get(l, "capacity", p, num)))
    flows = []
    for i, f in enumerate(_get(doc, "flows", "", list)):
        p = f"flows[{i}]"
        flows.append(Flow(_get(f, "id", p, int), _get(f, "src", p, int),
                          _get(f, "dst", p, int), _get(f, "data_rate", p, num)))

    tree = Proxytree(
        depth=_get(doc, "depth", "", int),
        num_servers=_get(doc, "num_servers", "", int),
        num_vms=_get(doc, "num_vms", "", int),
        num_switches=_get(doc, "num_switches", "", int),
        nodes=tuple(nodes),
        links=tuple(links),
        flows=tuple(flows),
        level_idle_power=number_list("level_idle_power"),
        level_dyn_power=number_list("level_dyn_power"),
        level_link_capacity=number_list("level_link_capacity"),
        server_capacity=number_list("server_capacity"),
        vm_util=number_list("vm_util"),
        params=params,
    )
    try:
        validate_tree(tree)
    except (ValueError, KeyError) as exc:
        raise TreeFormatError(str(exc), "<structure>") from None
    return tree


def parse_tree(text: str) -> Proxytree:
    if not text.strip():
        raise TreeFormatError("empty document", "line 1, column 1")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    return tree_from_dict(doc)


def load_tree(path: str) -> Proxytree:
    with open(path, encoding="utf-8") as fh:
        return parse_tree(fh.read())


def save_tree(tree: Proxytree, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_tree(tree))
