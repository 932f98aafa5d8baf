"""Flow path enumeration over the layered tree."""

from __future__ import annotations

from ..topology import Proxytree


def _valley_free(tree: Proxytree, src: int, dst: int) -> list[list[int]]:
    """Paths that climb from src's leaf to some level, then descend to dst's leaf."""
    lo, hi = tree.leaf_of(src), tree.leaf_of(dst)
    if lo == hi:
        return [[src, lo, dst]]
    out = []
    # peak level t ranges from depth-2 (just above the leaves) up to the root
    for peak in range(tree.depth - 2, -1, -1):
        up_levels = list(range(tree.depth - 2, peak - 1, -1))    # above lo, ending at peak
        down_levels = list(range(peak + 1, tree.depth - 1))      # below peak, above hi

        def climb(prefix: list[int], levels: list[int]):
            if not levels:
                yield prefix
                return
            for node in tree.switches_at(levels[0]):
                yield from climb(prefix + [node], levels[1:])

        def descend(prefix: list[int], levels: list[int], used: set[int]):
            if not levels:
                yield prefix
                return
            for node in tree.switches_at(levels[0]):
                if node not in used:
                    yield from descend(prefix + [node], levels[1:], used)

        for up in climb([], up_levels):
            used = set(up)
            for down in descend([], down_levels, used):
                out.append([src, lo, *up, *down, hi, dst])
    return out


def _all_simple(tree: Proxytree, src: int, dst: int) -> list[list[int]]:
    out = []
    path = [src]
    on_path = {src}

    def dfs(node: int):
        for nxt in tree._adjacency[node]:
            if nxt == dst:
                out.append(path + [dst])
            elif nxt not in on_path and not tree.is_server(nxt):
                path.append(nxt)
                on_path.add(nxt)
                dfs(nxt)
                on_path.discard(nxt)
                path.pop()

    dfs(src)
    return out


def enumerate_flow_paths(tree: Proxytree, src_server: int, dst_server: int,
                         monotone: bool = True) -> list[list[int]]:
    """Simple server-to-server paths as node lists, shortest first.

    ``monotone=True`` keeps only up-then-down paths; ``False`` returns every
    simple path that does not transit another server. Equal endpoints yield a
    single empty path.
    """
    for n in (src_server, dst_server):
        if not (0 <= n < len(tree.nodes)) or not tree.is_server(n):
            raise ValueError(f"flow endpoint {n} is not a server")
    if src_server == dst_server:
        return [[]]
    paths = _valley_free(tree, src_server, dst_server) if monotone else _all_simple(
        tree, src_server, dst_server)
    return sorted(paths, key=lambda p: (len(p), p))
