"""Topology builders and static routing.

All builders produce duplex 1 Gbps links with the default per-hop
propagation/processing delays and 4 MByte FIFO queues. Routing is static
shortest-path with deterministic lexicographic tie-breaking; equal-cost
path sets are enumerated lazily per host pair for ECMP.
"""

from __future__ import annotations

import zlib
from collections import deque
from dataclasses import dataclass

from .units import GBPS, MB, us

DEFAULT_RATE_BPS = GBPS
DEFAULT_PROP_NS = us(0.1)
DEFAULT_PROC_NS = us(25)
DEFAULT_QUEUE_BYTES = 4 * MB


@dataclass
class LinkParams:
    rate_bps: int = DEFAULT_RATE_BPS
    prop_ns: int = DEFAULT_PROP_NS
    proc_ns: int = DEFAULT_PROC_NS
    capacity_bytes: int = DEFAULT_QUEUE_BYTES


class Topology:
    def __init__(self, name: str = "topology"):
        self.name = name
        self.hosts: list[str] = []
        self.switches: list[str] = []
        self.link_params: dict[tuple[str, str], LinkParams] = {}
        self.adj: dict[str, list[str]] = {}
        self.rack: dict[str, str] = {}
        self._path_cache: dict[tuple[str, str], list[tuple[str, ...]]] = {}

    def add_host(self, node_id: str) -> str:
        self.hosts.append(node_id)
        self.adj.setdefault(node_id, [])
        return node_id

    def add_switch(self, node_id: str) -> str:
        self.switches.append(node_id)
        self.adj.setdefault(node_id, [])
        return node_id

    def add_duplex_link(self, a: str, b: str, params: LinkParams | None = None) -> None:
        params = params or LinkParams()
        for src, dst in ((a, b), (b, a)):
            if (src, dst) in self.link_params:
                raise ValueError(f"duplicate link {src}->{dst}")
            self.link_params[(src, dst)] = params
            self.adj[src].append(dst)
        self.adj[a].sort()
        self.adj[b].sort()

    @property
    def nodes(self) -> list[str]:
        return self.hosts + self.switches

    def paths(self, src: str, dst: str) -> list[tuple[str, ...]]:
        """All shortest paths src..dst, lexicographically sorted."""
        key = (src, dst)
        if key in self._path_cache:
            return self._path_cache[key]
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self.adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if dst not in dist:
            raise ValueError(f"no path {src} -> {dst}")
        paths: list[tuple[str, ...]] = []

        def extend(node, acc):
            if node == dst:
                paths.append(tuple(acc))
                return
            for v in self.adj[node]:
                if dist.get(v) == dist[node] + 1 and dist[v] <= dist[dst]:
                    acc.append(v)
                    extend(v, acc)
                    acc.pop()

        extend(src, [src])
        paths.sort()
        self._path_cache[key] = paths
        return paths

    def path(self, src: str, dst: str) -> tuple[str, ...]:
        return self.paths(src, dst)[0]

    def ecmp_path(self, src: str, dst: str, key: str) -> tuple[str, ...]:
        """Deterministically hash a flow key onto one equal-cost path."""
        choices = self.paths(src, dst)
        idx = zlib.crc32(key.encode()) % len(choices)
        return choices[idx]

    def min_rate_on(self, path: tuple[str, ...]) -> int:
        return min(self.link_params[(path[i], path[i + 1])].rate_bps
                   for i in range(len(path) - 1))


def build_single_bottleneck(n_senders: int, params: LinkParams | None = None) -> Topology:
    """n sending hosts connected via one switch to a single receiving host."""
    if n_senders < 1:
        raise ValueError("need at least one sender")
    topo = Topology("single_bottleneck")
    sw = topo.add_switch("sw0")
    recv = topo.add_host("recv")
    topo.add_duplex_link(recv, sw, params)
    topo.rack[recv] = sw
    for i in range(n_senders):
        h = topo.add_host(f"h{i:03d}")
        topo.add_duplex_link(h, sw, params)
        topo.rack[h] = sw
    return topo


def build_single_rooted_tree(servers: int = 12, racks: int = 4,
                             params: LinkParams | None = None) -> Topology:
    """Two-level single-rooted tree; defaults give the 17-node, 12-server shape."""
    if servers % racks:
        raise ValueError("servers must divide evenly across racks")
    topo = Topology("single_rooted_tree")
    root = topo.add_switch("root")
    per_rack = servers // racks
    idx = 0
    for r in range(racks):
        tor = topo.add_switch(f"tor{r}")
        topo.add_duplex_link(tor, root, params)
        for _ in range(per_rack):
            h = topo.add_host(f"h{idx:03d}")
            topo.add_duplex_link(h, tor, params)
            topo.rack[h] = tor
            idx += 1
    return topo


def build_fat_tree(k: int, params: LinkParams | None = None) -> Topology:
    """Standard k-ary fat-tree: k^3/4 hosts, 5k^2/4 switches."""
    if k < 2 or k % 2:
        raise ValueError("fat-tree arity k must be even and >= 2")
    topo = Topology(f"fat_tree_k{k}")
    half = k // 2
    cores = [topo.add_switch(f"core{i:02d}") for i in range(half * half)]
    host_idx = 0
    for p in range(k):
        aggs = [topo.add_switch(f"p{p}_agg{j}") for j in range(half)]
        edges = [topo.add_switch(f"p{p}_edge{j}") for j in range(half)]
        for j, agg in enumerate(aggs):
            for c in range(half):
                topo.add_duplex_link(agg, cores[j * half + c], params)
            for edge in edges:
                topo.add_duplex_link(edge, agg, params)
        for edge in edges:
            for _ in range(half):
                h = topo.add_host(f"h{host_idx:03d}")
                topo.add_duplex_link(h, edge, params)
                topo.rack[h] = edge
                host_idx += 1
    return topo


def build_parallel_paths(n_paths: int, params: LinkParams | None = None) -> Topology:
    """Two hosts joined by n disjoint single-switch paths (one NIC per path)."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    topo = Topology(f"parallel_paths_{n_paths}")
    a = topo.add_host("src")
    b = topo.add_host("dst")
    for i in range(n_paths):
        sw = topo.add_switch(f"p{i}")
        topo.add_duplex_link(a, sw, params)
        topo.add_duplex_link(sw, b, params)
    topo.rack[a] = "p0"
    topo.rack[b] = "p0"
    return topo


BUILDERS = {
    "single_bottleneck": build_single_bottleneck,
    "single_rooted_tree": build_single_rooted_tree,
    "fat_tree": build_fat_tree,
    "parallel_paths": build_parallel_paths,
}
