"""Scale-free router topologies with static shortest-path routing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np

from ..crypto import InvalidArgument


@dataclass
class Topology:
    """Routers are ``0..n_routers-1``.  Publisher ``i`` is node
    ``n_routers + i`` and the subscription manager is the node after the
    last publisher; each hangs off one router by a single link."""

    n_routers: int
    adjacency: dict[int, list[int]]
    betweenness: dict[int, float]
    publisher_routers: list[int]
    gateways: list[int]
    manager_router: int
    next_hop: list[list[int]]
    distance: list[list[int]]
    capacity_bps: float
    propagation_delay: float

    @property
    def n_publishers(self) -> int:
        return len(self.publisher_routers)

    @property
    def publisher_nodes(self) -> list[int]:
        return [self.n_routers + i for i in range(self.n_publishers)]

    @property
    def manager_node(self) -> int:
        return self.n_routers + self.n_publishers

    def attach_router(self, node: int) -> int:
        """Router a node hangs off (routers map to themselves)."""
        if node < self.n_routers:
            return node
        if node == self.manager_node:
            return self.manager_router
        return self.publisher_routers[node - self.n_routers]

    def route(self, router: int, dest: int) -> int:
        """Next node from ``router`` toward ``dest`` (router or endpoint)."""
        target = self.attach_router(dest)
        if router == target:
            return dest
        return self.next_hop[router][target]

    def hops(self, src: int, dest: int) -> int:
        """Link count between two nodes."""
        a, b = self.attach_router(src), self.attach_router(dest)
        return self.distance[a][b] + (src != a) + (dest != b)

    def edges(self) -> list[tuple[int, int]]:
        out = [(u, v) for u, vs in self.adjacency.items() for v in vs if u < v]
        out += [(r, n) for n, r in zip(self.publisher_nodes, self.publisher_routers)]
        out.append((self.manager_router, self.manager_node))
        return sorted(out)

    def path(self, src: int, dest: int) -> list[int]:
        """Node sequence from ``src`` to ``dest`` inclusive."""
        nodes = [src]
        node = src
        if node >= self.n_routers:
            node = self.attach_router(node)
            nodes.append(node)
        while node != dest:
            node = self.route(node, dest)
            nodes.append(node)
        return nodes

    def multicast_tree(self, source: int, sinks: list[int]) -> list[tuple[int, int]]:
        """Directed links of the shortest-path tree from ``source`` to ``sinks``."""
        links: set[tuple[int, int]] = set()
        for sink in sinks:
            p = self.path(source, sink)
            links.update(zip(p, p[1:]))
        return sorted(links)


def _bfs_tree(adjacency: dict[int, list[int]], root: int, n: int) -> tuple[list[int], list[int]]:
    parent = [-1] * n
    dist = [-1] * n
    dist[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                queue.append(v)
    return parent, dist


def generate_topology(
    n_routers: int,
    ba_m: int,
    n_publishers: int,
    n_gateways: int,
    seed: int,
    capacity_bps: float = 1e9,
    propagation_delay: float = 1e-3,
) -> Topology:
    if not n_routers > ba_m >= 1:
        raise InvalidArgument("need n_routers > ba_m >= 1")
    if n_publishers < 1 or n_gateways < 1 or n_publishers + n_gateways > n_routers:
        raise InvalidArgument("publisher and gateway routers must fit in the topology")
    rng = np.random.default_rng(seed)
    graph = nx.barabasi_albert_graph(n_routers, ba_m, seed=int(rng.integers(2**31)))
    adjacency = {u: sorted(graph.neighbors(u)) for u in range(n_routers)}
    betweenness = nx.betweenness_centrality(graph, normalized=True)
    ranked = sorted(range(n_routers), key=lambda u: (-betweenness[u], u))
    publisher_routers = ranked[:n_publishers]
    rest = sorted(ranked[n_publishers:])
    gateways = sorted(int(g) for g in rng.choice(rest, size=n_gateways, replace=False))
    taken = set(publisher_routers) | set(gateways)
    manager_router = next((u for u in ranked if u not in taken), publisher_routers[0])

    next_hop = [[-1] * n_routers for _ in range(n_routers)]
    distance = [[0] * n_routers for _ in range(n_routers)]
    for dest in range(n_routers):
        parent, dist = _bfs_tree(adjacency, dest, n_routers)
        for u in range(n_routers):
            next_hop[u][dest] = parent[u] if u != dest else u
            distance[u][dest] = dist[u]
    return Topology(
        n_routers=n_routers,
        adjacency=adjacency,
        betweenness=betweenness,
        publisher_routers=publisher_routers,
        gateways=gateways,
        manager_router=manager_router,
        next_hop=next_hop,
        distance=distance,
        capacity_bps=capacity_bps,
        propagation_delay=propagation_delay,
    )
