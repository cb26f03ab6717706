"""City network: zone centroids, Euclidean edges, shortest-path distances.

Nodes carry population and a housing mix (fractions of single / attached /
apartment dwellings); edges are undirected with lengths equal to the
Euclidean distance between their endpoints. All station-to-user distances
are graph shortest paths over these edge lengths, never straight lines.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

NETWORK_SCHEMA = "evcover-network-v1"


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    population: float
    city_center: bool = False
    housing_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)  # single, attached, apartment


@dataclass(frozen=True)
class Edge:
    node_a: str
    node_b: str
    length: float  # km, Euclidean between endpoints


class NetworkError(ValueError):
    pass


class Network:
    """Undirected, connected graph of zones.

    Construction validates all structural invariants (unique ids, existing
    endpoints, positive lengths, housing mixes summing to 1, connectivity).
    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, nodes, edges, require_connected=True):
        self.nodes = tuple(nodes)
        self.node_ids = tuple(n.id for n in self.nodes)
        self.index_of = {nid: i for i, nid in enumerate(self.node_ids)}
        if len(self.index_of) != len(self.nodes):
            raise NetworkError("duplicate node ids")
        for n in self.nodes:
            mix = n.housing_mix
            if len(mix) != 3 or any(f < -1e-12 or f > 1 + 1e-12 for f in mix):
                raise NetworkError(f"node {n.id}: housing_mix fractions must lie in [0, 1]")
            if abs(sum(mix) - 1.0) > 1e-9:
                raise NetworkError(f"node {n.id}: housing_mix must sum to 1 (got {sum(mix)!r})")
            if n.population < 0:
                raise NetworkError(f"node {n.id}: negative population")

        checked = []
        for e in edges:
            if e.node_a not in self.index_of or e.node_b not in self.index_of:
                raise NetworkError(f"edge ({e.node_a}, {e.node_b}): unknown endpoint")
            if e.length <= 0:
                raise NetworkError(f"edge ({e.node_a}, {e.node_b}): length must be > 0")
            checked.append(e)
        self.edges = tuple(checked)

        n = len(self.nodes)
        rows, cols, vals = [], [], []
        for e in self.edges:
            a, b = self.index_of[e.node_a], self.index_of[e.node_b]
            rows += [a, b]
            cols += [b, a]
            vals += [e.length, e.length]
        self._adjacency = csr_matrix((vals, (rows, cols)), shape=(n, n))

        ncomp, labels = connected_components(self._adjacency, directed=False)
        self._component_labels = labels
        if require_connected and n > 1 and ncomp != 1:
            sizes = np.bincount(labels)
            small = int(np.argmin(sizes))
            members = [self.node_ids[i] for i in np.flatnonzero(labels == small)]
            raise NetworkError(
                f"network is disconnected ({ncomp} components); smallest component: {members}"
            )

    def __len__(self):
        return len(self.nodes)

    @property
    def total_population(self):
        return float(sum(n.population for n in self.nodes))

    def node(self, node_id) -> Node:
        return self.nodes[self.index_of[node_id]]

    def distance_matrix(self, source_ids):
        """Shortest-path km from each source node to every node, shape (len(sources), n)."""
        idx = np.asarray([self.index_of[s] for s in source_ids], dtype=int)
        return dijkstra(self._adjacency, directed=False, indices=idx)


def shortest_path_distances(network: Network, source_node: str) -> dict[str, float]:
    """Exact single-source shortest-path lengths (km) over edge lengths.

    Raises NetworkError naming the unreachable nodes if the graph is
    disconnected from the source.
    """
    if source_node not in network.index_of:
        raise NetworkError(f"unknown source node {source_node!r}")
    dist = network.distance_matrix([source_node])[0]
    unreachable = np.isinf(dist)
    if unreachable.any():
        members = [network.node_ids[i] for i in np.flatnonzero(unreachable)]
        raise NetworkError(
            f"nodes unreachable from {source_node!r} (disconnected component): {members}"
        )
    return {nid: float(d) for nid, d in zip(network.node_ids, dist)}


def euclidean(n1: Node, n2: Node) -> float:
    return math.hypot(n1.x - n2.x, n1.y - n2.y)


def _gabriel_edges(points):
    """Gabriel graph edges (indices): Delaunay edges whose diametral circle is empty."""
    from scipy.spatial import Delaunay

    pts = np.asarray(points)
    tri = Delaunay(pts)
    cand = set()
    for simplex in tri.simplices:
        for a in range(3):
            i, j = sorted((simplex[a], simplex[(a + 1) % 3]))
            cand.add((i, j))
    edges = []
    for i, j in sorted(cand):
        mid = (pts[i] + pts[j]) / 2.0
        rad2 = np.sum((pts[i] - pts[j]) ** 2) / 4.0
        d2 = np.sum((pts - mid) ** 2, axis=1)
        d2[i] = d2[j] = np.inf
        if d2.min() > rad2 - 1e-12:
            edges.append((i, j))
    return edges


def generate_network(
    n_nodes,
    seed,
    width_km=30.0,
    height_km=22.0,
    mean_population=570.0,
    center_fraction=0.10,
):
    """Seeded synthetic city: uniform nodes, Gabriel-graph edges, lognormal populations.

    The Gabriel graph contains the Euclidean minimum spanning tree, so the
    result is connected. Roughly ``center_fraction`` of the nodes closest to
    the population-weighted centroid are flagged as city centre.
    """
    if n_nodes < 2:
        raise NetworkError("need at least two nodes")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA17]))
    pts = rng.random((n_nodes, 2)) * [width_km, height_km]
    sigma = 0.8
    pops = rng.lognormal(mean=math.log(mean_population) - sigma**2 / 2, sigma=sigma, size=n_nodes)
    mixes = rng.dirichlet([4.0, 2.0, 2.0], size=n_nodes)

    centroid = np.average(pts, axis=0, weights=pops)
    order = np.argsort(np.sum((pts - centroid) ** 2, axis=1))
    n_center = max(1, int(round(center_fraction * n_nodes)))
    center = np.zeros(n_nodes, dtype=bool)
    center[order[:n_center]] = True

    nodes = [
        Node(
            id=f"n{i}",
            x=float(pts[i, 0]),
            y=float(pts[i, 1]),
            population=float(round(pops[i], 3)),
            city_center=bool(center[i]),
            housing_mix=tuple(float(round(f, 6)) for f in _renormalise(mixes[i])),
        )
        for i in range(n_nodes)
    ]
    edges = [
        Edge(f"n{i}", f"n{j}", euclidean(nodes[i], nodes[j])) for i, j in _gabriel_edges(pts)
    ]
    return Network(nodes, edges)


def _renormalise(fractions):
    f = np.clip(np.asarray(fractions, dtype=float), 0.0, 1.0)
    f = np.round(f, 6)
    f[0] = 1.0 - f[1] - f[2]
    return f


# -- network file: one document, [nodes] and [edges] CSV tables with headers --

_NODE_HEADER = ["id", "x_km", "y_km", "population", "city_center", "frac_single", "frac_attached", "frac_apartment"]
_EDGE_HEADER = ["node_a", "node_b", "length_km"]


def network_to_text(network: Network) -> str:
    buf = io.StringIO()
    buf.write(f"# {NETWORK_SCHEMA}\n[nodes]\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_NODE_HEADER)
    for n in network.nodes:
        w.writerow([n.id, repr(n.x), repr(n.y), repr(n.population), int(n.city_center),
                    repr(n.housing_mix[0]), repr(n.housing_mix[1]), repr(n.housing_mix[2])])
    buf.write("[edges]\n")
    w.writerow(_EDGE_HEADER)
    for e in network.edges:
        w.writerow([e.node_a, e.node_b, repr(e.length)])
    return buf.getvalue()


def network_from_text(text: str) -> Network:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {NETWORK_SCHEMA}"):
        raise NetworkError(f"not a {NETWORK_SCHEMA} document")
    sections: dict[str, list[str]] = {}
    current = None
    for ln in lines[1:]:
        if ln.strip() in ("[nodes]", "[edges]"):
            current = ln.strip()[1:-1]
            sections[current] = []
        elif current is not None and ln.strip():
            sections[current].append(ln)
    for required in ("nodes", "edges"):
        if required not in sections or not sections[required]:
            raise NetworkError(f"missing [{required}] table")

    node_rows = list(csv.reader(sections["nodes"]))
    if node_rows[0] != _NODE_HEADER:
        raise NetworkError(f"bad node header {node_rows[0]!r}")
    nodes = [
        Node(r[0], float(r[1]), float(r[2]), float(r[3]), bool(int(r[4])),
             (float(r[5]), float(r[6]), float(r[7])))
        for r in node_rows[1:]
    ]
    edge_rows = list(csv.reader(sections["edges"]))
    if edge_rows[0] != _EDGE_HEADER:
        raise NetworkError(f"bad edge header {edge_rows[0]!r}")
    edges = [Edge(r[0], r[1], float(r[2])) for r in edge_rows[1:]]
    return Network(nodes, edges)


def save_network(network: Network, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(network_to_text(network))


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_text(fh.read())
