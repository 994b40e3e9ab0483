"""
Network Tomography

Per-route Poisson traffic rates are estimated from aggregate per-link counts
with the same EM solver used for emission tomography: routes play the part of
pixels and links the part of detector tubes.

The motivating description speaks of reconstructing "the traffic on each leg
of a graphical network from the overall traffic between the nodes". This
module implements the usual reading instead: link observations in, route
(origin-destination) rates out.

Link counts are dependent (one route loads several links). Estimation
maximizes the independent-Poisson pseudo-likelihood of the epoch-summed link
counts; the simulator keeps the true dependence so the cost of that
approximation can be measured.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import sparse

from core.em_core import EmConfig, SystemMatrix, as_intensities, log_likelihood, run_em
from core.errors import (
    DimensionMismatch, DisconnectedPair, EmptyRoute, InvalidConfig, InvalidGraph,
    NegativeRate, UnknownNode,
)
from core.logger import get_logger
from core.rng import make_rng

logger = get_logger("nettomo")


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph; links are numbered in edge-list order."""
    n_nodes: int
    edges: Tuple[Tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidGraph("graph needs at least one node")
        seen = set()
        for i, (u, v, w) in enumerate(self.edges):
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise UnknownNode(f"edge {i} ({u}, {v}) references a missing node")
            if u == v:
                raise InvalidGraph(f"edge {i} is a self-loop on node {u}")
            if not (w > 0 and np.isfinite(w)):
                raise InvalidGraph(f"edge {i} has non-positive weight {w}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidGraph(f"edge {i} duplicates ({u}, {v})")
            seen.add(key)
        if not nx.is_connected(self.to_networkx()):
            raise InvalidGraph("graph is not connected")

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Graph":
        return cls(int(n_nodes), tuple((int(u), int(v), float(w)) for u, v, w in edges))

    @property
    def n_links(self) -> int:
        return len(self.edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        for link, (u, v, w) in enumerate(self.edges):
            g.add_edge(u, v, weight=w, link=link)
        return g

    def link_index(self) -> Dict[Tuple[int, int], int]:
        index = {}
        for link, (u, v, _) in enumerate(self.edges):
            index[(u, v)] = link
            index[(v, u)] = link
        return index


@dataclass(frozen=True, eq=False)
class RouteMatrix:
    """Routes (OD pairs), their node paths and the 0/1 route x link incidence."""
    routes: Tuple[Tuple[int, int], ...]
    paths: Tuple[Tuple[int, ...], ...]
    incidence: sparse.csr_matrix

    @property
    def n_routes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_links(self) -> int:
        return self.incidence.shape[1]

    def system_matrix(self, epochs: int = 1) -> SystemMatrix:
        """Links as detectors, routes as sources, weights scaled by ``epochs``."""
        return SystemMatrix.from_triplets(
            self.n_routes, self.n_links,
            ((r, l, float(epochs)) for r, l in zip(*self.incidence.nonzero())))

    def incidence_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.incidence.toarray()))


@dataclass(frozen=True, eq=False)
class LinkCounts:
    """Per-link integer counts, one row per measurement epoch."""
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] < 1:
            raise DimensionMismatch("link counts must be epochs x links with at least one epoch")
        if c.dtype.kind not in "iu":
            if not np.all(c == np.round(c)):
                raise InvalidConfig("link counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise InvalidConfig("link counts must be >= 0")
        object.__setattr__(self, "counts", c)

    @property
    def epochs(self) -> int:
        return self.counts.shape[0]

    @property
    def n_links(self) -> int:
        return self.counts.shape[1]


def build_route_matrix(g: Graph, od_pairs: Sequence[Tuple[int, int]]) -> RouteMatrix:
    """
    Weighted shortest path for each OD pair; among equal-length paths the
    lexicographically smallest node sequence wins.
    """
    G = g.to_networkx()
    links = g.link_index()
    routes, paths, rows, cols = [], [], [], []
    for r, (origin, dest) in enumerate(od_pairs):
        origin, dest = int(origin), int(dest)
        for node in (origin, dest):
            if not 0 <= node < g.n_nodes:
                raise UnknownNode(f"route {r}: node {node} not in graph")
        if origin == dest:
            raise EmptyRoute(f"route {r}: origin equals destination ({origin})")
        try:
            path = min(tuple(p) for p in nx.all_shortest_paths(G, origin, dest, weight="weight"))
        except nx.NetworkXNoPath:
            raise DisconnectedPair(f"route {r}: no path from {origin} to {dest}") from None
        routes.append((origin, dest))
        paths.append(path)
        for u, v in zip(path[:-1], path[1:]):
            rows.append(r)
            cols.append(links[(u, v)])

    incidence = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                  shape=(len(routes), g.n_links))
    logger.info("Routed %d OD pairs over %d links", len(routes), g.n_links)
    return RouteMatrix(tuple(routes), tuple(paths), incidence)


def simulate_traffic(R: RouteMatrix, rates, epochs: int, seed: int) -> LinkCounts:
    """Per epoch: X_r ~ Poisson(rate_r) independently, Y_l = sum of X_r over routes using l."""
    lam = np.asarray(rates, dtype=float).ravel()
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise NegativeRate("route rates must be finite and >= 0")
    if lam.size != R.n_routes:
        raise DimensionMismatch(f"{lam.size} rates for {R.n_routes} routes")
    if epochs < 1:
        raise DimensionMismatch("need at least one epoch")
    rng = make_rng(seed, "route-traffic")
    volumes = rng.poisson(lam, size=(int(epochs), R.n_routes))
    link_counts = np.asarray(R.incidence.T @ volumes.T).T
    return LinkCounts(np.rint(link_counts).astype(np.int64))


def estimate_rates(R: RouteMatrix, Y: LinkCounts, cfg: Optional[EmConfig] = None) -> np.ndarray:
    """Route rates per epoch from epoch-summed link counts (pseudo-likelihood EM)."""
    if Y.n_links != R.n_links:
        raise DimensionMismatch(f"counts cover {Y.n_links} links, routes use {R.n_links}")
    summed = Y.counts.sum(axis=0)
    A = R.system_matrix()
    totals, trace = run_em(A, summed, cfg)
    logger.info("Pseudo-likelihood %.10g after %d iteration(s) over %d epoch(s)",
                trace[-1], trace.size - 1, Y.epochs)
    return totals / Y.epochs


def pseudo_log_likelihood(R: RouteMatrix, Y: LinkCounts, rates) -> float:
    """Independent-Poisson log-likelihood of the summed counts at per-epoch ``rates``."""
    lam = as_intensities(rates) * Y.epochs
    return log_likelihood(lam, R.system_matrix(), Y.counts.sum(axis=0))


def default_network() -> Tuple[Graph, List[Tuple[int, int]]]:
    """Path 0-1-2-3 with routes 0->1, 0->2, 1->3: full column rank incidence."""
    g = Graph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
    return g, [(0, 1), (0, 2), (1, 3)]
