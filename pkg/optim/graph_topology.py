"""
Communication graphs, gossip matrices and their spectral data
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, NamedTuple, Optional, Tuple

import networkx as nx
import numpy as np
from scipy import linalg

from .exceptions import ConnectivityError, ParameterError

logger = logging.getLogger(__name__)

ER_MAX_DRAWS = 1000
PINV_CUTOFF = 1e-10
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Undirected graph on agents 0..m-1. Edges are stored as (i, j) with i < j."""

    m: int
    edges: FrozenSet[Tuple[int, int]]

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> 'Graph':
        nodes = sorted(g.nodes)
        index = {node: pos for pos, node in enumerate(nodes)}
        edges = set()
        for u, v in g.edges:
            i, j = index[u], index[v]
            if i != j:
                edges.add((min(i, j), max(i, j)))
        return cls(m=len(nodes), edges=frozenset(edges))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.m))
        g.add_edges_from(self.edges)
        return g

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.m, self.m), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    @cached_property
    def closed_neighborhood(self) -> np.ndarray:
        """Boolean mask whose row i marks N_i, agent i included."""
        return self.adjacency | np.eye(self.m, dtype=bool)

    @cached_property
    def neighbors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in self.closed_neighborhood)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_connected(self) -> bool:
        if self.m == 1:
            return True
        return nx.is_connected(self.to_networkx())


class GossipMatrix(NamedTuple):
    w_tilde: np.ndarray
    c: float
    w: np.ndarray
    graph: Optional[Graph] = None


class SpectralData(NamedTuple):
    lambda_2: float
    lambda_m: float
    M: np.ndarray


def build_line_graph(m: int) -> Graph:
    if m < 1:
        raise ParameterError(f"Line graph needs m >= 1, got {m}")
    return Graph.from_networkx(nx.path_graph(m))


def build_cycle_graph(m: int) -> Graph:
    if m < 1:
        raise ParameterError(f"Cycle graph needs m >= 1, got {m}")
    return Graph.from_networkx(nx.cycle_graph(m))


def build_complete_graph(m: int) -> Graph:
    if m < 1:
        raise ParameterError(f"Complete graph needs m >= 1, got {m}")
    return Graph.from_networkx(nx.complete_graph(m))


def build_erdos_renyi(m: int, p: float, seed: int = 0) -> Graph:
    """
    Draw G(m, p) graphs until one is connected.

    Draw t uses seed + t, so the accepted graph depends only on (m, p, seed).
    """
    if m < 2:
        raise ParameterError(f"Erdos-Renyi graph needs m >= 2, got {m}")
    if not 0 < p <= 1:
        raise ParameterError(f"Edge probability must lie in (0, 1], got {p}")

    for attempt in range(ER_MAX_DRAWS):
        g = nx.gnp_random_graph(m, p, seed=seed + attempt)
        if nx.is_connected(g):
            if attempt:
                logger.debug(f"Erdos-Renyi m={m} p={p}: connected draw after {attempt} rejections")
            return Graph.from_networkx(g)

    logger.warning(f"Erdos-Renyi m={m} p={p} seed={seed}: no connected draw in {ER_MAX_DRAWS} attempts")
    raise ConnectivityError(
        f"No connected G({m}, {p}) graph in {ER_MAX_DRAWS} draws; p is too small for m={m}"
    )


def build_graph(kind: str, m: int, p: Optional[float] = None, seed: int = 0) -> Graph:
    if kind == 'line':
        return build_line_graph(m)
    elif kind == 'cycle':
        return build_cycle_graph(m)
    elif kind == 'complete':
        return build_complete_graph(m)
    elif kind == 'erdos_renyi':
        if p is None:
            raise ParameterError("Erdos-Renyi graph needs an edge probability p")
        return build_erdos_renyi(m, p, seed)
    raise ParameterError(f"Unknown graph kind: {kind}")


def diameter(g: Graph) -> int:
    """Largest shortest-path hop count, by breadth-first search from every node."""
    if g.m == 1:
        return 0
    try:
        return int(nx.diameter(g.to_networkx()))
    except nx.NetworkXError as e:
        raise ConnectivityError(f"Diameter is undefined on a disconnected graph: {e}") from e


def metropolis_weights(g: Graph) -> np.ndarray:
    if not g.is_connected():
        raise ConnectivityError("Metropolis weights need a connected graph")

    deg = g.degrees
    w = np.zeros((g.m, g.m))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def check_gossip_invariants(w_tilde: np.ndarray, graph: Optional[Graph] = None, tol: float = STOCHASTIC_TOL):
    """Raise ParameterError unless w_tilde is symmetric, doubly stochastic and follows graph."""
    if w_tilde.ndim != 2 or w_tilde.shape[0] != w_tilde.shape[1]:
        raise ParameterError(f"Gossip matrix must be square, got shape {w_tilde.shape}")
    if np.max(np.abs(w_tilde - w_tilde.T)) > tol:
        raise ParameterError("Gossip matrix is not symmetric")
    if np.max(np.abs(w_tilde.sum(axis=1) - 1.0)) > tol:
        raise ParameterError("Gossip matrix rows do not sum to one")
    if np.any(np.diag(w_tilde) <= 0):
        raise ParameterError("Gossip matrix needs a positive diagonal")
    if graph is not None:
        if graph.m != w_tilde.shape[0]:
            raise ParameterError(f"Gossip matrix has size {w_tilde.shape[0]}, graph has {graph.m} agents")
        if not np.array_equal(w_tilde > 0, graph.closed_neighborhood):
            raise ParameterError("Gossip matrix sparsity does not match the graph")


def gossip_matrix(w_tilde: np.ndarray, c: float = 0.5, graph: Optional[Graph] = None) -> GossipMatrix:
    if not 0 < c <= 0.5:
        raise ParameterError(f"Mixing coefficient c must lie in (0, 1/2], got {c}")
    check_gossip_invariants(w_tilde, graph)
    m = w_tilde.shape[0]
    w = (1.0 - c) * np.eye(m) + c * w_tilde
    return GossipMatrix(w_tilde=w_tilde, c=c, w=w, graph=graph)


def metropolis_gossip(g: Graph, c: float = 0.5) -> GossipMatrix:
    return gossip_matrix(metropolis_weights(g), c, graph=g)


def spectral_data(gm: GossipMatrix) -> SpectralData:
    """
    Eigen data of W~ and M = c^-1 (I - W~)^+ - I.

    Eigenvalues of I - W~ below PINV_CUTOFF count as zero, so the
    all-ones direction maps to -1 under M.
    """
    m = gm.w_tilde.shape[0]
    evals, evecs = linalg.eigh(gm.w_tilde)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    lap = 1.0 - evals
    inv = np.zeros_like(lap)
    keep = lap > PINV_CUTOFF
    inv[keep] = 1.0 / lap[keep]
    pinv = (evecs * inv) @ evecs.T
    M = pinv / gm.c - np.eye(m)
    M = 0.5 * (M + M.T)

    lambda_2 = float(evals[1]) if m > 1 else float('nan')
    lambda_m = float(evals[-1])
    return SpectralData(lambda_2=lambda_2, lambda_m=lambda_m, M=M)


def communication_graph(gm: GossipMatrix) -> Graph:
    """The graph a gossip matrix was built on, or the one its sparsity implies."""
    if gm.graph is not None:
        return gm.graph
    m = gm.w_tilde.shape[0]
    edges = {(int(i), int(j)) for i, j in np.argwhere(gm.w_tilde != 0) if i < j}
    return Graph(m=m, edges=frozenset(edges))
