"""
Neighbor-to-neighbor communication: gossip rounds, min/max consensus and the message ledger
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .exceptions import LocalityError
from .graph_topology import Graph, diameter

logger = logging.getLogger(__name__)


def _as_columns(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    return values[:, None] if values.ndim == 1 else values


def local_min_consensus(values: np.ndarray, graph: Graph) -> np.ndarray:
    """output_i = min over j in N_i of values_j (column-wise for 2-d input)."""
    values = np.asarray(values)
    cols = _as_columns(values).astype(float)
    mask = graph.closed_neighborhood[:, :, None]
    out = np.where(mask, cols[None, :, :], np.inf).min(axis=1)
    return out.reshape(values.shape).astype(values.dtype, copy=False)


def local_max_consensus(values: np.ndarray, graph: Graph) -> np.ndarray:
    values = np.asarray(values)
    cols = _as_columns(values).astype(float)
    mask = graph.closed_neighborhood[:, :, None]
    out = np.where(mask, cols[None, :, :], -np.inf).max(axis=1)
    return out.reshape(values.shape).astype(values.dtype, copy=False)


class Message(NamedTuple):
    sender: int
    receiver: int
    size: int


@dataclass
class Round:
    kind: str
    label: str
    messages: List[Message] = field(default_factory=list)


class NeighborExchange:
    """
    Ledger of the rounds an algorithm performs on a graph.

    A vector round ships one row of a stacked m x d matrix along every
    edge; a scalar round ships a handful of numbers. Set keep_history to
    record every message for auditing.
    """

    def __init__(self, graph: Graph, keep_history: bool = False):
        self.graph = graph
        self.keep_history = keep_history
        self.vector_rounds = 0
        self.scalar_rounds = 0
        self.messages = 0
        self.scalars_sent = 0
        self.history: List[Round] = []
        self._open_round: Optional[Round] = None
        self._checked_supports = set()
        self._diameter = None

    @property
    def graph_diameter(self) -> int:
        if self._diameter is None:
            self._diameter = diameter(self.graph)
        return self._diameter

    def _check_support(self, matrix: np.ndarray):
        key = id(matrix)
        if key in self._checked_supports:
            return
        off_diagonal = (matrix != 0) & ~np.eye(self.graph.m, dtype=bool)
        stray = off_diagonal & ~self.graph.adjacency
        if stray.any():
            i, j = map(int, np.argwhere(stray)[0])
            raise LocalityError(f"Mixing weight ({i}, {j}) does not follow an edge of the graph")
        self._checked_supports.add(key)

    def _record(self, kind: str, label: str, count: int, size: int, messages=None):
        self.messages += count
        self.scalars_sent += count * size
        if self.keep_history:
            self.history.append(Round(kind, label, list(messages or [])))

    def gossip(self, matrix: np.ndarray, Z: np.ndarray, label: str = 'gossip') -> np.ndarray:
        """One vector round: returns matrix @ Z."""
        self._check_support(matrix)
        self.vector_rounds += 1
        size = Z.shape[1] if Z.ndim == 2 else 1
        count = int(np.count_nonzero(matrix)) - int(np.count_nonzero(np.diag(matrix)))
        messages = None
        if self.keep_history:
            # row i of matrix @ Z needs z_j from every j with matrix[i, j] != 0
            messages = [Message(int(j), int(i), size) for i, j in np.argwhere(matrix != 0) if i != j]
        self._record('vector', label, count, size, messages)
        return matrix @ Z

    def _charge_scalar(self, label: str, size: int):
        self.scalar_rounds += 1
        count = 2 * len(self.graph.edges)
        messages = None
        if self.keep_history:
            messages = [
                Message(j, i, size)
                for i, nbrs in enumerate(self.graph.neighbors) for j in nbrs if j != i
            ]
        self._record('scalar', label, count, size, messages)

    @contextmanager
    def scalar_round(self, label: str, size: int):
        """Group several consensus operations into one scalar round."""
        self._charge_scalar(label, size)
        self._open_round = Round('scalar', label)
        try:
            yield self
        finally:
            self._open_round = None

    def min_consensus(self, values: np.ndarray, label: str = 'min') -> np.ndarray:
        if self._open_round is None:
            self._charge_scalar(label, _as_columns(values).shape[1])
        return local_min_consensus(values, self.graph)

    def max_consensus(self, values: np.ndarray, label: str = 'max') -> np.ndarray:
        if self._open_round is None:
            self._charge_scalar(label, _as_columns(values).shape[1])
        return local_max_consensus(values, self.graph)

    def flood_min(self, values: np.ndarray, label: str = 'flood-min') -> np.ndarray:
        """
        Network-wide minimum, computed directly but charged as
        d_G rounds of local min-consensus.
        """
        for _ in range(self.graph_diameter):
            self._charge_scalar(label, 1)
        return np.full(self.graph.m, np.min(values))

    def audit(self):
        """Raise LocalityError unless every recorded message crosses an edge."""
        for log in self.history:
            for msg in log.messages:
                if msg.sender != msg.receiver and not self.graph.has_edge(msg.sender, msg.receiver):
                    raise LocalityError(
                        f"{log.kind} round '{log.label}' sent {msg.sender} -> {msg.receiver} off the graph"
                    )
        return True

    def snapshot(self):
        return self.vector_rounds, self.scalar_rounds
