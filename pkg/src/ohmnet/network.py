"""Finite resistor networks, flows, potentials and source distributions."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from collections.abc import Hashable, Iterable, Iterator, Mapping
from dataclasses import dataclass
from typing import IO

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

BALANCE_TOLERANCE = 1e-12
_VERTEX_COUNT_HEADER = re.compile(r"^\s*#\s*(\d+)\s+vertices\b")


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class EdgeRecord:
    id: int
    tail: int
    """Lower-index endpoint; the reference orientation runs tail -> head."""
    head: int
    conductance: float

    @property
    def resistance(self) -> float:
        return 1.0 / self.conductance

    def other(self, v: int) -> int:
        if v == self.tail:
            return self.head
        if v == self.head:
            return self.tail
        raise ValueError(f"vertex {v} is not an endpoint of edge {self.id}")


class Network:
    """A finite multigraph whose edges carry positive conductances.

    Edges are stored with their lower-index endpoint first, so the reference
    orientation of every edge is fixed by the vertex numbering. Parallel
    edges are kept distinct; self-loops are rejected.
    """

    def __init__(
        self,
        vertex_count: int,
        edges: Iterable[tuple[int, int] | tuple[int, int, float]] = (),
    ) -> None:
        if vertex_count < 0:
            raise ValueError("`vertex_count` must be non-negative")

        tails: list[int] = []
        heads: list[int] = []
        conductances: list[float] = []
        for edge in edges:
            a, b = int(edge[0]), int(edge[1])
            c = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= a < vertex_count and 0 <= b < vertex_count):
                raise ValueError(f"edge ({a}, {b}) has an endpoint outside the network")
            if a == b:
                raise ValueError(f"self-loop at vertex {a} is not allowed")
            if not (c > 0.0 and math.isfinite(c)):
                raise ValueError(f"edge ({a}, {b}) must have a positive finite conductance")
            tails.append(min(a, b))
            heads.append(max(a, b))
            conductances.append(c)

        self.vertex_count = vertex_count
        self.tails = _frozen(np.asarray(tails, dtype=np.int64))
        self.heads = _frozen(np.asarray(heads, dtype=np.int64))
        self.conductances = _frozen(np.asarray(conductances, dtype=np.float64))

        incidence: list[list[tuple[int, int]]] = [[] for _ in range(vertex_count)]
        for e, (a, b) in enumerate(zip(tails, heads)):
            incidence[a].append((e, b))
            incidence[b].append((e, a))
        self._incidence = tuple(tuple(entries) for entries in incidence)

    @property
    def edge_count(self) -> int:
        return len(self.conductances)

    def __repr__(self) -> str:
        return f"Network(vertex_count={self.vertex_count}, edge_count={self.edge_count})"

    def check_vertex(self, v: int) -> int:
        if not 0 <= v < self.vertex_count:
            raise ValueError(f"vertex id {v} is not valid for {self!r}")
        return int(v)

    def check_edge(self, e: int) -> int:
        if not 0 <= e < self.edge_count:
            raise ValueError(f"edge id {e} is not valid for {self!r}")
        return int(e)

    def edge(self, e: int) -> EdgeRecord:
        e = self.check_edge(e)
        return EdgeRecord(
            id=e,
            tail=int(self.tails[e]),
            head=int(self.heads[e]),
            conductance=float(self.conductances[e]),
        )

    def edges(self) -> Iterator[EdgeRecord]:
        for e in range(self.edge_count):
            yield self.edge(e)

    def incidence(self, v: int) -> tuple[tuple[int, int], ...]:
        """``(edge id, other endpoint)`` pairs at ``v``."""
        return self._incidence[self.check_vertex(v)]

    def degree(self, v: int) -> int:
        return len(self.incidence(v))

    def vertex_conductance(self, v: int) -> float:
        return float(sum(self.conductances[e] for e, _ in self.incidence(v)))

    def edge_multiset(self) -> Counter[tuple[int, int, float]]:
        return Counter(
            (int(a), int(b), float(c))
            for a, b, c in zip(self.tails, self.heads, self.conductances)
        )

    def incidence_is_consistent(self) -> bool:
        rebuilt = Network(
            self.vertex_count, zip(self.tails, self.heads, self.conductances)
        )
        return rebuilt._incidence == self._incidence

    def incidence_matrix(self) -> sparse.csr_matrix:
        """Signed edge-by-vertex matrix, +1 at the tail and -1 at the head."""
        m = self.edge_count
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.tails, self.heads])
        data = np.concatenate([np.ones(m), -np.ones(m)])
        return sparse.csr_matrix((data, (rows, cols)), shape=(m, self.vertex_count))

    def laplacian(self) -> sparse.csr_matrix:
        t, h, c = self.tails, self.heads, self.conductances
        rows = np.concatenate([t, h, t, h])
        cols = np.concatenate([t, h, h, t])
        data = np.concatenate([c, c, -c, -c])
        n = self.vertex_count
        return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    def component_labels(self) -> np.ndarray:
        n = self.vertex_count
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        adjacency = sparse.coo_matrix(
            (np.ones(self.edge_count), (self.tails, self.heads)), shape=(n, n)
        )
        _, labels = csgraph.connected_components(adjacency, directed=False)
        return labels

    def is_connected(self) -> bool:
        labels = self.component_labels()
        return labels.size == 0 or bool(np.all(labels == labels[0]))

    def induced(self, vertices: Iterable[int]) -> tuple[Network, np.ndarray, np.ndarray]:
        """Sub-network on ``vertices`` with every edge between them.

        Returns the sub-network together with the original ids of its
        vertices and of its edges, both in sub-network order.
        """
        kept = np.asarray(sorted({self.check_vertex(v) for v in vertices}), dtype=np.int64)
        position = np.full(self.vertex_count, -1, dtype=np.int64)
        position[kept] = np.arange(kept.size)
        mask = (position[self.tails] >= 0) & (position[self.heads] >= 0)
        edge_ids = np.flatnonzero(mask)
        network = Network(
            kept.size,
            zip(
                position[self.tails[edge_ids]],
                position[self.heads[edge_ids]],
                self.conductances[edge_ids],
            ),
        )
        return network, kept, edge_ids


class Flow:
    """Signed per-edge currents relative to each edge's reference orientation."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[float] | np.ndarray) -> None:
        self.values = _frozen(np.array(values, dtype=np.float64))

    @classmethod
    def zeros(cls, network: Network) -> Flow:
        return cls(np.zeros(network.edge_count))

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, e: int) -> float:
        return float(self.values[e])

    def __add__(self, other: Flow) -> Flow:
        return Flow(self.values + other.values)

    def __sub__(self, other: Flow) -> Flow:
        return Flow(self.values - other.values)

    def __neg__(self) -> Flow:
        return Flow(-self.values)

    def __mul__(self, scale: float) -> Flow:
        return Flow(self.values * scale)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Flow({self.values.tolist()!r})"

    def restrict(self, edge_count: int) -> Flow:
        """The flow on the first ``edge_count`` edges."""
        return Flow(self.values[:edge_count])

    def along(self, network: Network, e: int, start: int) -> float:
        """Current through edge ``e`` measured leaving ``start``."""
        record = network.edge(e)
        if start == record.tail:
            return float(self.values[e])
        if start == record.head:
            return -float(self.values[e])
        raise ValueError(f"vertex {start} is not an endpoint of edge {e}")


class Potential:
    """Per-vertex voltages."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[float] | np.ndarray) -> None:
        self.values = _frozen(np.array(values, dtype=np.float64))

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, v: int) -> float:
        return float(self.values[v])

    def __add__(self, other: Potential | float) -> Potential:
        if isinstance(other, Potential):
            return Potential(self.values + other.values)
        return Potential(self.values + float(other))

    def __sub__(self, other: Potential | float) -> Potential:
        if isinstance(other, Potential):
            return Potential(self.values - other.values)
        return Potential(self.values - float(other))

    def __repr__(self) -> str:
        return f"Potential({self.values.tolist()!r})"


class SourceDistribution(Mapping):
    """Finitely supported source strengths, in amperes, keyed by vertex."""

    def __init__(self, entries: Mapping[Hashable, float] | Iterable[tuple[Hashable, float]] = ()) -> None:
        items = entries.items() if isinstance(entries, Mapping) else entries
        merged: dict[Hashable, float] = {}
        for key, strength in items:
            strength = float(strength)
            if not math.isfinite(strength):
                raise ValueError(f"source strength at {key!r} must be finite")
            merged[key] = merged.get(key, 0.0) + strength
        self._entries = merged

    @classmethod
    def unit(cls, p: Hashable, q: Hashable) -> SourceDistribution:
        """+1 A at ``p`` and -1 A at ``q``."""
        if p == q:
            raise ValueError("`p` and `q` must be distinct")
        return cls({p: 1.0, q: -1.0})

    def __getitem__(self, key: Hashable) -> float:
        return self._entries[key]

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"SourceDistribution({self._entries!r})"

    @property
    def total(self) -> float:
        return math.fsum(self._entries.values())

    @property
    def support(self) -> tuple[Hashable, ...]:
        return tuple(key for key, strength in self._entries.items() if strength != 0.0)

    def vector(self, vertex_count: int) -> np.ndarray:
        """Dense strength vector; keys must be vertex ids of the network."""
        b = np.zeros(vertex_count)
        for v, strength in self._entries.items():
            if not 0 <= v < vertex_count:
                raise ValueError(f"source vertex {v!r} is not a valid vertex id")
            b[v] += strength
        return b


def _check_flow(network: Network, flow: Flow) -> None:
    if len(flow) != network.edge_count:
        raise ValueError(
            f"flow has {len(flow)} edge values but the network has {network.edge_count} edges"
        )


def _check_potential(network: Network, u: Potential) -> None:
    if len(u) != network.vertex_count:
        raise ValueError(
            f"potential has {len(u)} values but the network has {network.vertex_count} vertices"
        )


def divergences(network: Network, flow: Flow) -> np.ndarray:
    """Net outflow at every vertex."""
    _check_flow(network, flow)
    n = network.vertex_count
    out = np.bincount(network.tails, weights=flow.values, minlength=n)
    into = np.bincount(network.heads, weights=flow.values, minlength=n)
    return out - into


def divergence(network: Network, flow: Flow, v: int) -> float:
    v = network.check_vertex(v)
    return float(divergences(network, flow)[v])


def energy(network: Network, flow: Flow) -> float:
    _check_flow(network, flow)
    return float(np.sum(flow.values**2 / network.conductances))


def potential_flow(network: Network, u: Potential) -> Flow:
    """Ohm's-law flow of ``u``: ``c(e) * (u(tail) - u(head))`` per edge."""
    _check_potential(network, u)
    drops = u.values[network.tails] - u.values[network.heads]
    return Flow(network.conductances * drops)


def dirichlet_energy(network: Network, u: Potential) -> float:
    _check_potential(network, u)
    drops = u.values[network.tails] - u.values[network.heads]
    return float(np.sum(network.conductances * drops**2))


def is_balanced(s: SourceDistribution) -> bool:
    return abs(s.total) <= BALANCE_TOLERANCE


def read_edge_list(stream: IO[str] | Iterable[str]) -> Network:
    """Parse ``u v [conductance]`` lines; ``#`` starts a comment.

    A ``# <n> vertices`` comment, as written by :func:`write_edge_list`,
    declares the vertex count so that trailing isolated vertices survive.
    """
    edges: list[tuple[int, int, float]] = []
    vertex_count = 0
    for lineno, line in enumerate(stream, start=1):
        header = _VERTEX_COUNT_HEADER.match(line)
        if header:
            vertex_count = max(vertex_count, int(header.group(1)))
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (2, 3):
            raise ValueError(f"line {lineno}: expected `u v [conductance]`, got {line!r}")
        try:
            a, b = int(fields[0]), int(fields[1])
            c = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
        if a < 0 or b < 0:
            raise ValueError(f"line {lineno}: vertex ids must be non-negative")
        edges.append((a, b, c))
        vertex_count = max(vertex_count, a + 1, b + 1)
    logger.debug("Read edge list with %d vertices and %d edges", vertex_count, len(edges))
    return Network(vertex_count, edges)


def write_edge_list(network: Network, stream: IO[str]) -> None:
    stream.write(f"# {network.vertex_count} vertices, {network.edge_count} edges\n")
    for record in network.edges():
        stream.write(f"{record.tail} {record.head} {record.conductance!r}\n")
