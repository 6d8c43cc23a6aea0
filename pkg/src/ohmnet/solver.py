"""Kirchhoff solves on finite networks.

Potentials are found by pinning one vertex to 0 V and running preconditioned
conjugate gradient on the remaining rows of the weighted Laplacian. A dense
elimination path and an exhaustive spanning-tree enumerator are kept alongside
as independent oracles.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import LinearOperator, cg

from ohmnet.network import (
    Flow,
    Network,
    Potential,
    SourceDistribution,
    is_balanced,
    potential_flow,
)
from ohmnet.schema import CapacityError, ConvergenceError, PreconditionError, SolveConfig

logger = logging.getLogger(__name__)

MAX_TREE_VERTICES = 12
MAX_DENSE_VERTICES = 2000


class ResistanceReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p: int
    q: int
    resistance: float
    """``potential(p) - potential(q)`` for the unit current from p to q."""
    flow: Flow
    potential: Potential
    iterations: int
    residual: float


def require_connected(network: Network) -> None:
    """Raise :class:`PreconditionError` naming a stranded component."""
    labels = network.component_labels()
    if labels.size and not np.all(labels == labels[0]):
        stranded = int(next(label for label in labels if label != labels[0]))
        component = tuple(int(v) for v in np.flatnonzero(labels == stranded))
        shown = ", ".join(map(str, component[:10])) + (", ..." if len(component) > 10 else "")
        raise PreconditionError(
            f"network is disconnected; component {{{shown}}} is stranded from vertex 0",
            component=component,
        )


class GroundedLaplacian:
    """The Laplacian of a connected network with one vertex pinned to 0 V.

    Assembled once and reused for any number of balanced right-hand sides.
    """

    def __init__(self, network: Network, ground: int) -> None:
        self.network = network
        self.ground = network.check_vertex(ground)
        n = network.vertex_count
        self.free = np.delete(np.arange(n), self.ground)
        laplacian = network.laplacian()
        self.matrix = laplacian[self.free][:, self.free].tocsr()
        self.diagonal = self.matrix.diagonal()

    def _preconditioner(self, cfg: SolveConfig) -> LinearOperator | None:
        if cfg.preconditioner == "none":
            return None
        inverse = 1.0 / self.diagonal
        size = inverse.size
        return LinearOperator((size, size), matvec=lambda x: inverse * x, dtype=np.float64)

    def solve(self, b: np.ndarray, cfg: SolveConfig) -> tuple[Potential, int, float]:
        """Solve for the potential with net outflow ``b``; returns
        ``(potential, iterations, relative residual)``."""
        n = self.network.vertex_count
        rhs = b[self.free]
        norm = float(np.linalg.norm(rhs))
        values = np.zeros(n)
        if rhs.size == 0 or norm == 0.0:
            return Potential(values), 0, 0.0

        iterations = 0

        def count(_: np.ndarray) -> None:
            nonlocal iterations
            iterations += 1

        budget = cfg.iteration_budget(n)
        x, info = cg(
            self.matrix,
            rhs,
            rtol=cfg.residual_tolerance,
            atol=0.0,
            maxiter=budget,
            M=self._preconditioner(cfg),
            callback=count,
        )
        residual = float(np.linalg.norm(rhs - self.matrix @ x)) / norm
        if info > 0:
            raise ConvergenceError(
                f"conjugate gradient did not converge in {budget} iterations "
                f"(relative residual {residual:.3e})",
                residual=residual,
                iterations=iterations,
            )
        if info < 0:
            raise RuntimeError(f"conjugate gradient failed with status {info}")
        logger.debug(
            "Solved %d-vertex system in %d iterations, residual %.3e",
            n,
            iterations,
            residual,
        )
        values[self.free] = x
        return Potential(values), iterations, residual


def _source_vector(network: Network, sources: SourceDistribution) -> np.ndarray:
    if not is_balanced(sources):
        raise PreconditionError(
            f"source distribution is not balanced (total {sources.total:.3e} A)"
        )
    return sources.vector(network.vertex_count)


def solve_potential(
    network: Network,
    sources: SourceDistribution,
    ground: int,
    cfg: SolveConfig | None = None,
) -> Potential:
    """Potential with ``u(ground) = 0`` whose flow has divergence ``sources``.

    Raises:
        PreconditionError: If the network is disconnected or the sources are
            not balanced.
        ConvergenceError: If the iteration budget is exhausted.
    """
    cfg = cfg or SolveConfig()
    network.check_vertex(ground)
    require_connected(network)
    b = _source_vector(network, sources)
    potential, _, _ = GroundedLaplacian(network, ground).solve(b, cfg)
    return potential


def effective_resistance(
    network: Network, p: int, q: int, cfg: SolveConfig | None = None
) -> ResistanceReport:
    """Unit-current solve from ``p`` to ``q`` with ``q`` grounded."""
    cfg = cfg or SolveConfig()
    p, q = network.check_vertex(p), network.check_vertex(q)
    if p == q:
        raise ValueError("`p` and `q` must be distinct")
    require_connected(network)
    b = _source_vector(network, SourceDistribution.unit(p, q))
    potential, iterations, residual = GroundedLaplacian(network, q).solve(b, cfg)
    return ResistanceReport(
        p=p,
        q=q,
        resistance=potential[p] - potential[q],
        flow=potential_flow(network, potential),
        potential=potential,
        iterations=iterations,
        residual=residual,
    )


def unit_current_flow(
    network: Network, p: int, q: int, cfg: SolveConfig | None = None
) -> Flow:
    return effective_resistance(network, p, q, cfg).flow


def edge_resistances(network: Network, cfg: SolveConfig | None = None) -> np.ndarray:
    """Effective resistance between the endpoints of every edge."""
    cfg = cfg or SolveConfig()
    require_connected(network)
    if network.edge_count == 0:
        return np.zeros(0)
    grounded = GroundedLaplacian(network, 0)
    cache: dict[tuple[int, int], float] = {}
    values = np.empty(network.edge_count)
    for record in network.edges():
        key = (record.tail, record.head)
        if key not in cache:
            b = np.zeros(network.vertex_count)
            b[record.tail], b[record.head] = 1.0, -1.0
            potential, _, _ = grounded.solve(b, cfg)
            cache[key] = potential[record.tail] - potential[record.head]
        values[record.id] = cache[key]
    return values


def foster_average(network: Network, cfg: SolveConfig | None = None) -> float:
    """Mean over edges of the effective resistance across each edge."""
    if network.edge_count == 0:
        raise ValueError("`network` has no edges to average over")
    return float(np.mean(edge_resistances(network, cfg)))


def dense_solve_potential(
    network: Network, sources: SourceDistribution, ground: int
) -> Potential:
    """Gaussian-elimination oracle for :func:`solve_potential`."""
    if network.vertex_count > MAX_DENSE_VERTICES:
        raise CapacityError(
            f"dense oracle is limited to {MAX_DENSE_VERTICES} vertices, "
            f"got {network.vertex_count}"
        )
    network.check_vertex(ground)
    require_connected(network)
    b = _source_vector(network, sources)
    free = np.delete(np.arange(network.vertex_count), ground)
    laplacian = network.laplacian().toarray()
    values = np.zeros(network.vertex_count)
    if free.size:
        values[free] = np.linalg.solve(laplacian[np.ix_(free, free)], b[free])
    return Potential(values)


def dense_effective_resistance(network: Network, p: int, q: int) -> float:
    potential = dense_solve_potential(network, SourceDistribution.unit(p, q), q)
    return potential[p] - potential[q]


class _TreeEnumerator:
    """Exhaustive spanning-tree enumeration by edge inclusion/exclusion.

    An edge is included when it joins two components of the partial forest
    and excluded only while the remaining edges can still span the graph.
    """

    def __init__(self, network: Network, weighted: bool) -> None:
        self.n = network.vertex_count
        self.tails = network.tails.tolist()
        self.heads = network.heads.tolist()
        self.weights = network.conductances.tolist() if weighted else [1.0] * network.edge_count
        self.total = 0.0
        self.per_edge = [0.0] * network.edge_count
        self.trees = 0

    def _can_span(self, labels: list[int], start: int) -> bool:
        parent = list(range(self.n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        pieces = len(set(labels))
        for e in range(start, len(self.tails)):
            a, b = find(labels[self.tails[e]]), find(labels[self.heads[e]])
            if a != b:
                parent[a] = b
                pieces -= 1
                if pieces == 1:
                    return True
        return pieces == 1

    def run(self) -> None:
        self._extend(0, list(range(self.n)), [], 1.0)

    def _extend(self, index: int, labels: list[int], chosen: list[int], weight: float) -> None:
        if len(chosen) == self.n - 1:
            self.trees += 1
            self.total += weight
            for e in chosen:
                self.per_edge[e] += weight
            return
        if len(self.tails) - index < self.n - 1 - len(chosen):
            return

        a, b = labels[self.tails[index]], labels[self.heads[index]]
        if a != b:
            merged = [a if label == b else label for label in labels]
            chosen.append(index)
            self._extend(index + 1, merged, chosen, weight * self.weights[index])
            chosen.pop()
        if self._can_span(labels, index + 1):
            self._extend(index + 1, labels, chosen, weight)


def spanning_tree_edge_probabilities(
    network: Network, weighted: bool = False
) -> np.ndarray:
    """Probability that a uniformly random spanning tree contains each edge.

    With ``weighted=True`` trees are weighted by the product of their edge
    conductances, and the probability of edge ``e`` becomes
    ``conductance(e) * resistance(e)``.

    Raises:
        CapacityError: If the network has more than ``MAX_TREE_VERTICES`` vertices.
        PreconditionError: If the network is disconnected.
    """
    if network.vertex_count > MAX_TREE_VERTICES:
        raise CapacityError(
            f"spanning-tree enumeration is limited to {MAX_TREE_VERTICES} vertices, "
            f"got {network.vertex_count}"
        )
    require_connected(network)
    if network.vertex_count <= 1:
        return np.zeros(network.edge_count)
    enumerator = _TreeEnumerator(network, weighted)
    enumerator.run()
    logger.debug("Enumerated %d spanning trees", enumerator.trees)
    return np.asarray(enumerator.per_edge) / enumerator.total


def spanning_tree_edge_probability(network: Network, edge: int) -> float:
    edge = network.check_edge(edge)
    return float(spanning_tree_edge_probabilities(network)[edge])
