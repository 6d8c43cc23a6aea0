"""Even, odd and ghost flows on lattice approximations.

The even flow of a source distribution is its Kirchhoff flow in
``cut_network(S)``, the odd flow its Kirchhoff flow in ``short_network(S)``.
Their difference on the edges internal to ``S`` is the finite-radius ghost
flow estimate.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import IO

import numpy as np

from ohmnet.approximation import (
    INFINITY,
    CutResult,
    SwellingSequence,
    component_solve,
    cut_network,
    short_network,
)
from ohmnet.lattices import LatticeId, LatticeSpec
from ohmnet.network import (
    Flow,
    Network,
    Potential,
    SourceDistribution,
    dirichlet_energy,
    energy,
    is_balanced,
)
from ohmnet.schema import PreconditionError, SolveConfig

logger = logging.getLogger(__name__)

FLOW_CSV_COLUMNS = ("tail", "head", "conductance", "current")

Cycle = tuple[tuple[int, int], ...]
"""Closed edge loop as ``(edge id, vertex the step leaves)`` pairs."""


@dataclass(frozen=True)
class LatticeFlow:
    """A Kirchhoff flow on a materialized piece of a lattice."""

    materialized: CutResult
    flow: Flow
    potential: Potential

    @property
    def network(self) -> Network:
        return self.materialized.network

    @property
    def common(self) -> Flow:
        """The flow on the edges internal to ``S``."""
        return self.flow.restrict(self.materialized.internal_edge_count)

    def currents_at(self, v: LatticeId) -> list[tuple[LatticeId, float]]:
        """``(neighbor, current leaving v)`` for every edge at ``v``."""
        i = self.materialized.vertex(v)
        return [
            (self.materialized.lattice_id(w), self.flow.along(self.network, e, i))
            for e, w in self.network.incidence(i)
        ]

    def current(self, a: LatticeId, b: LatticeId) -> float:
        """Total current from ``a`` to ``b`` over the edges joining them."""
        return sum(c for w, c in self.currents_at(a) if w == b)

    def drop(self, a: LatticeId, b: LatticeId) -> float:
        return self.potential[self.materialized.vertex(a)] - self.potential[
            self.materialized.vertex(b)
        ]


@dataclass(frozen=True)
class FlowPair:
    radius: int
    even: LatticeFlow
    odd: LatticeFlow

    @property
    def common_edge_count(self) -> int:
        return self.even.network.edge_count


@dataclass(frozen=True)
class GhostEstimate:
    """Finite-radius estimate of the ghost flow (even minus odd on common edges)."""

    radius: int
    ghost: Flow
    ghost_energy: float
    even_R: float
    odd_R: float

    @property
    def gap(self) -> float:
        return self.even_R - self.odd_R


def _solve_sources(
    materialized: CutResult, sources: Mapping[Hashable, float], cfg: SolveConfig
) -> LatticeFlow:
    network = materialized.network
    b = np.zeros(network.vertex_count)
    for v, strength in sources.items():
        b[materialized.vertex(v)] += strength
    potential, flow = component_solve(network, b, cfg)
    return LatticeFlow(materialized=materialized, flow=flow, potential=potential)


def _check_support(sources: SourceDistribution, S: Sequence[LatticeId]) -> None:
    outside = [v for v in sources.support if v != INFINITY and v not in S]
    if outside:
        raise PreconditionError(f"sources at {outside!r} lie outside the finite subset")


def even_flow(
    lattice: LatticeSpec,
    sources: SourceDistribution,
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
) -> LatticeFlow:
    """Kirchhoff flow of balanced ``sources`` in ``cut_network(S)``.

    Raises:
        PreconditionError: If the sources are unbalanced, leave ``S``, or are
            split across components of the cut network.
    """
    cfg = cfg or SolveConfig()
    if not is_balanced(sources):
        raise PreconditionError(
            f"even flow needs balanced sources (total {sources.total:.3e} A)"
        )
    cut = cut_network(lattice, S)
    _check_support(sources, cut.subset)
    return _solve_sources(cut, sources, cfg)


def odd_flow(
    lattice: LatticeSpec,
    sources: SourceDistribution,
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
) -> LatticeFlow:
    """Kirchhoff flow of ``sources`` in ``short_network(S)``.

    Unbalanced sources are accepted: the shorted vertex absorbs the excess.
    """
    cfg = cfg or SolveConfig()
    short = short_network(lattice, S)
    _check_support(sources, short.subset)
    entries = dict(sources.items())
    if not is_balanced(sources):
        entries[INFINITY] = entries.get(INFINITY, 0.0) - sources.total
    return _solve_sources(short, entries, cfg)


def flow_pair(
    lattice: LatticeSpec,
    sources: SourceDistribution,
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
    radius: int = 0,
) -> FlowPair:
    return FlowPair(
        radius=radius,
        even=even_flow(lattice, sources, S, cfg),
        odd=odd_flow(lattice, sources, S, cfg),
    )


def ghost_flow_estimate(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
    radius: int = 0,
) -> GhostEstimate:
    """Even minus odd unit flow from ``p`` to ``q`` on the edges internal to ``S``.

    The energy is measured with the conductances of those common edges.
    """
    pair = flow_pair(lattice, SourceDistribution.unit(p, q), S, cfg, radius)
    ghost = pair.even.flow - pair.odd.common
    estimate = GhostEstimate(
        radius=radius,
        ghost=ghost,
        ghost_energy=energy(pair.even.network, ghost),
        even_R=pair.even.drop(p, q),
        odd_R=pair.odd.drop(p, q),
    )
    logger.debug(
        "Ghost estimate at radius %d: energy %.6g, gap %.6g",
        radius,
        estimate.ghost_energy,
        estimate.gap,
    )
    return estimate


def ghost_series(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
) -> list[GhostEstimate]:
    return [
        ghost_flow_estimate(lattice, p, q, subset, cfg, radius=radius)
        for radius, subset in seq.terms()
    ]


def ghost_objective(network: Network, u: Potential, p: int, q: int) -> float:
    """``dirichlet_energy(u) - (u(p) - u(q))``."""
    p, q = network.check_vertex(p), network.check_vertex(q)
    return dirichlet_energy(network, u) - (u[p] - u[q])


def cycle_flow(network: Network, cycle: Cycle) -> Flow:
    """Unit circulation around ``cycle``.

    Raises:
        ValueError: If the steps do not chain into a closed loop.
    """
    if not cycle:
        raise ValueError("`cycle` must contain at least one edge")
    values = np.zeros(network.edge_count)
    start = at = cycle[0][1]
    for e, leaving in cycle:
        if leaving != at:
            raise ValueError(f"`cycle` is broken at edge {e}: expected to leave vertex {at}")
        record = network.edge(e)
        at = record.other(leaving)
        values[e] += 1.0 if leaving == record.tail else -1.0
    if at != start:
        raise ValueError("`cycle` is an open chain, not a closed loop")
    return Flow(values)


def first_order_variation(network: Network, flow: Flow, cycle: Cycle) -> float:
    """Derivative of ``energy(flow + t * cycle)`` at ``t = 0``."""
    circulation = cycle_flow(network, cycle)
    return float(2.0 * np.sum(flow.values * circulation.values / network.conductances))


def cycle_perturbation_check(
    network: Network, flow: Flow, cycle: Cycle, epsilon: float
) -> float:
    """``energy(flow + epsilon * cycle) - energy(flow)``."""
    perturbed = flow + cycle_flow(network, cycle) * epsilon
    return energy(network, perturbed) - energy(network, flow)


def fundamental_cycles(network: Network) -> list[Cycle]:
    """Cycles closed by each non-tree edge of a breadth-first spanning forest."""
    parent_edge: dict[int, int | None] = {}
    depth: dict[int, int] = {}
    tree_edges: set[int] = set()
    for root in range(network.vertex_count):
        if root in parent_edge:
            continue
        parent_edge[root], depth[root] = None, 0
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for e, w in network.incidence(v):
                if w not in parent_edge:
                    parent_edge[w], depth[w] = e, depth[v] + 1
                    tree_edges.add(e)
                    queue.append(w)

    def up(v: int) -> tuple[int, int]:
        e = parent_edge[v]
        return e, network.edge(e).other(v)

    cycles = []
    for record in network.edges():
        if record.id in tree_edges:
            continue
        # walk tail -> head along the closing edge, then back to tail through the tree
        a, b = record.head, record.tail
        from_head: list[tuple[int, int]] = []
        into_tail: list[tuple[int, int]] = []
        while a != b:
            if depth[a] >= depth[b]:
                e, parent = up(a)
                from_head.append((e, a))
                a = parent
            else:
                e, parent = up(b)
                into_tail.append((e, parent))
                b = parent
        steps = [(record.id, record.tail), *from_head, *reversed(into_tail)]
        cycles.append(tuple(steps))
    return cycles


def outflow_profile(
    lattice: LatticeSpec,
    p: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
) -> list[tuple[int, list[tuple[LatticeId, float]]]]:
    """``(neighbor, current)`` on the edges at ``p`` in the odd unit flow from
    ``p`` to infinity, one row per radius of ``seq``."""
    source = SourceDistribution({p: 1.0})
    rows = []
    for radius, subset in seq.terms():
        lattice_flow = odd_flow(lattice, source, subset, cfg)
        rows.append((radius, lattice_flow.currents_at(p)))
    return rows


def marching_sink_currents(
    lattice: LatticeSpec,
    p: LatticeId,
    sinks: Iterable[LatticeId],
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
) -> list[tuple[LatticeId, list[tuple[LatticeId, float]]]]:
    """``(neighbor, current)`` on the edges at ``p`` in the even unit flow from ``p`` to each sink."""
    rows = []
    for q in sinks:
        lattice_flow = even_flow(lattice, SourceDistribution.unit(p, q), S, cfg)
        rows.append((q, lattice_flow.currents_at(p)))
    return rows


def write_flow_csv(lattice: LatticeSpec, lattice_flow: LatticeFlow, stream: IO[str]) -> None:
    """One row per edge: endpoint coordinates, conductance, current tail -> head."""
    materialized = lattice_flow.materialized

    def label(index: int) -> str:
        v = materialized.lattice_id(index)
        return INFINITY if v == INFINITY else lattice.format_vertex(v)

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FLOW_CSV_COLUMNS)
    writer.writerows(
        (
            label(record.tail),
            label(record.head),
            record.conductance,
            float(lattice_flow.flow[record.id]),
        )
        for record in lattice_flow.network.edges()
    )


__all__ = [
    "Cycle",
    "FlowPair",
    "GhostEstimate",
    "LatticeFlow",
    "cycle_flow",
    "cycle_perturbation_check",
    "even_flow",
    "first_order_variation",
    "flow_pair",
    "fundamental_cycles",
    "ghost_flow_estimate",
    "ghost_objective",
    "ghost_series",
    "marching_sink_currents",
    "odd_flow",
    "outflow_profile",
    "write_flow_csv",
]
