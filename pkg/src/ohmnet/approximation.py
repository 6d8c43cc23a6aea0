"""Finite cut and short approximations of infinite lattices.

``cut_network(S)`` keeps the vertices of ``S`` and the edges among them;
``short_network(S)`` additionally merges everything outside ``S`` into one
vertex, :data:`INFINITY`. Both share vertex numbering on ``S`` and list the
edges internal to ``S`` first and in the same order, so edge ``i`` of the cut
network is edge ``i`` of the short network for every ``i`` below the cut
network's edge count.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Final, TypeVar

import numpy as np

from ohmnet.lattices import (
    LatticeId,
    LatticeSpec,
    VertexSubset,
    average_valence,
    edge_boundary,
)
from ohmnet.network import Flow, Network, Potential, potential_flow
from ohmnet.schema import (
    Bracket,
    FosterReport,
    PreconditionError,
    ResistanceSeries,
    SolveConfig,
    TrendFit,
)
from ohmnet.solver import GroundedLaplacian, edge_resistances

logger = logging.getLogger(__name__)

INFINITY: Final = "infinity"
"""Lattice-side name of the shorted vertex of a short network."""

BRACKET_CSV_COLUMNS = ("radius", "vertices", "edges", "short_R", "cut_R", "gap")

# power-law exponent of the trailing increments: a convergent series sits
# near -2 or below, a logarithmic divergence near -1, a linear one near 0
PLATEAU_DECAY = -1.5
LOG_DECAY = -0.5

T = TypeVar("T")


@dataclass(frozen=True)
class CutResult:
    network: Network
    vertex_map: Mapping[LatticeId, int]
    subset: VertexSubset

    @property
    def internal_edge_count(self) -> int:
        return self.network.edge_count

    def vertex(self, v: LatticeId) -> int:
        try:
            return self.vertex_map[v]
        except KeyError:
            raise PreconditionError(f"{v!r} is not in the materialized subset")

    def lattice_id(self, index: int) -> LatticeId:
        if index == len(self.subset):
            return INFINITY
        return self.subset[index]


@dataclass(frozen=True)
class ShortResult(CutResult):
    infinity_vertex: int
    boundary_edge_count: int

    @property
    def internal_edge_count(self) -> int:
        return self.network.edge_count - self.boundary_edge_count


def _require_nonempty(S: Sequence[LatticeId]) -> VertexSubset:
    subset = S if isinstance(S, VertexSubset) else VertexSubset(S)
    if not len(subset):
        raise ValueError("`S` must be nonempty")
    return subset


def _internal_edges(
    lattice: LatticeSpec, subset: VertexSubset
) -> list[tuple[int, int, float]]:
    edges = []
    for i, v in enumerate(subset):
        for w, c in lattice.neighbors(v):
            if w in subset:
                j = subset.index(w)
                if j > i:
                    edges.append((i, j, c))
    return edges


def cut_network(lattice: LatticeSpec, S: Sequence[LatticeId]) -> CutResult:
    """Keep ``S`` and the lattice edges internal to it."""
    subset = _require_nonempty(S)
    network = Network(len(subset), _internal_edges(lattice, subset))
    vertex_map = {v: i for i, v in enumerate(subset)}
    logger.debug(
        "Cut %s to %d vertices and %d edges",
        lattice.name,
        network.vertex_count,
        network.edge_count,
    )
    return CutResult(network=network, vertex_map=vertex_map, subset=subset)


def short_network(
    lattice: LatticeSpec, S: Sequence[LatticeId], fringe_radius: int = 1
) -> ShortResult:
    """Keep ``S`` and merge every vertex outside it into one vertex.

    Each edge leaving ``S`` becomes its own parallel edge to the merged
    vertex; edges with both ends outside ``S`` would be self-loops and are
    dropped. Edges leaving ``S`` are found from the inside, so every
    ``fringe_radius >= 1`` yields the same network for a nearest-neighbor
    rule.
    """
    if fringe_radius < 1:
        raise ValueError("`fringe_radius` must be at least 1")
    subset = _require_nonempty(S)
    internal = _internal_edges(lattice, subset)
    infinity = len(subset)
    leaving = [(subset.index(v), infinity, c) for v, _, c in edge_boundary(lattice, subset)]
    network = Network(len(subset) + 1, internal + leaving)
    vertex_map = {v: i for i, v in enumerate(subset)}
    vertex_map[INFINITY] = infinity
    logger.debug(
        "Shorted %s outside %d vertices: %d internal and %d boundary edges",
        lattice.name,
        len(subset),
        len(internal),
        len(leaving),
    )
    return ShortResult(
        network=network,
        vertex_map=vertex_map,
        subset=subset,
        infinity_vertex=infinity,
        boundary_edge_count=len(leaving),
    )


def component_solve(
    network: Network, b: np.ndarray, cfg: SolveConfig
) -> tuple[Potential, Flow]:
    """Kirchhoff solve on the component carrying the support of ``b``.

    Vertices and edges of other components get zero potential and current.
    The highest-numbered vertex of the component is grounded, which is the
    shorted vertex whenever there is one.

    Raises:
        PreconditionError: If the support of ``b`` spans several components,
            or ``b`` does not balance.
    """
    if abs(math.fsum(b)) > 1e-12:
        raise PreconditionError(f"sources are not balanced (total {math.fsum(b):.3e} A)")
    support = np.flatnonzero(b)
    if support.size == 0:
        return Potential(np.zeros(network.vertex_count)), Flow.zeros(network)

    labels = network.component_labels()
    touched = np.unique(labels[support])
    if touched.size > 1:
        split = tuple(
            tuple(int(v) for v in support if labels[v] == label) for label in touched
        )
        raise PreconditionError(
            f"sources are split across {touched.size} components: {split}",
            component=split[-1],
        )
    members = np.flatnonzero(labels == touched[0])
    if members.size == network.vertex_count:
        potential, _, _ = GroundedLaplacian(network, network.vertex_count - 1).solve(b, cfg)
        return potential, potential_flow(network, potential)

    sub, vertices, edges = network.induced(members)
    local, _, _ = GroundedLaplacian(sub, sub.vertex_count - 1).solve(b[vertices], cfg)
    values = np.zeros(network.vertex_count)
    values[vertices] = local.values
    currents = np.zeros(network.edge_count)
    currents[edges] = potential_flow(sub, local).values
    return Potential(values), Flow(currents)


def _pair_resistance(
    materialized: CutResult, p: LatticeId, q: LatticeId, cfg: SolveConfig
) -> float:
    network = materialized.network
    i, j = materialized.vertex(p), materialized.vertex(q)
    labels = network.component_labels()
    if labels[i] != labels[j]:
        return math.inf
    b = np.zeros(network.vertex_count)
    b[i], b[j] = 1.0, -1.0
    potential, _ = component_solve(network, b, cfg)
    return potential[i] - potential[j]


def _check_pair(S: VertexSubset, p: LatticeId, q: LatticeId) -> None:
    if p == q:
        raise ValueError("`p` and `q` must be distinct")
    for name, v in (("p", p), ("q", q)):
        if v not in S:
            raise PreconditionError(f"`{name}` = {v!r} lies outside the finite subset")


def resistance_bracket(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    S: Sequence[LatticeId],
    cfg: SolveConfig | None = None,
    radius: int = 0,
) -> Bracket:
    """Resistances between ``p`` and ``q`` in ``short_network(S)`` and
    ``cut_network(S)``; a cut that separates them reports ``math.inf``."""
    cfg = cfg or SolveConfig()
    subset = _require_nonempty(S)
    _check_pair(subset, p, q)
    cut = cut_network(lattice, subset)
    short = short_network(lattice, subset)
    cut_resistance = _pair_resistance(cut, p, q, cfg)
    if math.isinf(cut_resistance):
        logger.warning(
            "Cutting %s to %d vertices separates %r from %r",
            lattice.name,
            len(subset),
            p,
            q,
        )
    return Bracket(
        radius=radius,
        vertices=len(subset),
        edges=cut.network.edge_count,
        short_resistance=_pair_resistance(short, p, q, cfg),
        cut_resistance=cut_resistance,
        disconnected=math.isinf(cut_resistance),
    )


@dataclass(frozen=True)
class SwellingSequence:
    """Nested balls of increasing radius around a fixed centre."""

    lattice: LatticeSpec
    center: LatticeId
    radii: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.radii:
            raise ValueError("`radii` must be nonempty")
        if any(r < 0 for r in self.radii):
            raise ValueError("`radii` must be non-negative")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("`radii` must be strictly increasing")
        self.lattice.check_vertex(self.center)

    @classmethod
    def around(
        cls,
        lattice: LatticeSpec,
        p: LatticeId,
        q: LatticeId | None = None,
        radii: Iterable[int] = range(1, 11),
        center: LatticeId | None = None,
    ) -> SwellingSequence:
        """Balls centred at ``center``, by default the lattice midpoint of ``p`` and ``q``."""
        if center is None:
            center = p if q is None else lattice.midpoint(p, q)
        return cls(lattice=lattice, center=center, radii=tuple(radii))

    def term(self, radius: int) -> VertexSubset:
        return self.lattice.ball(self.center, radius)

    def terms(self) -> Iterator[tuple[int, VertexSubset]]:
        for radius in self.radii:
            yield radius, self.term(radius)

    def first_containing(self, vertices: Iterable[LatticeId]) -> int | None:
        """Smallest radius whose term contains every vertex of ``vertices``."""
        vertices = list(vertices)
        for radius, subset in self.terms():
            if all(v in subset for v in vertices):
                return radius
        return None


def _evaluate(
    fn: Callable[[int], T], radii: Sequence[int], workers: int | None
) -> list[T]:
    if workers is None or workers <= 1 or len(radii) <= 1:
        return [fn(r) for r in radii]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, radii))


def _series(
    kind: str,
    seq: SwellingSequence,
    value: Callable[[VertexSubset], float],
    tolerance: float | None,
    workers: int | None,
) -> ResistanceSeries:
    if tolerance is None:
        values = _evaluate(lambda r: value(seq.term(r)), seq.radii, workers)
        return ResistanceSeries(kind=kind, rows=tuple(zip(seq.radii, values)))

    rows: list[tuple[int, float]] = []
    for radius, subset in seq.terms():
        rows.append((radius, value(subset)))
        if len(rows) > 1 and abs(rows[-1][1] - rows[-2][1]) < tolerance:
            logger.debug("Stopping %s series at radius %d", kind, radius)
            break
    return ResistanceSeries(kind=kind, rows=tuple(rows))


def even_resistance_estimate(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
    tolerance: float | None = None,
    workers: int | None = None,
) -> ResistanceSeries:
    """Cut-network resistances along ``seq``; nonincreasing in the radius.

    Args:
        tolerance: Stop once consecutive values differ by less than this.
            ``None`` runs the whole sequence.
        workers: Thread count for evaluating radii concurrently.
    """
    cfg = cfg or SolveConfig()

    def value(subset: VertexSubset) -> float:
        _check_pair(subset, p, q)
        return _pair_resistance(cut_network(lattice, subset), p, q, cfg)

    return _series("even", seq, value, tolerance, workers)


def odd_resistance_estimate(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
    tolerance: float | None = None,
    workers: int | None = None,
) -> ResistanceSeries:
    """Short-network resistances along ``seq``; nondecreasing in the radius."""
    cfg = cfg or SolveConfig()

    def value(subset: VertexSubset) -> float:
        _check_pair(subset, p, q)
        return _pair_resistance(short_network(lattice, subset), p, q, cfg)

    return _series("odd", seq, value, tolerance, workers)


def bracket_series(
    lattice: LatticeSpec,
    p: LatticeId,
    q: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
    workers: int | None = None,
) -> list[Bracket]:
    cfg = cfg or SolveConfig()
    return _evaluate(
        lambda r: resistance_bracket(lattice, p, q, seq.term(r), cfg, radius=r),
        seq.radii,
        workers,
    )


def resistance_to_infinity(
    lattice: LatticeSpec,
    p: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
    workers: int | None = None,
) -> ResistanceSeries:
    """Resistance from ``p`` to the shorted vertex along ``seq``."""
    cfg = cfg or SolveConfig()
    first = seq.term(seq.radii[0])
    if p not in first:
        raise PreconditionError(f"`p` = {p!r} is not in the first term of the sequence")

    def value(subset: VertexSubset) -> float:
        return _pair_resistance(short_network(lattice, subset), p, INFINITY, cfg)

    return _series("infinity", seq, value, None, workers)


def _r_squared(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    residual = float(np.sum((y - fitted) ** 2))
    return float(slope), float(intercept), 1.0 - residual / total if total > 0 else 1.0


def _increment_decay(radii: np.ndarray, increments: np.ndarray) -> float:
    """Power-law exponent of the trailing increments against the radius.

    Increments of a logarithmically diverging series fall off like ``1/r``
    (exponent -1); a convergent lattice series falls off at least like
    ``1/r**2``. Fewer than two positive trailing increments count as flat.
    """
    tail = max(2, len(increments) // 2)
    r, inc = radii[-tail:], increments[-tail:]
    positive = inc > 0
    if positive.sum() < 2:
        return -math.inf
    slope, _ = np.polyfit(np.log(r[positive]), np.log(inc[positive]), 1)
    return float(slope)


def fit_trend(
    series: ResistanceSeries,
    plateau_tolerance: float = 1e-3,
    min_r_squared: float = 0.99,
) -> TrendFit:
    """Describe how a resistance series grows with the radius.

    ``plateau`` when the last change per unit radius is below
    ``plateau_tolerance`` and the increments decay faster than
    :data:`PLATEAU_DECAY`. Otherwise a logarithmic fit when the increments
    fall off like ``1/r`` (or the log fit is the only good one), else a
    linear fit; the fit must rise and explain at least ``min_r_squared`` of
    the variance, or the trend is ``indeterminate``.
    """
    rows = [(r, v) for r, v in series.rows if r > 0 and math.isfinite(v)]
    if len(rows) < 3:
        return TrendFit(label="indeterminate")
    radii = np.asarray([r for r, _ in rows], dtype=np.float64)
    values = np.asarray([v for _, v in rows])
    increments = np.diff(values) / np.diff(radii)
    increment = float(increments[-1])
    decay = _increment_decay(radii[1:], increments)
    if abs(increment) < plateau_tolerance and decay <= PLATEAU_DECAY:
        return TrendFit(
            label="plateau", intercept=float(values[-1]), last_increment=increment
        )

    linear = _r_squared(radii, values)
    logarithmic = _r_squared(np.log(radii), values)
    if decay > LOG_DECAY and linear[2] >= min(logarithmic[2], min_r_squared):
        label, (slope, intercept, r2) = "diverging-linear", linear
    else:
        label, (slope, intercept, r2) = "diverging-log", logarithmic
    if slope <= 0 or r2 < min_r_squared:
        logger.warning("Resistance trend is indeterminate (best r^2 %.4f)", r2)
        label = "indeterminate"
    return TrendFit(
        label=label,
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        last_increment=increment,
    )


def lattice_foster_report(
    lattice: LatticeSpec,
    radius: int,
    center: LatticeId | None = None,
    cfg: SolveConfig | None = None,
    solve: bool = False,
) -> FosterReport:
    """Foster averages over the cut and short networks of one ball.

    The cut-network average sits above ``2 / average_valence`` and the
    short-network average below it; both approach it along a pinching
    sequence. With ``solve=True`` the averages are also computed edge by
    edge with the solver.
    """
    center = lattice.origin() if center is None else center
    subset = lattice.ball(center, radius)
    cut = cut_network(lattice, subset)
    short = short_network(lattice, subset)
    n = len(subset)
    report = dict(
        radius=radius,
        vertices=n,
        cut_edges=cut.network.edge_count,
        short_edges=short.network.edge_count,
        cut_average=(n - 1) / cut.network.edge_count if cut.network.edge_count else math.nan,
        short_average=n / short.network.edge_count,
        limit=float(2 / average_valence(lattice)),
    )
    if solve:
        report["cut_solved"] = float(np.mean(edge_resistances(cut.network, cfg)))
        report["short_solved"] = float(np.mean(edge_resistances(short.network, cfg)))
    return FosterReport(**report)


def write_bracket_csv(brackets: Iterable[Bracket], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(BRACKET_CSV_COLUMNS)
    writer.writerows(
        (b.radius, b.vertices, b.edges, b.short_resistance, b.cut_resistance, b.gap)
        for b in brackets
    )
