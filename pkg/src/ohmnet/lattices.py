"""Implicit infinite lattices.

A lattice is described only by its neighbor rule; finite pieces of it are
materialized through :mod:`ohmnet.approximation`. Vertex ids are integer
tuples. Kinds with more than one site per unit cell (``hex``, ``subdiv``)
carry a sublattice tag as the last tuple entry; tree ids are paths of child
indices from the root; dumbbell ids are ``(side, *coords)``.
"""

from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from collections import Counter
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import ClassVar

import numpy as np

from ohmnet.network import Network
from ohmnet.schema import UnsupportedLatticeError

logger = logging.getLogger(__name__)

LatticeId = Hashable
Neighbors = tuple[tuple[LatticeId, float], ...]


class VertexSubset(Sequence):
    """A finite, insertion-ordered set of lattice vertices."""

    def __init__(self, members: Iterable[LatticeId] = ()) -> None:
        self._members = tuple(dict.fromkeys(members))
        self._index = {v: i for i, v in enumerate(self._members)}

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[LatticeId]:
        return iter(self._members)

    def __getitem__(self, i):
        return self._members[i]

    def __contains__(self, v: object) -> bool:
        return v in self._index

    def __eq__(self, other: object) -> bool:
        if isinstance(other, VertexSubset):
            return self._members == other._members
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._members)

    def __repr__(self) -> str:
        head = ", ".join(map(repr, self._members[:4]))
        more = ", ..." if len(self._members) > 4 else ""
        return f"VertexSubset([{head}{more}], size={len(self)})"

    def index(self, v: LatticeId, *args) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise ValueError(f"{v!r} is not in the subset")

    def issubset(self, other: Iterable[LatticeId]) -> bool:
        container = other if isinstance(other, VertexSubset) else set(other)
        return all(v in container for v in self._members)


@dataclass(frozen=True)
class VertexKind:
    label: str
    relative_frequency: Fraction
    valence: int


@dataclass(frozen=True)
class EdgeKind:
    label: str
    relative_frequency: Fraction


def _parse_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"cannot parse coordinates {text!r}")


class LatticeSpec(ABC):
    """An infinite, locally finite network given by its neighbor rule."""

    max_valence: ClassVar[int]
    edge_transitive: ClassVar[bool] = False
    smallish: ClassVar[bool] = True

    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def origin(self) -> LatticeId: ...

    @abstractmethod
    def is_vertex(self, v: object) -> bool: ...

    @abstractmethod
    def neighbors(self, v: LatticeId) -> Neighbors:
        """``(neighbor, conductance)`` pairs, one per edge at ``v``."""

    @abstractmethod
    def random_vertex(self, rng: np.random.Generator) -> LatticeId: ...

    @property
    def step_vectors(self) -> np.ndarray | None:
        """Displacements of a translation-invariant unit-conductance lattice."""
        return None

    def check_vertex(self, v: LatticeId) -> LatticeId:
        if not self.is_vertex(v):
            raise ValueError(f"{v!r} is not a vertex of {self.name}")
        return v

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        raise UnsupportedLatticeError(f"{self.name} has no tabulated vertex kinds")

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        raise UnsupportedLatticeError(f"{self.name} has no tabulated edge kinds")

    def vertex_kind(self, v: LatticeId) -> str:
        return self.vertex_kinds()[0].label

    def neighbor_of_origin(self) -> LatticeId:
        return self.neighbors(self.origin())[0][0]

    def midpoint(self, p: LatticeId, q: LatticeId) -> LatticeId:
        """Default centre of swelling balls for the pair ``p``, ``q``."""
        return p

    def ball(self, center: LatticeId, radius: int) -> VertexSubset:
        """Vertices within graph distance ``radius``, in breadth-first order."""
        if radius < 0:
            raise ValueError("`radius` must be non-negative")
        self.check_vertex(center)
        seen = {center}
        order = [center]
        frontier = [center]
        for _ in range(radius):
            following = []
            for v in frontier:
                for w, _ in self.neighbors(v):
                    if w not in seen:
                        seen.add(w)
                        order.append(w)
                        following.append(w)
            frontier = following
        return VertexSubset(order)

    def parse_vertex(self, text: str) -> LatticeId:
        text = text.strip()
        if text == "origin":
            return self.origin()
        if text == "neighbor":
            return self.neighbor_of_origin()
        return self.check_vertex(self._parse(text))

    def _parse(self, text: str) -> LatticeId:
        return _parse_ints(text)

    def format_vertex(self, v: LatticeId) -> str:
        return ",".join(map(str, v))

    def theoretical_edge_resistance(self) -> Fraction:
        if not (self.edge_transitive and self.smallish):
            raise UnsupportedLatticeError(
                f"{self.name} is not a smallish edge-transitive lattice; "
                "no closed-form edge resistance"
            )
        kinds = self.vertex_kinds()
        if len(kinds) == 1:
            return Fraction(2, kinds[0].valence)
        if len(kinds) == 2:
            v1, v2 = kinds[0].valence, kinds[1].valence
            return Fraction(v1 + v2, v1 * v2)
        raise UnsupportedLatticeError(f"{self.name} has more than two vertex kinds")


@dataclass(frozen=True)
class Grid(LatticeSpec):
    """The d-dimensional grid of 1 ohm resistors."""

    dimension: int
    edge_transitive: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("`dimension` must be at least 1")

    @property
    def name(self) -> str:
        return f"grid{self.dimension}"

    @property
    def max_valence(self) -> int:
        return 2 * self.dimension

    @property
    def step_vectors(self) -> np.ndarray:
        steps = np.zeros((2 * self.dimension, self.dimension), dtype=np.int8)
        for axis in range(self.dimension):
            steps[2 * axis, axis] = 1
            steps[2 * axis + 1, axis] = -1
        return steps

    def origin(self) -> tuple[int, ...]:
        return (0,) * self.dimension

    def is_vertex(self, v: object) -> bool:
        return (
            isinstance(v, tuple)
            and len(v) == self.dimension
            and all(isinstance(x, int) for x in v)
        )

    def neighbors(self, v: tuple[int, ...]) -> Neighbors:
        result = []
        for axis in range(self.dimension):
            for step in (1, -1):
                w = v[:axis] + (v[axis] + step,) + v[axis + 1 :]
                result.append((w, 1.0))
        return tuple(result)

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(x) for x in rng.integers(-1000, 1000, size=self.dimension))

    def midpoint(self, p: tuple[int, ...], q: tuple[int, ...]) -> tuple[int, ...]:
        return tuple((a + b) // 2 for a, b in zip(p, q))

    def ball(self, center: tuple[int, ...], radius: int) -> VertexSubset:
        """L-infinity ball, in lexicographic order."""
        if radius < 0:
            raise ValueError("`radius` must be non-negative")
        self.check_vertex(center)
        ranges = [range(c - radius, c + radius + 1) for c in center]
        return VertexSubset(itertools.product(*ranges))

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        return (VertexKind("site", Fraction(1), 2 * self.dimension),)

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("bond", Fraction(1)),)


_TRIANGULAR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


@dataclass(frozen=True)
class Triangular(LatticeSpec):
    """The triangular lattice in axial coordinates; valence 6."""

    max_valence: ClassVar[int] = 6
    edge_transitive: ClassVar[bool] = True

    @property
    def name(self) -> str:
        return "tri"

    @property
    def step_vectors(self) -> np.ndarray:
        return np.asarray(_TRIANGULAR_STEPS, dtype=np.int8)

    def origin(self) -> tuple[int, int]:
        return (0, 0)

    def is_vertex(self, v: object) -> bool:
        return isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, int) for x in v)

    def neighbors(self, v: tuple[int, int]) -> Neighbors:
        x, y = v
        return tuple(((x + dx, y + dy), 1.0) for dx, dy in _TRIANGULAR_STEPS)

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, int]:
        x, y = rng.integers(-1000, 1000, size=2)
        return (int(x), int(y))

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        return (VertexKind("site", Fraction(1), 6),)

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("bond", Fraction(1)),)


def _tagged_parse(text: str) -> tuple[int, ...]:
    coords, _, tag = text.partition(":")
    try:
        return (*_parse_ints(coords), int(tag) if tag else 0)
    except ValueError:
        raise ValueError(f"cannot parse vertex {text!r}")


def _is_tagged(v: object, tags: int) -> bool:
    return (
        isinstance(v, tuple)
        and len(v) == 3
        and all(isinstance(x, int) for x in v)
        and 0 <= v[2] < tags
    )


@dataclass(frozen=True)
class Hexagonal(LatticeSpec):
    """The honeycomb lattice; ``(x, y, 0)`` and ``(x, y, 1)`` are the two sublattices."""

    max_valence: ClassVar[int] = 3
    edge_transitive: ClassVar[bool] = True

    @property
    def name(self) -> str:
        return "hex"

    def origin(self) -> tuple[int, int, int]:
        return (0, 0, 0)

    def is_vertex(self, v: object) -> bool:
        return _is_tagged(v, 2)

    def neighbors(self, v: tuple[int, int, int]) -> Neighbors:
        x, y, s = v
        if s == 0:
            return (((x, y, 1), 1.0), ((x - 1, y, 1), 1.0), ((x, y - 1, 1), 1.0))
        return (((x, y, 0), 1.0), ((x + 1, y, 0), 1.0), ((x, y + 1, 0), 1.0))

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, int, int]:
        x, y = rng.integers(-1000, 1000, size=2)
        return (int(x), int(y), int(rng.integers(2)))

    def _parse(self, text: str) -> tuple[int, ...]:
        return _tagged_parse(text)

    def format_vertex(self, v: tuple[int, int, int]) -> str:
        return f"{v[0]},{v[1]}:{v[2]}"

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        return (VertexKind("site", Fraction(1), 3),)

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("bond", Fraction(1)),)


@dataclass(frozen=True)
class SubdividedGrid(LatticeSpec):
    """The square grid with every edge split in two by a midpoint vertex.

    Tag 0 is a corner, tag 1 the midpoint of the edge to ``(x+1, y)``, tag 2
    the midpoint of the edge to ``(x, y+1)``.
    """

    max_valence: ClassVar[int] = 4
    edge_transitive: ClassVar[bool] = True

    @property
    def name(self) -> str:
        return "subdiv"

    def origin(self) -> tuple[int, int, int]:
        return (0, 0, 0)

    def is_vertex(self, v: object) -> bool:
        return _is_tagged(v, 3)

    def neighbors(self, v: tuple[int, int, int]) -> Neighbors:
        x, y, s = v
        if s == 0:
            return (
                ((x, y, 1), 1.0),
                ((x - 1, y, 1), 1.0),
                ((x, y, 2), 1.0),
                ((x, y - 1, 2), 1.0),
            )
        if s == 1:
            return (((x, y, 0), 1.0), ((x + 1, y, 0), 1.0))
        return (((x, y, 0), 1.0), ((x, y + 1, 0), 1.0))

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, int, int]:
        x, y = rng.integers(-1000, 1000, size=2)
        return (int(x), int(y), int(rng.integers(3)))

    def _parse(self, text: str) -> tuple[int, ...]:
        return _tagged_parse(text)

    def format_vertex(self, v: tuple[int, int, int]) -> str:
        return f"{v[0]},{v[1]}:{v[2]}"

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        # frequencies are inversely proportional to valence
        return (
            VertexKind("corner", Fraction(1, 3), 4),
            VertexKind("midpoint", Fraction(2, 3), 2),
        )

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("half-bond", Fraction(1)),)

    def vertex_kind(self, v: tuple[int, int, int]) -> str:
        return "corner" if v[2] == 0 else "midpoint"


@dataclass(frozen=True)
class Tree(LatticeSpec):
    """The regular tree in which every vertex has ``branching`` neighbors."""

    branching: int = 3
    edge_transitive: ClassVar[bool] = True
    smallish: ClassVar[bool] = False

    def __post_init__(self) -> None:
        if self.branching < 2:
            raise ValueError("`branching` must be at least 2")

    @property
    def name(self) -> str:
        return f"tree{self.branching}"

    @property
    def max_valence(self) -> int:
        return self.branching

    def origin(self) -> tuple[int, ...]:
        return ()

    def is_vertex(self, v: object) -> bool:
        if not isinstance(v, tuple) or not all(isinstance(x, int) for x in v):
            return False
        if not v:
            return True
        return 0 <= v[0] < self.branching and all(0 <= x < self.branching - 1 for x in v[1:])

    def neighbors(self, v: tuple[int, ...]) -> Neighbors:
        children = self.branching if not v else self.branching - 1
        result = [((*v, i), 1.0) for i in range(children)]
        if v:
            result.insert(0, (v[:-1], 1.0))
        return tuple(result)

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, ...]:
        depth = int(rng.integers(0, 20))
        if depth == 0:
            return ()
        first = int(rng.integers(self.branching))
        rest = rng.integers(0, self.branching - 1, size=depth - 1)
        return (first, *(int(x) for x in rest))

    def format_vertex(self, v: tuple[int, ...]) -> str:
        return ",".join(map(str, v)) if v else "origin"

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        return (VertexKind("site", Fraction(1), self.branching),)

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("bond", Fraction(1)),)


@dataclass(frozen=True)
class Dumbbell(LatticeSpec):
    """Two copies of the d-grid joined by a single bridge edge between their origins."""

    dimension: int = 3
    bridge_conductance: float = 1.0

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("`dimension` must be at least 1")
        if not self.bridge_conductance > 0.0:
            raise ValueError("`bridge_conductance` must be positive")

    @property
    def name(self) -> str:
        return f"dumbbell{self.dimension}"

    @property
    def max_valence(self) -> int:
        return 2 * self.dimension + 1

    def origin(self) -> tuple[int, ...]:
        return (0,) * (self.dimension + 1)

    def neighbor_of_origin(self) -> tuple[int, ...]:
        return (1,) + (0,) * self.dimension

    def is_vertex(self, v: object) -> bool:
        return (
            isinstance(v, tuple)
            and len(v) == self.dimension + 1
            and all(isinstance(x, int) for x in v)
            and v[0] in (0, 1)
        )

    def neighbors(self, v: tuple[int, ...]) -> Neighbors:
        side, coords = v[0], v[1:]
        result = []
        for axis in range(self.dimension):
            for step in (1, -1):
                w = coords[:axis] + (coords[axis] + step,) + coords[axis + 1 :]
                result.append(((side, *w), 1.0))
        if not any(coords):
            result.append(((1 - side, *coords), self.bridge_conductance))
        return tuple(result)

    def random_vertex(self, rng: np.random.Generator) -> tuple[int, ...]:
        coords = rng.integers(-1000, 1000, size=self.dimension)
        return (int(rng.integers(2)), *(int(x) for x in coords))

    def ball(self, center: tuple[int, ...], radius: int) -> VertexSubset:
        """L-infinity ball on the centre's side; on the far side, the ball
        around the bridge end with whatever radius is left after crossing."""
        if radius < 0:
            raise ValueError("`radius` must be non-negative")
        self.check_vertex(center)
        side, coords = center[0], center[1:]
        members = [
            (side, *w)
            for w in itertools.product(*(range(c - radius, c + radius + 1) for c in coords))
        ]
        remaining = radius - max((abs(c) for c in coords), default=0) - 1
        if remaining >= 0:
            members.extend(
                (1 - side, *w)
                for w in itertools.product(
                    *(range(-remaining, remaining + 1) for _ in coords)
                )
            )
        return VertexSubset(members)

    def _parse(self, text: str) -> tuple[int, ...]:
        coords, _, tag = text.partition(":")
        return (int(tag) if tag else 0, *_parse_ints(coords))

    def format_vertex(self, v: tuple[int, ...]) -> str:
        return ",".join(map(str, v[1:])) + f":{v[0]}"

    def vertex_kinds(self) -> tuple[VertexKind, ...]:
        # the two bridge ends have zero relative frequency
        return (VertexKind("bulk", Fraction(1), 2 * self.dimension),)

    def edge_kinds(self) -> tuple[EdgeKind, ...]:
        return (EdgeKind("bond", Fraction(1)),)


@dataclass(frozen=True, eq=False)
class FiniteLattice(LatticeSpec):
    """A finite network seen through the lattice interface; ids are vertex ids."""

    network: Network
    _neighbors: tuple[Neighbors, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        table = tuple(
            tuple((w, float(self.network.conductances[e])) for e, w in self.network.incidence(v))
            for v in range(self.network.vertex_count)
        )
        object.__setattr__(self, "_neighbors", table)

    @property
    def name(self) -> str:
        return "finite"

    @property
    def max_valence(self) -> int:
        return max((len(entries) for entries in self._neighbors), default=0)

    def origin(self) -> int:
        return 0

    def is_vertex(self, v: object) -> bool:
        return isinstance(v, int) and 0 <= v < self.network.vertex_count

    def neighbors(self, v: int) -> Neighbors:
        return self._neighbors[self.check_vertex(v)]

    def random_vertex(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.network.vertex_count))

    def _parse(self, text: str) -> int:
        return int(text)

    def format_vertex(self, v: int) -> str:
        return str(v)


LATTICES: dict[str, Callable[[], LatticeSpec]] = {
    "grid1": lambda: Grid(1),
    "grid2": lambda: Grid(2),
    "grid3": lambda: Grid(3),
    "grid4": lambda: Grid(4),
    "tri": Triangular,
    "hex": Hexagonal,
    "subdiv": SubdividedGrid,
    "tree3": lambda: Tree(3),
    "dumbbell3": lambda: Dumbbell(3),
}


def lattice_from_name(name: str) -> LatticeSpec:
    try:
        return LATTICES[name]()
    except KeyError:
        raise ValueError(
            f"unknown lattice `{name}`; expected one of {', '.join(LATTICES)}"
        )


def ball(lattice: LatticeSpec, center: LatticeId, radius: int) -> VertexSubset:
    return lattice.ball(center, radius)


def edge_boundary(
    lattice: LatticeSpec, S: Iterable[LatticeId]
) -> list[tuple[LatticeId, LatticeId, float]]:
    """Edges ``(inside, outside, conductance)`` leaving ``S``."""
    subset = S if isinstance(S, VertexSubset) else VertexSubset(S)
    return [
        (v, w, c)
        for v in subset
        for w, c in lattice.neighbors(v)
        if w not in subset
    ]


def boundary(lattice: LatticeSpec, S: Iterable[LatticeId]) -> VertexSubset:
    """Vertices of ``S`` joined by an edge to a vertex outside ``S``."""
    return VertexSubset(v for v, _, _ in edge_boundary(lattice, S))


def pinching_ratio(lattice: LatticeSpec, S: Sequence[LatticeId]) -> float:
    if not len(S):
        raise ValueError("`S` must be nonempty")
    return len(edge_boundary(lattice, S)) / len(S)


def boundary_ratio(lattice: LatticeSpec, S: Sequence[LatticeId]) -> float:
    if not len(S):
        raise ValueError("`S` must be nonempty")
    return len(boundary(lattice, S)) / len(S)


def average_valence(lattice: LatticeSpec) -> Fraction:
    return sum(
        (kind.relative_frequency * kind.valence for kind in lattice.vertex_kinds()),
        Fraction(0),
    )


def theoretical_edge_resistance(lattice: LatticeSpec) -> Fraction:
    return lattice.theoretical_edge_resistance()


def vertex_kind_frequencies(lattice: LatticeSpec, S: Iterable[LatticeId]) -> dict[str, float]:
    """Empirical relative frequencies of the vertex kinds in ``S``."""
    counts = Counter(lattice.vertex_kind(v) for v in S)
    total = sum(counts.values())
    return {label: count / total for label, count in counts.items()}
