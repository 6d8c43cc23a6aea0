import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from ohmnet.approximation import SwellingSequence
from ohmnet.lattices import LATTICES, FiniteLattice, Grid, Hexagonal, Tree, lattice_from_name
from ohmnet.network import Network
from ohmnet.randomwalk import (
    cumulative_table,
    escape_from_series,
    escape_probability_via_resistance,
    return_frequency,
    step_bounds,
    transition_table,
    walk_step,
)
from ohmnet.schema import ResistanceSeries, WalkConfig


def assert_within_three_sigma(counts: Counter, draws: int, expected: dict) -> None:
    for w, p in expected.items():
        sigma = math.sqrt(p * (1 - p) / draws)
        assert abs(counts[w] / draws - p) <= 3 * sigma, w


@pytest.fixture(scope="module")
def star() -> FiniteLattice:
    # centre 0 with conductances 2, 1, 1
    return FiniteLattice(Network(4, [(0, 1, 2.0), (0, 2), (0, 3)]))


@pytest.mark.parametrize("name", sorted(LATTICES))
def test_transition_tables_are_exactly_normalized(name: str) -> None:
    lattice = lattice_from_name(name)
    for v in (lattice.origin(), lattice.neighbor_of_origin()):
        table = transition_table(lattice, v)
        assert sum(p for _, p in table) == 1
        assert cumulative_table(lattice, v)[-1] == Fraction(1)


def test_weighted_transition_table(star: FiniteLattice) -> None:
    table = dict(transition_table(star, 0))
    assert table == {1: Fraction(1, 2), 2: Fraction(1, 4), 3: Fraction(1, 4)}
    assert transition_table(star, 1) == ((0, Fraction(1)),)


def test_one_grid_step_is_fair() -> None:
    grid = Grid(1)
    rng = np.random.default_rng(42)
    draws = 100_000
    counts = Counter(walk_step(grid, (0,), rng) for _ in range(draws))
    assert set(counts) == {(1,), (-1,)}
    assert_within_three_sigma(counts, draws, {(1,): 0.5, (-1,): 0.5})


def test_two_grid_step_is_uniform() -> None:
    grid = Grid(2)
    rng = np.random.default_rng(43)
    draws = 40_000
    counts = Counter(walk_step(grid, (3, -2), rng) for _ in range(draws))
    expected = {(4, -2): 0.25, (2, -2): 0.25, (3, -1): 0.25, (3, -3): 0.25}
    assert set(counts) == set(expected)
    assert_within_three_sigma(counts, draws, expected)


def test_weighted_step(star: FiniteLattice) -> None:
    rng = np.random.default_rng(44)
    draws = 40_000
    counts = Counter(walk_step(star, 0, rng) for _ in range(draws))
    assert_within_three_sigma(counts, draws, {1: 0.5, 2: 0.25, 3: 0.25})


def test_step_bounds_are_shared_across_vertices(star: FiniteLattice) -> None:
    step_bounds.cache_clear()
    hexagonal = Hexagonal()
    rng = np.random.default_rng(9)
    v = hexagonal.origin()
    for _ in range(2000):
        v = walk_step(hexagonal, v, rng)

    info = step_bounds.cache_info()
    assert info.currsize == 1
    assert info.hits == 1999
    weighted = step_bounds(tuple(c for _, c in star.neighbors(0)))
    assert weighted == tuple(float(x) for x in cumulative_table(star, 0))
    assert weighted[-1] == 1.0


def test_logarithmic_growth_is_not_an_escape() -> None:
    # increments of about 1/(2 pi r) fall below 1e-3 past r = 160
    rows = tuple((r, 0.3 + math.log(r) / (2 * math.pi)) for r in range(150, 201, 10))
    estimate = escape_from_series(Grid(2), (0, 0), ResistanceSeries(kind="infinity", rows=rows))

    assert estimate.trend.last_increment < 1e-3
    assert estimate.status == "diverging"
    assert estimate.trend.label == "diverging-log"
    assert estimate.probability == 0.0


def test_walks_are_deterministic_given_the_seed() -> None:
    grid = Grid(2)
    cfg = WalkConfig(max_steps=2000, trials=1500, seed=7, block_size=500)
    first = return_frequency(grid, cfg)
    again = return_frequency(grid, cfg)
    threaded = return_frequency(grid, cfg, workers=3)

    assert first == again == threaded
    assert first.model_dump_json() == threaded.model_dump_json()
    other = return_frequency(grid, cfg.model_copy(update={"seed": 8}))
    assert other.returns != first.returns or other.mean_first_return_step != first.mean_first_return_step


def test_longer_walks_keep_every_return() -> None:
    grid = Grid(2)
    short = return_frequency(grid, WalkConfig(max_steps=500, trials=2000, seed=3))
    long = return_frequency(grid, WalkConfig(max_steps=1500, trials=2000, seed=3))
    assert short.returns <= long.returns


def test_two_step_returns_on_the_line() -> None:
    stats = return_frequency(Grid(1), WalkConfig(max_steps=2, trials=4000, seed=11))

    assert stats.mean_first_return_step == 2.0
    assert abs(stats.return_frequency - 0.5) <= 3 * math.sqrt(0.25 / 4000)
    assert stats.standard_error == pytest.approx(
        math.sqrt(stats.return_frequency * (1 - stats.return_frequency) / 4000)
    )


def test_one_grid_returns() -> None:
    stats = return_frequency(Grid(1), WalkConfig(max_steps=10_000, trials=2000, seed=7))
    assert stats.return_frequency >= 0.95
    assert stats.seed == 7


def test_walks_on_a_finite_network() -> None:
    edge = FiniteLattice(Network(2, [(0, 1)]))
    stats = return_frequency(edge, WalkConfig(max_steps=5, trials=50, seed=1, start=0))
    assert stats.returns == 50
    assert stats.mean_first_return_step == 2.0

    never = return_frequency(edge, WalkConfig(max_steps=1, trials=50, seed=1, start=1))
    assert never.returns == 0
    assert never.mean_first_return_step is None
    assert never.standard_error == 0.0


def test_tree_walk_matches_resistance_estimate() -> None:
    tree = Tree(3)
    seq = SwellingSequence.around(tree, tree.origin(), radii=range(1, 13))
    estimate = escape_probability_via_resistance(tree, tree.origin(), seq)
    assert estimate.status == "plateau"
    assert estimate.vertex_conductance == 3.0
    assert estimate.probability == pytest.approx(0.5, abs=0.01)

    stats = return_frequency(tree, WalkConfig(max_steps=200, trials=400, seed=5))
    assert abs((1 - stats.return_frequency) - estimate.probability) <= 3 * stats.standard_error + 0.03


def test_recurrent_grids_have_no_escape() -> None:
    line = Grid(1)
    estimate = escape_probability_via_resistance(
        line, (0,), SwellingSequence.around(line, (0,), radii=range(1, 11))
    )
    assert estimate.status == "diverging"
    assert estimate.probability == 0.0
    assert estimate.trend.label == "diverging-linear"

    plane = Grid(2)
    estimate = escape_probability_via_resistance(
        plane, (0, 0), SwellingSequence.around(plane, (0, 0), radii=range(4, 33, 2)), workers=2
    )
    assert estimate.status == "diverging"
    assert estimate.probability == 0.0


@pytest.mark.slow
def test_two_grid_has_no_escape_at_large_radii() -> None:
    plane = Grid(2)
    seq = SwellingSequence.around(plane, (0, 0), radii=[150, 170, 190, 200])
    estimate = escape_probability_via_resistance(plane, (0, 0), seq, workers=4)

    assert estimate.trend.label == "diverging-log"
    assert estimate.status == "diverging"
    assert estimate.probability == 0.0


@pytest.mark.slow
def test_two_grid_return_frequency_keeps_rising() -> None:
    grid = Grid(2)
    frequencies = [
        return_frequency(grid, WalkConfig(max_steps=steps, trials=2000, seed=7), workers=4).return_frequency
        for steps in (1_000, 10_000, 100_000)
    ]
    assert frequencies[0] < frequencies[1] < frequencies[2]


@pytest.mark.slow
def test_three_grid_walk_agrees_with_resistance() -> None:
    grid = Grid(3)
    stats = return_frequency(
        grid, WalkConfig(max_steps=100_000, trials=10_000, seed=7), workers=4
    )
    assert 0.25 <= stats.return_frequency <= 0.45

    seq = SwellingSequence.around(grid, grid.origin(), radii=range(1, 13))
    estimate = escape_probability_via_resistance(grid, grid.origin(), seq, workers=4)
    assert estimate.status == "plateau"
    assert estimate.probability == pytest.approx(0.67, abs=0.02)
    escape = 1 - stats.return_frequency
    assert abs(escape - estimate.probability) <= 3 * stats.standard_error + 0.02


if __name__ == "__main__":
    pytest.main()
