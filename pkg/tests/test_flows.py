import csv
import io

import numpy as np
import pytest

from ohmnet.approximation import INFINITY, SwellingSequence
from ohmnet.flows import (
    FLOW_CSV_COLUMNS,
    cycle_flow,
    cycle_perturbation_check,
    even_flow,
    first_order_variation,
    flow_pair,
    fundamental_cycles,
    ghost_flow_estimate,
    ghost_objective,
    ghost_series,
    marching_sink_currents,
    odd_flow,
    outflow_profile,
    write_flow_csv,
)
from ohmnet.lattices import Dumbbell, FiniteLattice, Grid
from ohmnet.network import (
    Flow,
    Network,
    Potential,
    SourceDistribution,
    divergences,
    energy,
)
from ohmnet.schema import PreconditionError, SolveConfig

TIGHT = SolveConfig(residual_tolerance=1e-12)


@pytest.fixture(scope="module")
def single_edge() -> FiniteLattice:
    return FiniteLattice(Network(2, [(0, 1)]))


@pytest.fixture(scope="module")
def triangle() -> Network:
    return Network(3, [(0, 1), (1, 2), (2, 0)])


def test_single_edge_flows(single_edge: FiniteLattice) -> None:
    unit = SourceDistribution.unit(0, 1)
    even = even_flow(single_edge, unit, [0, 1])
    odd = odd_flow(single_edge, unit, [0, 1])

    assert even.flow[0] == pytest.approx(1.0, abs=1e-12)
    assert odd.common.values == pytest.approx(even.flow.values, abs=1e-12)
    assert even.current(0, 1) == pytest.approx(1.0, abs=1e-12)
    assert even.current(1, 0) == pytest.approx(-1.0, abs=1e-12)


def test_one_grid_even_flow_stays_on_the_edge() -> None:
    grid = Grid(1)
    S = grid.ball((0,), 6)
    even = even_flow(grid, SourceDistribution.unit((0,), (1,)), S, TIGHT)

    assert even.current((0,), (1,)) == pytest.approx(1.0, abs=1e-9)
    assert sum(abs(even.flow.values)) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("r", [2, 4, 7])
def test_one_grid_odd_flow_splits_through_infinity(r: int) -> None:
    grid = Grid(1)
    odd = odd_flow(grid, SourceDistribution.unit((0,), (1,)), grid.ball((0,), r), TIGHT)

    assert odd.current((0,), (1,)) == pytest.approx((2 * r + 1) / (2 * r + 2), abs=1e-9)
    assert odd.current((0,), (-1,)) == pytest.approx(1 / (2 * r + 2), abs=1e-9)


def test_flow_pair_realizes_the_same_sources() -> None:
    grid = Grid(2)
    S = grid.ball((0, 0), 3)
    sources = SourceDistribution({(0, 0): 1.0, (2, 1): -0.25, (-1, 3): -0.75})
    pair = flow_pair(grid, sources, S, TIGHT, radius=3)

    even = divergences(pair.even.network, pair.even.flow)
    odd = divergences(pair.odd.network, pair.odd.flow)
    for v in S:
        expected = sources.get(v, 0.0)
        assert even[pair.even.materialized.vertex(v)] == pytest.approx(expected, abs=1e-8)
        assert odd[pair.odd.materialized.vertex(v)] == pytest.approx(expected, abs=1e-8)
    assert pair.common_edge_count == pair.odd.materialized.internal_edge_count


def test_even_flow_superposition() -> None:
    grid = Grid(2)
    S = grid.ball((0, 0), 4)
    p, q, r = (0, 0), (1, 0), (-2, 3)
    direct = even_flow(grid, SourceDistribution.unit(p, q), S, TIGHT).flow
    via_r = (
        even_flow(grid, SourceDistribution.unit(p, r), S, TIGHT).flow
        + even_flow(grid, SourceDistribution.unit(r, q), S, TIGHT).flow
    )
    np.testing.assert_allclose(direct.values, via_r.values, atol=1e-8)


def test_three_grid_odd_flow_from_one_source() -> None:
    grid = Grid(3)
    p, q = grid.origin(), grid.neighbor_of_origin()
    S = grid.ball(p, 4)
    out_of_p = odd_flow(grid, SourceDistribution({p: 1.0}), S, TIGHT)

    currents = [c for _, c in out_of_p.currents_at(p)]
    assert len(currents) == 6
    assert sum(currents) == pytest.approx(1.0, abs=1e-8)
    for c in currents:
        assert c == pytest.approx(1 / 6, abs=1e-8)

    into_q = odd_flow(grid, SourceDistribution({q: -1.0}), S, TIGHT)
    both = odd_flow(grid, SourceDistribution.unit(p, q), S, TIGHT)
    np.testing.assert_allclose(
        both.flow.values, (out_of_p.flow + into_q.flow).values, atol=2e-8
    )


def test_flow_preconditions() -> None:
    grid = Grid(2)
    S = grid.ball((0, 0), 1)
    with pytest.raises(PreconditionError, match="balanced"):
        even_flow(grid, SourceDistribution({(0, 0): 1.0}), S)
    with pytest.raises(PreconditionError, match="outside"):
        even_flow(grid, SourceDistribution.unit((0, 0), (5, 0)), S)
    with pytest.raises(PreconditionError, match="outside"):
        odd_flow(grid, SourceDistribution({(5, 0): 1.0}), S)
    with pytest.raises(PreconditionError, match="components"):
        even_flow(grid, SourceDistribution.unit((0, 0), (3, 0)), [(0, 0), (3, 0)])


@pytest.mark.parametrize("d, radius", [(1, 30), (2, 16), (3, 8)])
def test_grid_ghost_energy_dies_out(d: int, radius: int) -> None:
    grid = Grid(d)
    p, q = grid.origin(), grid.neighbor_of_origin()
    estimate = ghost_flow_estimate(grid, p, q, grid.ball(p, radius), radius=radius)

    assert estimate.ghost_energy >= -1e-8
    assert estimate.ghost_energy <= 0.02
    assert estimate.even_R >= estimate.odd_R - 1e-8


def test_one_grid_ghost_energy_closed_form() -> None:
    grid = Grid(1)
    r = 10
    estimate = ghost_flow_estimate(grid, (0,), (1,), grid.ball((0,), r), TIGHT)
    # 1 / (2r + 2) on the edge pq and on each of the other 2r - 1 internal edges
    assert estimate.ghost_energy == pytest.approx(2 * r / (2 * r + 2) ** 2, abs=1e-9)
    assert estimate.gap == pytest.approx(1 / (2 * r + 2), abs=1e-9)


@pytest.mark.slow
def test_dumbbell_keeps_a_ghost() -> None:
    dumbbell = Dumbbell(3)
    p, q = dumbbell.origin(), dumbbell.neighbor_of_origin()
    seq = SwellingSequence.around(dumbbell, p, q, radii=[4, 5, 6, 8])

    for estimate in ghost_series(dumbbell, p, q, seq):
        assert estimate.even_R == pytest.approx(1.0, abs=1e-8)
        assert 0.25 < estimate.odd_R < 0.4
        assert estimate.ghost_energy >= 0.05


def test_ghost_objective(triangle: Network) -> None:
    edge = Network(2, [(0, 1)])
    assert ghost_objective(edge, Potential([0.0, 0.0]), 0, 1) == 0.0
    assert ghost_objective(triangle, Potential([2.5, 2.5, 2.5]), 0, 1) == 0.0
    for t in (0.0, 0.25, 0.5, 1.0):
        assert ghost_objective(edge, Potential([t, 0.0]), 0, 1) == pytest.approx(t * t - t)
    assert ghost_objective(edge, Potential([0.5, 0.0]), 0, 1) == pytest.approx(-0.25)


def test_cycle_flow_is_a_circulation(triangle: Network) -> None:
    cycle = ((0, 0), (1, 1), (2, 2))
    circulation = cycle_flow(triangle, cycle)

    assert circulation.values.tolist() == [1.0, 1.0, -1.0]
    np.testing.assert_allclose(divergences(triangle, circulation), 0.0)


def test_open_chains_are_rejected(triangle: Network) -> None:
    with pytest.raises(ValueError, match="open chain"):
        cycle_flow(triangle, ((0, 0), (1, 1)))
    with pytest.raises(ValueError, match="broken"):
        cycle_flow(triangle, ((0, 0), (2, 2)))
    with pytest.raises(ValueError):
        cycle_flow(triangle, ())


def test_cycle_perturbation_of_kirchhoff_flow(triangle: Network) -> None:
    lattice = FiniteLattice(triangle)
    odd = odd_flow(lattice, SourceDistribution.unit(0, 1), [0, 1, 2], TIGHT)
    network, flow = odd.network, odd.flow
    # materialized edges: 0-1, 0-2, 1-2
    cycle = ((0, 0), (2, 1), (1, 2))

    assert cycle_perturbation_check(network, flow, cycle, 0.0) == 0.0
    assert cycle_perturbation_check(network, flow, cycle, 0.1) == pytest.approx(0.03, abs=1e-9)
    assert first_order_variation(network, flow, cycle) == pytest.approx(0.0, abs=1e-9)


def test_non_kirchhoff_flow_can_be_improved() -> None:
    parallel = Network(2, [(0, 1), (0, 1)])
    lopsided = Flow([1.0, 0.0])
    cycle = ((0, 0), (1, 1))

    assert first_order_variation(parallel, lopsided, cycle) == pytest.approx(2.0)
    assert cycle_perturbation_check(parallel, lopsided, cycle, -0.25) < 0


def test_fundamental_cycles(triangle: Network) -> None:
    assert len(fundamental_cycles(triangle)) == 1
    network = Network(
        9,
        [(3 * y + x, 3 * y + x + 1) for y in range(3) for x in range(2)]
        + [(3 * y + x, 3 * y + x + 3) for y in range(2) for x in range(3)],
    )
    cycles = fundamental_cycles(network)
    assert len(cycles) == network.edge_count - network.vertex_count + 1
    for cycle in cycles:
        np.testing.assert_allclose(divergences(network, cycle_flow(network, cycle)), 0.0)


def test_odd_flow_is_stationary_on_every_fundamental_cycle() -> None:
    grid = Grid(2)
    odd = odd_flow(grid, SourceDistribution.unit((0, 0), (1, 1)), grid.ball((0, 0), 3), TIGHT)
    network = odd.network
    for cycle in fundamental_cycles(network):
        assert abs(first_order_variation(network, odd.flow, cycle)) <= 1e-8
        assert cycle_perturbation_check(network, odd.flow, cycle, 1e-3) > 0


def test_outflow_profile_splits_by_position() -> None:
    grid = Grid(1)
    centred = SwellingSequence.around(grid, (0,), radii=[5, 10])
    for _, currents in outflow_profile(grid, (0,), centred, TIGHT):
        assert [c for _, c in currents] == pytest.approx([0.5, 0.5], abs=1e-9)

    shifted = SwellingSequence(grid, (5,), (6, 10, 20))
    for r, currents in outflow_profile(grid, (0,), shifted, TIGHT):
        split = dict(currents)
        assert split[(-1,)] == pytest.approx((r + 6) / (2 * r + 2), abs=1e-9)
        assert split[(1,)] == pytest.approx((r - 4) / (2 * r + 2), abs=1e-9)


def test_outflow_profile_on_two_grid_is_even() -> None:
    grid = Grid(2)
    seq = SwellingSequence.around(grid, (0, 0), radii=[4, 8])
    for _, currents in outflow_profile(grid, (0, 0), seq, TIGHT):
        assert [c for _, c in currents] == pytest.approx([0.25] * 4, abs=1e-8)


def test_marching_sink_flips_the_one_grid_split() -> None:
    grid = Grid(1)
    rows = marching_sink_currents(grid, (0,), [(3,), (-3,)], grid.ball((0,), 10), TIGHT)

    right, left = dict(rows[0][1]), dict(rows[1][1])
    assert right[(1,)] == pytest.approx(1.0, abs=1e-9)
    assert right[(-1,)] == pytest.approx(0.0, abs=1e-9)
    assert left[(-1,)] == pytest.approx(1.0, abs=1e-9)


def test_flow_csv() -> None:
    grid = Grid(2)
    odd = odd_flow(grid, SourceDistribution({(0, 0): 1.0}), grid.ball((0, 0), 1))
    buffer = io.StringIO()
    write_flow_csv(grid, odd, buffer)
    lines = buffer.getvalue().splitlines()

    assert lines[0] == ",".join(FLOW_CSV_COLUMNS)
    assert len(lines) == 1 + odd.network.edge_count
    assert lines[1].startswith('"-1,-1","0,-1",1.0,')
    assert lines[-1].split(",")[-3] == INFINITY
    assert energy(odd.network, odd.flow) > 0

    rows = list(csv.DictReader(io.StringIO(buffer.getvalue())))
    for row in rows:
        for end in (row["tail"], row["head"]):
            assert end == INFINITY or grid.parse_vertex(end) in odd.materialized.subset
    currents = [float(row["current"]) for row in rows if row["head"] == INFINITY]
    assert sum(currents) == pytest.approx(1.0, abs=1e-8)


if __name__ == "__main__":
    pytest.main()
