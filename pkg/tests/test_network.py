import io

import numpy as np
import pytest

from ohmnet.network import (
    Flow,
    Network,
    Potential,
    SourceDistribution,
    dirichlet_energy,
    divergence,
    divergences,
    energy,
    is_balanced,
    potential_flow,
    read_edge_list,
    write_edge_list,
)


@pytest.fixture(scope="module")
def kite() -> Network:
    # square 0-1-2-3 with the diagonal 0-2 doubled in conductance
    return Network(4, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 0, 2.0)])


def test_edges_are_stored_lower_endpoint_first(kite: Network) -> None:
    assert [(r.tail, r.head) for r in kite.edges()] == [
        (0, 1),
        (1, 2),
        (2, 3),
        (0, 3),
        (0, 2),
    ]
    assert kite.edge(4).conductance == 2.0
    assert kite.edge(4).resistance == 0.5


def test_network_rejects_bad_edges() -> None:
    with pytest.raises(ValueError, match="self-loop"):
        Network(2, [(1, 1)])
    with pytest.raises(ValueError, match="positive"):
        Network(2, [(0, 1, 0.0)])
    with pytest.raises(ValueError, match="positive"):
        Network(2, [(0, 1, -1.0)])
    with pytest.raises(ValueError, match="outside"):
        Network(2, [(0, 2)])
    with pytest.raises(ValueError, match="vertex_count"):
        Network(-1)


def test_parallel_edges_are_kept_distinct() -> None:
    network = Network(2, [(0, 1), (1, 0, 3.0)])
    assert network.edge_count == 2
    assert network.degree(0) == 2
    assert network.vertex_conductance(1) == 4.0
    assert network.edge_multiset()[(0, 1, 1.0)] == 1


def test_incidence(kite: Network) -> None:
    assert kite.incidence_is_consistent()
    assert sorted(w for _, w in kite.incidence(0)) == [1, 2, 3]
    assert kite.degree(2) == 3
    assert kite.vertex_conductance(0) == 4.0
    with pytest.raises(ValueError):
        kite.incidence(4)


def test_invalid_ids(kite: Network) -> None:
    with pytest.raises(ValueError):
        kite.check_vertex(-1)
    with pytest.raises(ValueError):
        kite.edge(5)


def test_laplacian_rows_sum_to_zero(kite: Network) -> None:
    laplacian = kite.laplacian().toarray()
    np.testing.assert_allclose(laplacian.sum(axis=1), 0.0)
    assert laplacian[0, 0] == 4.0
    assert laplacian[0, 2] == -2.0


def test_divergence_matches_incidence_matrix(kite: Network) -> None:
    flow = Flow([1.0, -0.5, 0.25, 2.0, 0.0])
    np.testing.assert_allclose(
        divergences(kite, flow), kite.incidence_matrix().T @ flow.values
    )
    assert divergence(kite, flow, 0) == pytest.approx(3.0)
    assert divergences(kite, flow).sum() == pytest.approx(0.0)


def test_potential_flow_energy_equals_dirichlet_energy(kite: Network) -> None:
    u = Potential([0.3, -1.0, 2.0, 0.5])
    flow = potential_flow(kite, u)
    assert flow[4] == pytest.approx(2.0 * (0.3 - 2.0))
    assert energy(kite, flow) == pytest.approx(dirichlet_energy(kite, u))
    assert dirichlet_energy(kite, u + 7.0) == pytest.approx(dirichlet_energy(kite, u))


def test_length_mismatch_is_rejected(kite: Network) -> None:
    with pytest.raises(ValueError, match="edge values"):
        energy(kite, Flow([1.0]))
    with pytest.raises(ValueError, match="vertices"):
        dirichlet_energy(kite, Potential([1.0]))


def test_flow_arithmetic(kite: Network) -> None:
    f = Flow([1.0, 2.0, 3.0, 4.0, 5.0])
    g = Flow.zeros(kite)
    assert (f - f).values.tolist() == g.values.tolist()
    assert (2 * f)[4] == 10.0
    assert (-f)[0] == -1.0
    assert len(f.restrict(3)) == 3
    assert f.along(kite, 3, 3) == -4.0
    assert f.along(kite, 3, 0) == 4.0
    with pytest.raises(ValueError):
        f.along(kite, 3, 1)


def test_flow_values_are_read_only() -> None:
    f = Flow([1.0, 2.0])
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_source_distribution() -> None:
    sources = SourceDistribution([(0, 1.0), (1, -0.5), (0, 0.5), (2, -1.0)])
    assert sources[0] == 1.5
    assert len(sources) == 3
    assert is_balanced(sources)
    assert not is_balanced(SourceDistribution({0: 1.0}))
    assert SourceDistribution({0: 1.0, 1: 0.0}).support == (0,)
    np.testing.assert_allclose(sources.vector(3), [1.5, -0.5, -1.0])


def test_unit_sources() -> None:
    unit = SourceDistribution.unit("a", "b")
    assert unit.total == 0.0
    assert unit["a"] == 1.0
    with pytest.raises(ValueError, match="distinct"):
        SourceDistribution.unit(1, 1)
    with pytest.raises(ValueError, match="finite"):
        SourceDistribution({0: float("nan")})


def test_read_edge_list() -> None:
    text = """
    # triangle with one heavy edge
    0 1
    1 2 2.5   # trailing comment
    2 0
    """
    network = read_edge_list(io.StringIO(text))
    assert network.vertex_count == 3
    assert network.edge_count == 3
    assert network.edge(1).conductance == 2.5


def test_read_edge_list_reports_line_numbers() -> None:
    with pytest.raises(ValueError, match="line 2"):
        read_edge_list(["0 1", "0 1 2 3"])
    with pytest.raises(ValueError, match="line 1"):
        read_edge_list(["a b"])
    with pytest.raises(ValueError, match="self-loop"):
        read_edge_list(["1 1"])


def test_write_edge_list_is_readable(kite: Network) -> None:
    buffer = io.StringIO()
    write_edge_list(kite, buffer)
    assert buffer.getvalue().startswith("# 4 vertices, 5 edges\n")
    assert read_edge_list(io.StringIO(buffer.getvalue())).edge_multiset() == kite.edge_multiset()


def test_edge_list_keeps_isolated_vertices() -> None:
    sparse_tail = Network(6, [(0, 1), (1, 2)])
    buffer = io.StringIO()
    write_edge_list(sparse_tail, buffer)
    restored = read_edge_list(io.StringIO(buffer.getvalue()))

    assert restored.vertex_count == 6
    assert restored.edge_multiset() == sparse_tail.edge_multiset()
    assert not restored.is_connected()
    assert read_edge_list(["# 2 vertices", "0 1", "1 3"]).vertex_count == 4


def test_components_and_induced(kite: Network) -> None:
    split = Network(5, [(0, 1), (2, 3), (3, 4)])
    labels = split.component_labels()
    assert labels[0] == labels[1] != labels[2]
    assert not split.is_connected()
    assert kite.is_connected()

    sub, vertices, edges = kite.induced([2, 0, 1])
    assert vertices.tolist() == [0, 1, 2]
    assert edges.tolist() == [0, 1, 4]
    assert sub.edge_multiset() == {(0, 1, 1.0): 1, (1, 2, 1.0): 1, (0, 2, 2.0): 1}


if __name__ == "__main__":
    pytest.main()
