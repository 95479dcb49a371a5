import math

import numpy as np
import pytest

from netlayer.graph import build_graph
from netlayer.mesh import MeshError, shishkin_mesh, shishkin_transition, uniform_mesh
from problems import fig1_graph, single_edge_graph


def test_uniform_boundaries():
    m = uniform_mesh(single_edge_graph(), 4)
    np.testing.assert_array_equal(m.edge_meshes["e1"].nodes, [0, 0.25, 0.5, 0.75, 1])


def test_uniform_widths_long_edge():
    m = uniform_mesh(single_edge_graph(length=2.0), 2)
    np.testing.assert_array_equal(m.edge_meshes["e1"].widths, [1.0, 1.0])


def test_uniform_rejects_one_cell():
    with pytest.raises(MeshError):
        uniform_mesh(single_edge_graph(), 1)


def test_shishkin_transition_values():
    # 2 * (0.01 / 1) * ln 8 and 2 * (0.1 / 2) * ln 4
    e = single_edge_graph(eps=0.01).edge("e1")
    assert shishkin_transition(e, 8, 2.0) == pytest.approx(0.041588830833596715, rel=1e-14)
    e = single_edge_graph(eps=0.1, b=2.0).edge("e1")
    assert shishkin_transition(e, 4, 2.0) == pytest.approx(0.13862943611198905, rel=1e-14)


def test_shishkin_saturates_to_equal_halves():
    g = single_edge_graph(eps=1.0)
    m = shishkin_mesh(g, 8)
    assert shishkin_transition(g.edge("e1"), 8) == 0.5
    np.testing.assert_allclose(m.edge_meshes["e1"].widths, np.full(8, 0.125))


def test_shishkin_layout():
    g = single_edge_graph(eps=0.01)
    m = shishkin_mesh(g, 8)
    nodes = m.edge_meshes["e1"].nodes
    tau = 0.02 * math.log(8)
    assert nodes[4] == pytest.approx(1 - tau)
    np.testing.assert_allclose(np.diff(nodes[:5]), (1 - tau) / 4)
    np.testing.assert_allclose(np.diff(nodes[4:]), tau / 4)


@pytest.mark.parametrize("n", [3, 2, 7])
def test_shishkin_rejects_bad_counts(n):
    with pytest.raises(MeshError):
        shishkin_mesh(single_edge_graph(), n)


def test_shishkin_rejects_nonpositive_sigma():
    with pytest.raises(MeshError):
        shishkin_mesh(single_edge_graph(), 8, sigma=0.0)


def test_transition_is_lipschitz_in_epsilon():
    n, sigma = 64, 2.0
    eps = np.linspace(1e-4, 0.2, 400)
    taus = [shishkin_transition(single_edge_graph(eps=e).edge("e1"), n, sigma) for e in eps]
    bound = sigma * math.log(n) / 1.0
    assert np.all(np.abs(np.diff(taus)) <= bound * np.diff(eps) * (1 + 1e-12))


def test_numbering_is_a_bijection():
    g = fig1_graph()
    m = shishkin_mesh(g, 6)
    indices = []
    for eid in m.edge_ids:
        indices.extend(range(m.cell_slice(eid).start, m.cell_slice(eid).stop))
    indices.extend(m.vertex_index(v) for v in g.vertices)
    assert sorted(indices) == list(range(m.n_unknowns))
    assert m.n_unknowns == 3 * 6 + 4
    assert len(m.coupling["v3"]) == 3


def test_widths_sum_to_length():
    g = build_graph(
        ["a", "b", "c"],
        [
            dict(id="x", tail="a", head="b", length=0.3, epsilon=1e-3),
            dict(id="y", tail="b", head="c", length=1.7, epsilon=0.5),
        ],
    )
    for m in (uniform_mesh(g, 10), shishkin_mesh(g, 10)):
        for e in g.edges:
            w = m.edge_meshes[e.id].widths
            assert np.all(w > 0)
            assert math.isclose(w.sum(), e.length, rel_tol=1e-12)
        assert m.matches(g)
