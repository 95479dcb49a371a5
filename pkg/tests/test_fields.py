import numpy as np
import pytest

from netlayer.fields import (
    BoundaryData,
    DataError,
    DiscreteField,
    InitialData,
    Table,
    compatibility_defects,
    is_compatible,
    make_compatible,
    sample_initial,
)
from netlayer.mesh import uniform_mesh
from problems import fig1_graph, single_edge_graph


def test_table_interpolates_and_holds_ends():
    t = Table.from_pairs([[0, 0], [1, 2], [2, 0]])
    assert t(0.5) == 1.0
    assert t(3.0) == 0.0 and t(-1.0) == 0.0
    assert t.pairs() == [[0.0, 0.0], [1.0, 2.0], [2.0, 0.0]]


@pytest.mark.parametrize(
    "pairs", [[[0, 1], [0, 2]], [[1, 0], [0, 1]], [[0, float("nan")]], [[0, 1, 2]]]
)
def test_table_rejects_bad_input(pairs):
    with pytest.raises(DataError):
        Table.from_pairs(pairs)


def test_boundary_coverage():
    bd = BoundaryData({"v1": Table.constant(0.0, 0.0, 1.0)})
    bd.check_covers(["v1"], 1.0)
    with pytest.raises(DataError, match="must cover"):
        bd.check_covers(["v1"], 2.0)
    with pytest.raises(DataError, match="boundary data required for vertex v2"):
        bd.check_covers(["v1", "v2"], 1.0)


def test_initial_spans():
    g = fig1_graph()
    idata = InitialData({"e1": Table.constant(0, 0, 1), "e2": Table.constant(0, 0, 1)})
    with pytest.raises(DataError, match="initial data required per edge"):
        idata.check_spans(g)
    idata = InitialData({e: Table.constant(0, 0, 0.5) for e in ("e1", "e2", "e3")})
    with pytest.raises(DataError, match="must span"):
        idata.check_spans(g)


def test_compatibility_and_projection():
    g = fig1_graph()
    idata = InitialData(
        {
            "e1": Table.from_pairs([[0, 0.1], [1, 0.4]]),
            "e2": Table.from_pairs([[0, 0.2], [1, 0.6]]),
            "e3": Table.from_pairs([[0, 0.5], [1, 0.9]]),
        }
    )
    bd = BoundaryData.constant({"v1": 0.1, "v2": 0.2, "v4": 1.0})
    d = compatibility_defects(g, idata, bd)
    assert d["v3"] == pytest.approx(0.2)
    assert d["v4"] == pytest.approx(0.1)
    assert d["v1"] == 0.0
    assert not is_compatible(g, idata, bd)
    fixed, adjust = make_compatible(g, idata, bd)
    assert is_compatible(g, fixed, bd)
    assert adjust == pytest.approx(0.1)
    assert fixed.endpoint(g, "e3", "v3") == pytest.approx(0.5)


def test_field_evaluation_is_piecewise_linear():
    g = single_edge_graph()
    m = uniform_mesh(g, 4)
    u = DiscreteField(m, np.array([1.0, 2.0, 3.0, 4.0, 0.0, 5.0]))
    assert u.trace("v2") == 5.0
    np.testing.assert_allclose(u.evaluate(g, "e1", [0.0, 0.125, 0.25, 1.0]), [0.0, 1.0, 1.5, 5.0])
    with pytest.raises(DataError):
        DiscreteField(m, np.zeros(3))


def test_sample_initial_traces_average_endpoints():
    g = fig1_graph()
    m = uniform_mesh(g, 2)
    idata = InitialData({e: Table.from_pairs([[0, k], [1, k + 1]]) for k, e in enumerate(("e1", "e2", "e3"))})
    u = sample_initial(g, m, idata)
    assert u.trace("v3") == pytest.approx((1 + 2 + 2) / 3)
    np.testing.assert_allclose(u.cells("e2"), [1.25, 1.75])
