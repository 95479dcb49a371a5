"""Problem builders shared by the tests: the four reference topologies with
randomized coefficients and data."""

from __future__ import annotations

import numpy as np

from netlayer.fields import BoundaryData, InitialData, Table
from netlayer.graph import build_graph, classify_vertices

TOPOLOGIES = ("single_edge", "path2", "fig1", "diamond6")


def random_rates(rng: np.random.Generator, topology: str) -> tuple[list[str], list[tuple]]:
    """Vertices and ``(id, tail, head, b)`` edges with conserved flow rates."""
    if topology == "single_edge":
        return ["v1", "v2"], [("e1", "v1", "v2", rng.uniform(0.2, 3))]
    if topology == "path2":
        b = rng.uniform(0.2, 3)
        return ["v1", "v2", "v3"], [("e1", "v1", "v2", b), ("e2", "v2", "v3", b)]
    if topology == "fig1":
        b1, b2 = rng.uniform(0.2, 3, size=2)
        return ["v1", "v2", "v3", "v4"], [
            ("e1", "v1", "v3", b1),
            ("e2", "v2", "v3", b2),
            ("e3", "v3", "v4", b1 + b2),
        ]
    if topology == "diamond6":
        b2, b3 = rng.uniform(0.2, 3, size=2)
        return ["s", "A", "B", "C", "D", "t"], [
            ("e1", "s", "A", b2 + b3),
            ("e2", "A", "B", b2),
            ("e3", "A", "C", b3),
            ("e4", "B", "D", b2),
            ("e5", "C", "D", b3),
            ("e6", "D", "t", b2 + b3),
        ]
    raise ValueError(topology)


def random_graph(rng: np.random.Generator, topology: str, eps_range=(1e-3, 1.0)):
    verts, raw = random_rates(rng, topology)
    lo, hi = np.log(eps_range[0]), np.log(eps_range[1])
    edges = [
        dict(
            id=eid,
            tail=t,
            head=h,
            b=float(b),
            length=float(rng.uniform(0.3, 2.0)),
            a=float(rng.uniform(0.3, 3.0)),
            epsilon=float(np.exp(rng.uniform(lo, hi))),
        )
        for eid, t, h, b in raw
    ]
    return build_graph(verts, edges)


def random_data(rng, g, T, low=0.0, high=1.0, compatible=True, zero_boundary=False, floor=None):
    """Random piecewise-linear initial and boundary tables.

    With ``compatible`` the tables agree at junctions and with ``g(0)``.
    With ``floor`` every sampled value is clipped from below, which puts exact
    zeros into nonnegative data.
    """

    def sample(size=None):
        vals = rng.uniform(low, high, size=size)
        return vals if floor is None else np.maximum(vals, floor)

    vc = classify_vertices(g)
    vertex_value = {v: float(sample()) for v in g.vertices}
    if zero_boundary:
        for v in vc.boundary:
            vertex_value[v] = 0.0
    initial = {}
    for e in g.edges:
        x = np.linspace(0.0, e.length, int(rng.integers(3, 9)))
        vals = sample(x.size)
        if compatible:
            vals[0], vals[-1] = vertex_value[e.tail], vertex_value[e.head]
        initial[e.id] = Table(x, vals)
    boundary = {}
    for v in vc.boundary:
        if zero_boundary:
            boundary[v] = Table.constant(0.0, 0.0, T)
            continue
        t = np.linspace(0.0, T, int(rng.integers(2, 7)))
        vals = sample(t.size)
        vals[0] = vertex_value[v]
        boundary[v] = Table(t, vals)
    return InitialData(initial), BoundaryData(boundary)


def fig1_graph(eps=0.1, b=(1.0, 1.0, 2.0)):
    return build_graph(
        ["v1", "v2", "v3", "v4"],
        [
            dict(id="e1", tail="v1", head="v3", length=1.0, b=b[0], epsilon=eps),
            dict(id="e2", tail="v2", head="v3", length=1.0, b=b[1], epsilon=eps),
            dict(id="e3", tail="v3", head="v4", length=1.0, b=b[2], epsilon=eps),
        ],
    )


def single_edge_graph(eps=0.1, length=1.0, a=1.0, b=1.0):
    return build_graph(["v1", "v2"], [dict(id="e1", tail="v1", head="v2", length=length, a=a, b=b, epsilon=eps)])
