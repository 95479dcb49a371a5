"""Problem data and discrete states.

Boundary and initial data are piecewise-linear tables; a :class:`DiscreteField`
holds one value per cell plus one trace value per vertex.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .graph import MetricGraph
from .mesh import NetworkMesh

JUNCTION_TOLERANCE = 1e-10


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Table:
    """Piecewise-linear function through ``(points[k], values[k])``.

    Evaluation outside the table range holds the end values constant.
    """

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if p.ndim != 1 or p.shape != v.shape or p.size < 1:
            raise DataError("table needs matching 1-d point and value arrays")
        if np.any(np.diff(p) <= 0):
            raise DataError("table points must be strictly increasing")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise DataError("table entries must be finite")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float, start: float, stop: float) -> Table:
        return cls(np.array([start, stop]), np.array([value, value]))

    @classmethod
    def from_pairs(cls, pairs) -> Table:
        arr = np.asarray(pairs, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DataError("table must be a list of (point, value) pairs")
        return cls(arr[:, 0], arr[:, 1])

    def __call__(self, x):
        return np.interp(x, self.points, self.values)

    def pairs(self) -> list[list[float]]:
        return [[float(p), float(v)] for p, v in zip(self.points, self.values)]

    def with_endpoint(self, at_start: bool, value: float) -> Table:
        vals = self.values.copy()
        vals[0 if at_start else -1] = value
        return Table(self.points, vals)

    @property
    def min(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Time tables ``g^v(t)`` for boundary vertices."""

    tables: Mapping[str, Table]

    def __call__(self, v: str, t):
        return self.tables[v](t)

    def check_covers(self, vertices, t_final: float) -> None:
        for v in vertices:
            if v not in self.tables:
                raise DataError(f"boundary data required for vertex {v}")
            tab = self.tables[v]
            if tab.points[0] > 0.0 or tab.points[-1] < t_final:
                raise DataError(f"boundary table for {v} must cover [0, {t_final}]")

    @classmethod
    def constant(cls, values: Mapping[str, float], t_final: float = 1.0) -> BoundaryData:
        return cls({v: Table.constant(c, 0.0, t_final) for v, c in values.items()})


@dataclass(frozen=True, eq=False)
class InitialData:
    """Spatial tables ``u_0^e(x)`` on ``[0, length]`` for every edge."""

    tables: Mapping[str, Table]

    def __call__(self, edge_id: str, x):
        return self.tables[edge_id](x)

    def check_spans(self, g: MetricGraph) -> None:
        for e in g.edges:
            if e.id not in self.tables:
                raise DataError(f"initial data required per edge; missing {e.id}")
            tab = self.tables[e.id]
            if tab.points[0] != 0.0 or not np.isclose(tab.points[-1], e.length, rtol=1e-12):
                raise DataError(f"initial table for {e.id} must span [0, {e.length}]")

    def endpoint(self, g: MetricGraph, edge_id: str, v: str) -> float:
        e = g.edge(edge_id)
        tab = self.tables[edge_id]
        return float(tab.values[0] if v == e.tail else tab.values[-1])


def compatibility_defects(
    g: MetricGraph, idata: InitialData, bdata: BoundaryData | None = None
) -> dict[str, float]:
    """Largest mismatch at each vertex between incident initial endpoint values
    (and ``g^v(0)`` at boundary vertices when boundary data are given)."""
    out = {}
    for v in g.vertices:
        vals = [idata.endpoint(g, e.id, v) for e in g.incident_edges(v)]
        if bdata is not None and v in bdata.tables and len(vals) == 1:
            vals.append(float(bdata(v, 0.0)))
        out[v] = max(vals) - min(vals)
    return out


def is_compatible(g, idata, bdata=None, tol: float = JUNCTION_TOLERANCE) -> bool:
    return all(d <= tol for d in compatibility_defects(g, idata, bdata).values())


def make_compatible(
    g: MetricGraph, idata: InitialData, bdata: BoundaryData
) -> tuple[InitialData, float]:
    """Adjust initial endpoint values to be continuous at junctions and to match
    ``g^v(0)`` at boundary vertices.

    Junction values are replaced by the mean of the incident endpoint values.
    Returns the adjusted data and the largest change applied.
    """
    tables = dict(idata.tables)
    adjust = 0.0
    for v in g.vertices:
        incident = g.incident_edges(v)
        if len(incident) == 1:
            target = float(bdata(v, 0.0))
        else:
            target = float(np.mean([idata.endpoint(g, e.id, v) for e in incident]))
        for e in incident:
            old = idata.endpoint(g, e.id, v)
            adjust = max(adjust, abs(old - target))
            tables[e.id] = tables[e.id].with_endpoint(v == e.tail, target)
    return InitialData(tables), adjust


@dataclass(eq=False)
class DiscreteField:
    """Cell averages on every edge plus one trace value per vertex."""

    mesh: NetworkMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_unknowns,):
            raise DataError(
                f"field has {self.values.size} values, mesh needs {self.mesh.n_unknowns}"
            )

    @classmethod
    def zeros(cls, mesh: NetworkMesh) -> DiscreteField:
        return cls(mesh, np.zeros(mesh.n_unknowns))

    def cells(self, edge_id: str) -> np.ndarray:
        return self.values[self.mesh.cell_slice(edge_id)]

    def trace(self, v: str) -> float:
        return float(self.values[self.mesh.vertex_index(v)])

    @property
    def cell_values(self) -> np.ndarray:
        return self.values[: self.mesh.n_cells]

    @property
    def trace_values(self) -> np.ndarray:
        return self.values[self.mesh.n_cells :]

    def copy(self) -> DiscreteField:
        return DiscreteField(self.mesh, self.values.copy())

    def evaluate(self, g: MetricGraph, edge_id: str, x) -> np.ndarray:
        """Piecewise-linear reconstruction through the tail trace, the cell
        centers and the head trace."""
        e = g.edge(edge_id)
        em = self.mesh.edge_meshes[edge_id]
        pts = np.concatenate([[0.0], em.centers, [em.length]])
        vals = np.concatenate([[self.trace(e.tail)], self.cells(edge_id), [self.trace(e.head)]])
        return np.interp(x, pts, vals)


def sample_initial(g: MetricGraph, mesh: NetworkMesh, idata: InitialData) -> DiscreteField:
    """Cell values from ``u_0`` at cell centers; vertex traces from the mean of
    the incident endpoint values."""
    u = DiscreteField.zeros(mesh)
    for e in g.edges:
        u.values[mesh.cell_slice(e.id)] = idata(e.id, mesh.edge_meshes[e.id].centers)
    for v in g.vertices:
        ends = [idata.endpoint(g, e.id, v) for e in g.incident_edges(v)]
        u.values[mesh.vertex_index(v)] = float(np.mean(ends))
    return u
