"""The vanishing-diffusion limit ``a u_t + b u_x = 0`` on a network.

Junction values are flow-weighted averages of the incoming edge traces. Two
solvers are provided: an upwind finite-volume scheme on a :class:`NetworkMesh`
and :class:`ExactTransport`, which follows characteristics back through the
network to initial or inflow boundary data.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cdsolve import SolverError, lu_solve_checked
from .fields import BoundaryData, DiscreteField, InitialData
from .graph import MetricGraph, VertexClassification, classify_vertices
from .mesh import NetworkMesh
from .timeloop import StepDiagnostics, TimeGrid, Trajectory, _snapshot_steps


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class MixingRule:
    """Convex weights ``b^e / sum_in b`` for the incoming edges at inner vertices."""

    weights: dict[str, dict[str, float]]

    @classmethod
    def from_graph(cls, g: MetricGraph, vc: VertexClassification | None = None) -> MixingRule:
        vc = vc or classify_vertices(g)
        weights = {}
        for v in vc.inner:
            total = math.fsum(g.edge(e).b for e in vc.incoming[v])
            weights[v] = {e: g.edge(e).b / total for e in vc.incoming[v]}
        return cls(weights)


def mixing_values(
    g: MetricGraph,
    inflow_traces: Mapping[str, float],
    bdata: BoundaryData | None = None,
    t: float = 0.0,
) -> dict[str, float]:
    """Vertex values of the transport problem.

    ``inflow_traces`` maps an edge id to its value at the head vertex. Inner
    vertices get the mixing value; with ``bdata``, inflow boundary vertices get
    ``g^v(t)`` and outflow boundary vertices record ``g^v(t)`` as well (these
    are used by the boundary-layer correction only).
    """
    vc = classify_vertices(g)
    rule = MixingRule.from_graph(g, vc)
    out = {}
    for v, w in rule.weights.items():
        missing = [e for e in w if e not in inflow_traces]
        if missing:
            raise KeyError(f"missing inflow value for edge(s) {', '.join(missing)} at {v}")
        out[v] = math.fsum(lam * float(inflow_traces[e]) for e, lam in w.items())
    if bdata is not None:
        for v in vc.boundary:
            out[v] = float(bdata(v, t))
    return out


def junction_dissipation(
    g: MetricGraph, inflow_traces: Mapping[str, float], vertex_values: Mapping[str, float]
) -> dict[str, float]:
    """``D(v) = sum_{e in E_in(v)} b^e |u^e(v) - u(v)|^2`` at every inner vertex."""
    vc = classify_vertices(g)
    return {
        v: math.fsum(
            g.edge(e).b * (float(inflow_traces[e]) - vertex_values[v]) ** 2
            for e in vc.incoming[v]
        )
        for v in vc.inner
    }


transport_energy_balance = junction_dissipation


def jensen_terms(
    g: MetricGraph, inflow_traces: Mapping[str, float], vertex_values: Mapping[str, float]
) -> dict[str, tuple[float, float]]:
    """``(sum_out b |u(v)|^2, sum_in b |u^e(v)|^2)`` at every inner vertex."""
    vc = classify_vertices(g)
    out = {}
    for v in vc.inner:
        outgoing = math.fsum(g.edge(e).b for e in vc.outgoing[v]) * vertex_values[v] ** 2
        incoming = math.fsum(g.edge(e).b * float(inflow_traces[e]) ** 2 for e in vc.incoming[v])
        out[v] = (outgoing, incoming)
    return out


class UpwindTransport:
    """Upwind finite volumes for the transport limit on cell unknowns.

    Cell ``i`` of edge ``e`` receives ``b u_{i-1}``; the first cell reads the
    tail vertex value, which is ``g^v(t)`` at inflow boundaries and the mixing
    of the last cells of the incoming edges at junctions.
    """

    def __init__(self, g: MetricGraph, mesh: NetworkMesh):
        if not mesh.matches(g):
            raise ValueError("mesh does not match graph")
        self.graph = g
        self.mesh = mesh
        self.vc = classify_vertices(g)
        self.rule = MixingRule.from_graph(g, self.vc)
        n = mesh.n_cells
        rows, cols, vals = [], [], []
        mass = np.zeros(n)
        self._inflow_cells: list[tuple[int, str, float]] = []
        self._last = {e.id: mesh.cell_slice(e.id).stop - 1 for e in g.edges}
        for e in g.edges:
            sl = mesh.cell_slice(e.id)
            mass[sl] = e.a * mesh.edge_meshes[e.id].widths
            for i in range(sl.start, sl.stop):
                rows.append(i)
                cols.append(i)
                vals.append(e.b)
                if i > sl.start:
                    rows.append(i)
                    cols.append(i - 1)
                    vals.append(-e.b)
            if e.tail in self.rule.weights:
                for f, lam in self.rule.weights[e.tail].items():
                    rows.append(sl.start)
                    cols.append(self._last[f])
                    vals.append(-e.b * lam)
            else:
                self._inflow_cells.append((sl.start, e.tail, e.b))
        self.matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.mass = mass
        self._outflow_cells = [
            (self._last[self.vc.incoming[v][0]], g.edge(self.vc.incoming[v][0]).b)
            for v in self.vc.outflow
        ]
        self._lu: dict[tuple[float, float], tuple] = {}

    def source(self, bdata: BoundaryData, t: float) -> np.ndarray:
        r = np.zeros(self.mesh.n_cells)
        for i, v, b in self._inflow_cells:
            r[i] += b * float(bdata(v, t))
        return r

    def max_explicit_dt(self) -> float:
        return min(
            e.a * self.mesh.edge_meshes[e.id].widths.min() / e.b for e in self.graph.edges
        )

    def influx(self, cells: np.ndarray, bdata: BoundaryData, t: float) -> float:
        inflow = sum(b * float(bdata(v, t)) for _, v, b in self._inflow_cells)
        outflow = sum(b * cells[i] for i, b in self._outflow_cells)
        return inflow - outflow

    def inflow_traces(self, cells: np.ndarray) -> dict[str, float]:
        return {e: float(cells[i]) for e, i in self._last.items()}

    def to_field(self, cells: np.ndarray, bdata: BoundaryData, t: float) -> DiscreteField:
        """Attach vertex values (mixing at junctions, boundary data elsewhere)."""
        u = DiscreteField.zeros(self.mesh)
        u.values[: self.mesh.n_cells] = cells
        for v, w in self.rule.weights.items():
            u.values[self.mesh.vertex_index(v)] = sum(lam * cells[self._last[e]] for e, lam in w.items())
        for v in self.vc.boundary:
            u.values[self.mesh.vertex_index(v)] = float(bdata(v, t))
        return u

    def step(self, cells: np.ndarray, bdata: BoundaryData, t: float, dt: float, theta: float = 1.0):
        """One theta-scheme step from ``t`` to ``t + dt``."""
        if theta < 1.0:
            limit = self.max_explicit_dt() / (1.0 - theta)
            if dt > limit * (1 + 1e-12):
                raise CFLError(f"dt={dt:.6g} exceeds the CFL bound {limit:.6g}")
        rhs = self.mass / dt * cells
        if theta < 1.0:
            rhs = rhs - (1 - theta) * (self.matrix @ cells) + (1 - theta) * self.source(bdata, t)
        if theta > 0.0:
            rhs = rhs + theta * self.source(bdata, t + dt)
            key = (round(dt, 15), theta)
            if key not in self._lu:
                k = sp.csc_matrix(sp.diags(self.mass / dt) + theta * self.matrix)
                try:
                    self._lu[key] = (spla.splu(k), k)
                except RuntimeError as exc:
                    raise SolverError(str(exc)) from exc
            lu, k = self._lu[key]
            return lu_solve_checked(lu, k, rhs)
        return rhs * dt / self.mass


def transport_step_upwind(
    g: MetricGraph,
    mesh: NetworkMesh,
    u: DiscreteField,
    bdata: BoundaryData,
    t: float,
    dt: float,
    theta: float = 1.0,
) -> DiscreteField:
    """Advance ``u`` by one step; ``theta=1`` is implicit Euler, ``theta=0``
    explicit Euler (requires ``dt <= min a h / b``)."""
    scheme = UpwindTransport(g, mesh)
    cells = scheme.step(u.cell_values, bdata, t, dt, theta)
    return scheme.to_field(cells, bdata, t + dt)


def integrate_transport(
    g: MetricGraph,
    mesh: NetworkMesh,
    idata: InitialData,
    bdata: BoundaryData,
    grid: TimeGrid,
    outputs: Sequence[float] | None = None,
) -> Trajectory:
    """Upwind transport run with the same diagnostics as the diffusive solver.

    ``jensen_min`` is the smallest Jensen gap ``sum_in b u^2 - sum_out b u(v)^2``
    over junctions; it is nonnegative whenever junction values are mixtures.
    """
    scheme = UpwindTransport(g, mesh)
    theta = grid.theta
    times = grid.times()
    keep = _snapshot_steps(grid, outputs)
    cells = np.concatenate([idata(e.id, mesh.edge_meshes[e.id].centers) for e in g.edges])
    traj = Trajectory(theta=theta)

    def record(step, t, cells, prev):
        field = scheme.to_field(cells, bdata, t)
        mass = float(scheme.mass @ cells)
        energy = 0.5 * float(scheme.mass @ (cells * cells))
        influx = scheme.influx(cells, bdata, t)
        if prev is None:
            mres, edef = 0.0, 0.0
        else:
            dt = t - prev.t
            expected = dt * (theta * influx + (1 - theta) * prev.influx)
            scale = max(abs(mass), abs(prev.mass), dt * abs(influx), dt * abs(prev.influx))
            mres = abs(mass - prev.mass - expected) / scale if scale > 0 else 0.0
            edef = energy - prev.energy
        terms = jensen_terms(g, scheme.inflow_traces(cells), {
            v: field.trace(v) for v in scheme.vc.inner
        })
        gap = min((inc - out for out, inc in terms.values()), default=math.nan)
        d = StepDiagnostics(step, float(t), mass, mres, energy, edef,
                            float(field.values.min()), gap, influx)
        traj.diagnostics.append(d)
        if step in keep:
            traj.times.append(float(t))
            traj.snapshots.append(field)
        return d

    prev = record(0, 0.0, cells, None)
    for n in range(1, len(times)):
        cells = scheme.step(cells, bdata, times[n - 1], times[n] - times[n - 1], theta)
        prev = record(n, times[n], cells, prev)
    return traj


class RecursionLimitError(RuntimeError):
    pass


class ExactTransport:
    """Exact transport solution by backward characteristics.

    On edge ``e`` the value at ``(x, t)`` is ``u_0^e(x - c t)`` with
    ``c = b/a`` if the characteristic starts inside the edge, and otherwise the
    tail vertex value at the entry time ``s = t - x/c``. Vertex values are
    ``g^v(s)`` at inflow boundaries, the mixing of the incoming edges' head
    values at junctions, and ``g^v(s)`` at outflow boundaries.
    """

    def __init__(self, g: MetricGraph, bdata: BoundaryData, idata: InitialData):
        self.graph = g
        self.bdata = bdata
        self.idata = idata
        self.vc = classify_vertices(g)
        self.rule = MixingRule.from_graph(g, self.vc)
        self._inflow = set(self.vc.inflow)
        self._memo: dict[tuple[str, float], float] = {}
        self._lock = threading.Lock()
        self._speed_bound = max(e.speed for e in g.edges)
        self._min_length = min(e.length for e in g.edges)

    def depth_limit(self, t: float) -> int:
        return math.ceil(t * self._speed_bound / self._min_length) + len(self.graph.edges)

    # scalar path with memoized vertex values

    def value(self, edge_id: str, x: float, t: float) -> float:
        return self._edge_value(edge_id, float(x), float(t), 0, self.depth_limit(t))

    def _edge_value(self, edge_id, x, t, depth, limit):
        e = self.graph.edge(edge_id)
        foot = x - e.speed * t
        if foot >= 0.0:
            return float(self.idata(edge_id, foot))
        return self._vertex_value(e.tail, t - x / e.speed, depth + 1, limit)

    def vertex_value(self, v: str, s: float) -> float:
        """``u(v, s)``; memoized per ``(v, s)``."""
        return self._vertex_value(v, float(s), 0, self.depth_limit(s))

    def _vertex_value(self, v, s, depth, limit):
        if depth > limit:
            raise RecursionLimitError(f"characteristic trace exceeded depth {limit} at {v}")
        if v not in self.rule.weights:
            return float(self.bdata(v, s))
        key = (v, s)
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        val = math.fsum(
            lam * self._edge_value(f, self.graph.edge(f).length, s, depth, limit)
            for f, lam in self.rule.weights[v].items()
        )
        with self._lock:
            self._memo.setdefault(key, val)
        return val

    # vectorized path

    def evaluate(self, edge_id: str, x, t) -> np.ndarray:
        """Values at arrays ``x`` (positions on the edge) and ``t`` (broadcast)."""
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        limit = self.depth_limit(float(t.max()) if t.size else 0.0)
        return self._edge_values(edge_id, x.ravel(), t.ravel(), 0, limit).reshape(x.shape)

    def _edge_values(self, edge_id, x, t, depth, limit):
        e = self.graph.edge(edge_id)
        foot = x - e.speed * t
        out = np.empty_like(x)
        inside = foot >= 0.0
        out[inside] = self.idata(edge_id, foot[inside])
        if not inside.all():
            rest = ~inside
            out[rest] = self._vertex_values(e.tail, t[rest] - x[rest] / e.speed, depth + 1, limit)
        return out

    def vertex_values(self, v: str, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        limit = self.depth_limit(float(s.max()) if s.size else 0.0)
        return self._vertex_values(v, s.ravel(), 0, limit).reshape(s.shape)

    def _vertex_values(self, v, s, depth, limit):
        if depth > limit:
            raise RecursionLimitError(f"characteristic trace exceeded depth {limit} at {v}")
        if v not in self.rule.weights:
            return self.bdata(v, s)
        out = np.zeros_like(s)
        for f, lam in self.rule.weights[v].items():
            ell = np.full_like(s, self.graph.edge(f).length)
            out += lam * self._edge_values(f, ell, s, depth, limit)
        return out

    def head_value(self, edge_id: str, t) -> np.ndarray:
        """Trace of the transport solution at the head of ``edge_id``."""
        return self.evaluate(edge_id, self.graph.edge(edge_id).length, t)

    def cell_values(self, mesh: NetworkMesh, t: float) -> np.ndarray:
        """Transport solution at all cell centers of ``mesh``."""
        return np.concatenate(
            [self.evaluate(e.id, mesh.edge_meshes[e.id].centers, t) for e in self.graph.edges]
        )

    def to_field(self, mesh: NetworkMesh, t: float) -> DiscreteField:
        u = DiscreteField.zeros(mesh)
        u.values[: mesh.n_cells] = self.cell_values(mesh, t)
        for v in self.graph.vertices:
            u.values[mesh.vertex_index(v)] = self.vertex_values(v, t)
        return u


def exact_transport(
    g: MetricGraph, bdata: BoundaryData, idata: InitialData, edge_id: str, x: float, t: float
) -> float:
    return ExactTransport(g, bdata, idata).value(edge_id, x, t)
