"""Boundary-layer correctors and the vanishing-diffusion convergence study.

On every edge the corrector is ``w(x, t) = A(t) exp(-b (l - x) / eps)`` where the
amplitude ``A`` is the jump between the transport vertex value at the head of
the edge and the transport trace arriving there. The study measures
``max_t ||u_eps - u||`` and ``max_t ||u_eps - u - w||`` in ``L^2`` over the
network for a list of diffusion coefficients and fits the log-log slope.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cdsolve import assemble_cd
from .fields import BoundaryData, DiscreteField, InitialData, make_compatible
from .graph import MetricGraph, classify_vertices
from .mesh import NetworkMesh, shishkin_mesh, uniform_mesh
from .timeloop import TimeGrid, integrate_cd
from .transport import ExactTransport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerField:
    """Exponential outflow-layer correctors, one per edge, at a fixed time."""

    graph: MetricGraph
    amplitude: Mapping[str, float]

    def rate(self, edge_id: str) -> float:
        e = self.graph.edge(edge_id)
        return e.b / e.epsilon

    def __call__(self, edge_id: str, x):
        e = self.graph.edge(edge_id)
        return self.amplitude[edge_id] * np.exp(-e.b * (e.length - np.asarray(x, float)) / e.epsilon)

    def derivative(self, edge_id: str, x):
        return self.rate(edge_id) * self(edge_id, x)

    def outflow_derivative(self, edge_id: str) -> float:
        """Slope at the head of the edge: ``(b/eps) A``."""
        return self.rate(edge_id) * self.amplitude[edge_id]

    def inflow_derivative(self, edge_id: str) -> float:
        """Slope at the tail of the edge: ``(b/eps) A exp(-b l / eps)``."""
        e = self.graph.edge(edge_id)
        return self.rate(edge_id) * self.amplitude[edge_id] * math.exp(-e.b * e.length / e.epsilon)

    def l2_norm(self, edge_id: str) -> float:
        """Closed form ``|A| sqrt(eps/(2b)) sqrt(1 - exp(-2 b l / eps))``."""
        e = self.graph.edge(edge_id)
        return abs(self.amplitude[edge_id]) * math.sqrt(e.epsilon / (2 * e.b)) * math.sqrt(
            -math.expm1(-2 * e.b * e.length / e.epsilon)
        )

    def network_l2_norm(self) -> float:
        return math.sqrt(sum(self.l2_norm(e.id) ** 2 for e in self.graph.edges))

    def cell_values(self, mesh: NetworkMesh) -> np.ndarray:
        return np.concatenate([self(e.id, mesh.edge_meshes[e.id].centers) for e in self.graph.edges])


def layer_field(
    g: MetricGraph, vertex_values: Mapping[str, float], head_traces: Mapping[str, float]
) -> LayerField:
    """Build correctors from transport vertex values (including the outflow
    boundary values) and the transport traces at each edge's head."""
    amp = {}
    for e in g.edges:
        if e.head not in vertex_values:
            raise KeyError(f"no transport vertex value at {e.head} (needed for edge {e.id})")
        amp[e.id] = float(vertex_values[e.head]) - float(head_traces[e.id])
    return LayerField(g, amp)


def layer_field_from_exact(exact: ExactTransport, t: float) -> LayerField:
    g = exact.graph
    heads = {e.head for e in g.edges}
    vertex = {v: float(exact.vertex_values(v, t)) for v in heads}
    traces = {e.id: float(exact.head_value(e.id, t)) for e in g.edges}
    return layer_field(g, vertex, traces)


def _l2(mesh: NetworkMesh, diff: np.ndarray) -> float:
    return math.sqrt(float(mesh.cell_widths() @ (diff * diff)))


@dataclass
class ErrorTracker:
    """Observer for :func:`integrate_cd` that accumulates ``L^inf(L^2)`` errors
    against the exact transport solution, with and without the layer corrector.

    Errors use midpoint quadrature on the computational mesh. Vertex defects of
    ``u_eps - u - w`` are tracked per vertex class. ``sup_u`` and
    ``inflow_slope`` (the one-sided difference quotient between an inflow trace
    and the first cell center) are taken over every call, not only the sampled
    ones; both should stay bounded as epsilon shrinks.
    """

    exact: ExactTransport
    mesh: NetworkMesh
    every: int = 1
    final_time: float = math.inf
    plain: float = 0.0
    composite: float = 0.0
    initial_composite: float = math.nan
    inner_defect: float = 0.0
    inflow_defect: float = 0.0
    outflow_defect: float = 0.0
    sup_u: float = 0.0
    inflow_slope: float = 0.0
    samples: int = 0
    _calls: int = field(default=0, repr=False)

    def __call__(self, t: float, u: DiscreteField) -> None:
        k = self._calls
        self._calls += 1
        self.sup_u = max(self.sup_u, float(np.abs(u.values).max()))
        vc = self.exact.vc
        for v in vc.inflow:
            (eid,) = vc.outgoing[v]
            h0 = self.mesh.edge_meshes[eid].widths[0]
            q = abs(u.cells(eid)[0] - u.trace(v)) / (0.5 * h0)
            self.inflow_slope = max(self.inflow_slope, float(q))
        if k % self.every and not math.isclose(t, self.final_time, rel_tol=1e-12):
            return
        g, mesh = self.exact.graph, self.mesh
        ref = self.exact.cell_values(mesh, t)
        layer = layer_field_from_exact(self.exact, t)
        diff = u.cell_values - ref
        plain = _l2(mesh, diff)
        comp = _l2(mesh, diff - layer.cell_values(mesh))
        if self.samples == 0:
            self.initial_composite = comp
        self.samples += 1
        self.plain = max(self.plain, plain)
        self.composite = max(self.composite, comp)

        for v in vc.inner:
            d = abs(u.trace(v) - float(self.exact.vertex_values(v, t)))
            self.inner_defect = max(self.inner_defect, d)
        for v in vc.inflow:
            (eid,) = vc.outgoing[v]
            eta = u.trace(v) - float(self.exact.vertex_values(v, t)) - float(layer(eid, 0.0))
            self.inflow_defect = max(self.inflow_defect, abs(eta))
        for v in vc.outflow:
            (eid,) = vc.incoming[v]
            eta = u.trace(v) - float(self.exact.head_value(eid, t)) - float(
                layer(eid, g.edge(eid).length)
            )
            self.outflow_defect = max(self.outflow_defect, abs(eta))


def composite_error(
    snapshots: Sequence[tuple[float, DiscreteField]], exact: ExactTransport, mesh: NetworkMesh
) -> tuple[float, float]:
    """``(max_t ||u_eps - u||, max_t ||u_eps - u - w||)`` over the given snapshots."""
    tracker = ErrorTracker(exact, mesh)
    for t, u in snapshots:
        tracker(t, u)
    return tracker.plain, tracker.composite


def fit_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through ``(log eps, log err)``.

    Returns ``(slope, intercept, max abs log residual)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (eps, error) points")
    if np.any(pts <= 0):
        raise ValueError("slope fit needs positive eps and error values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([x, np.ones_like(x)])
    (p, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.max(np.abs(y - (p * x + c))))
    return float(p), float(c), residual


@dataclass(frozen=True)
class MeshPolicy:
    """``cells=None`` picks ``max(64, ceil(scale / sqrt(eps_min)))`` (rounded up
    to even)."""

    kind: str = "shishkin"
    cells: int | None = None
    sigma: float = 2.0
    scale: float = 32.0
    min_cells: int = 64

    def cells_for(self, eps_min: float) -> int:
        if self.cells is not None:
            return int(self.cells)
        n = max(self.min_cells, math.ceil(self.scale / math.sqrt(eps_min)))
        return n + (n % 2)

    def build(self, g: MetricGraph, n: int) -> NetworkMesh:
        if self.kind == "shishkin":
            return shishkin_mesh(g, n, self.sigma)
        if self.kind == "uniform":
            return uniform_mesh(g, n)
        raise ValueError(f"unknown mesh kind {self.kind!r}")


@dataclass(frozen=True)
class GridPolicy:
    """``dt=None`` picks ``T / ceil(steps_per_cell * N)``; errors are sampled on
    every ``sample_every``-th step and at the final time. ``sample_every=None``
    aims for about ``target_samples`` samples per run."""

    T: float = 2.0
    dt: float | None = None
    theta: float = 1.0
    steps_per_cell: float = 4.0
    sample_every: int | None = None
    target_samples: int = 1024

    def stride(self, grid: TimeGrid) -> int:
        if self.sample_every is not None:
            return max(1, int(self.sample_every))
        return max(1, grid.steps // self.target_samples)

    def grid_for(self, n: int) -> TimeGrid:
        dt = self.dt if self.dt is not None else self.T / math.ceil(self.steps_per_cell * n)
        return TimeGrid(self.T, dt, self.theta)


@dataclass
class EpsilonResult:
    epsilon: float
    error_plain: float
    error_composite: float
    cells: int
    dt: float
    initial_composite: float
    inner_defect: float
    inflow_defect: float
    outflow_defect: float
    max_mass_residual: float
    min_u: float
    seconds: float
    sup_u: float = math.nan
    inflow_slope: float = math.nan


@dataclass
class RateReport:
    results: list[EpsilonResult]
    slope: float
    intercept: float
    residual: float
    compat_adjustment: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def epsilons(self) -> list[float]:
        return [r.epsilon for r in self.results]

    @property
    def errors(self) -> list[float]:
        return [r.error_plain for r in self.results]

    def partial_slopes(self) -> list[float]:
        """Slope between each epsilon and the previous one (``nan`` for the first)."""
        out = [math.nan]
        for r0, r1 in zip(self.results, self.results[1:]):
            out.append(math.log(r1.error_plain / r0.error_plain) / math.log(r1.epsilon / r0.epsilon))
        return out


def solve_for_epsilon(
    g: MetricGraph,
    bdata: BoundaryData,
    idata: InitialData,
    eps: float,
    n: int,
    mesh_policy: MeshPolicy,
    grid_policy: GridPolicy,
) -> EpsilonResult:
    start = time.perf_counter()
    ge = g.with_epsilon(eps)
    mesh = mesh_policy.build(ge, n)
    grid = grid_policy.grid_for(n)
    op = assemble_cd(ge, mesh)
    exact = ExactTransport(ge, bdata, idata)
    tracker = ErrorTracker(exact, mesh, every=grid_policy.stride(grid), final_time=grid.T)
    traj = integrate_cd(ge, mesh, op, idata, bdata, grid, outputs=[], observer=tracker)
    return EpsilonResult(
        epsilon=eps,
        error_plain=tracker.plain,
        error_composite=tracker.composite,
        cells=n,
        dt=grid.dt,
        initial_composite=tracker.initial_composite,
        inner_defect=tracker.inner_defect,
        inflow_defect=tracker.inflow_defect,
        outflow_defect=tracker.outflow_defect,
        max_mass_residual=max((d.mass_residual for d in traj.diagnostics), default=0.0),
        min_u=min(d.min_u for d in traj.diagnostics),
        seconds=time.perf_counter() - start,
        sup_u=tracker.sup_u,
        inflow_slope=tracker.inflow_slope,
    )


def _solve_star(args):
    return solve_for_epsilon(*args)


def rate_study(
    g: MetricGraph,
    bdata: BoundaryData,
    idata: InitialData,
    epsilons: Sequence[float],
    mesh_policy: MeshPolicy = MeshPolicy(),
    grid_policy: GridPolicy = GridPolicy(),
    jobs: int = 1,
) -> RateReport:
    """Solve the diffusive problem for each epsilon and compare against the
    exact transport solution.

    ``epsilons`` must hold at least four strictly decreasing values spanning two
    decades. Initial data are made compatible first; the size of that
    adjustment is reported. One mesh size (from the smallest epsilon) is used
    for the whole study.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 4:
        raise ValueError("rate study needs at least 4 epsilon values")
    if any(e1 >= e0 for e0, e1 in zip(eps, eps[1:])):
        raise ValueError("epsilon values must be strictly decreasing")
    if eps[0] / eps[-1] < 100 * (1 - 1e-12):
        raise ValueError("epsilon values must span at least two decades")
    classify_vertices(g)
    idata, adjust = make_compatible(g, idata, bdata)
    if adjust > 0:
        log.info("initial data adjusted by up to %.3g for compatibility", adjust)

    n = mesh_policy.cells_for(eps[-1])
    tasks = [(g, bdata, idata, e, n, mesh_policy, grid_policy) for e in eps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_star, tasks))
    else:
        results = [_solve_star(t) for t in tasks]

    warnings = []
    errs = [r.error_plain for r in results]
    if any(e1 > e0 for e0, e1 in zip(errs, errs[1:])):
        warnings.append("errors are not monotone in epsilon; the mesh may not resolve the study")
    if any(not r.error_plain > 0 for r in results):
        raise ValueError("zero error encountered; slope cannot be fitted")
    p, c, res = fit_slope([(r.epsilon, r.error_plain) for r in results])
    for w in warnings:
        log.warning(w)
    return RateReport(results, p, c, res, compat_adjustment=adjust, warnings=warnings)
