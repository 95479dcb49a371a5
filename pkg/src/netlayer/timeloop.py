"""Theta-scheme time stepping for the convection-diffusion system with per-step
mass, energy and positivity diagnostics."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cdsolve import DiscreteOperator, SolverError, lu_solve_checked
from .fields import BoundaryData, DiscreteField, InitialData, compatibility_defects
from .graph import MetricGraph, classify_vertices
from .mesh import NetworkMesh

log = logging.getLogger(__name__)

Observer = Callable[[float, DiscreteField], None]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    dt: float
    theta: float = 1.0

    def __post_init__(self):
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def times(self) -> np.ndarray:
        t = np.arange(self.steps + 1, dtype=float) * self.dt
        t[-1] = self.T
        return t


@dataclass
class StepDiagnostics:
    step: int
    t: float
    mass: float
    mass_residual: float
    energy: float
    energy_defect: float
    min_u: float
    jensen_min: float
    influx: float = 0.0


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    snapshots: list[DiscreteField] = field(default_factory=list)
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    theta: float = 1.0
    initial_layer: bool = False

    def snapshot_at(self, t: float) -> DiscreteField:
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.snapshots[k]


def _snapshot_steps(grid: TimeGrid, outputs: Sequence[float] | None) -> set[int]:
    times = grid.times()
    if outputs is None:
        return {grid.steps}
    steps = set()
    for t in outputs:
        if t < -1e-12 or t > grid.T * (1 + 1e-12):
            raise ValueError(f"output time {t} outside [0, {grid.T}]")
        steps.add(int(np.searchsorted(times, t - 1e-9 * grid.T)))
    return steps


def jensen_gap(g: MetricGraph, mesh: NetworkMesh, u: np.ndarray, cls=None) -> float:
    """Smallest ``sum_in b |u^e(v)|^2 - sum_out b |u(v)|^2`` over inner vertices,
    with ``u^e(v)`` the last cell of each incoming edge and ``u(v)`` the vertex
    trace. ``nan`` when the graph has no inner vertices."""
    cls = cls or classify_vertices(g)
    gaps = []
    for v in cls.inner:
        inflow = sum(
            g.edge(e).b * u[mesh.cell_slice(e).stop - 1] ** 2 for e in cls.incoming[v]
        )
        trace = u[mesh.vertex_index(v)]
        outflow = sum(g.edge(e).b for e in cls.outgoing[v]) * trace**2
        gaps.append(inflow - outflow)
    return min(gaps) if gaps else math.nan


def consistent_initial_state(op: DiscreteOperator, idata: InitialData, bdata: BoundaryData):
    """Cells from ``u_0`` at cell centers, boundary traces from ``g(0)`` and inner
    traces from the discrete junction flux balance."""
    g, mesh = op.graph, op.mesh
    u = np.zeros(mesh.n_unknowns)
    for e in g.edges:
        u[mesh.cell_slice(e.id)] = idata(e.id, mesh.edge_meshes[e.id].centers)
    u[op.boundary] = op.boundary_values(bdata, 0.0)
    if op.inner.size:
        a = op.stiffness()
        diag = a.diagonal()[op.inner]
        # inner rows only couple to their own trace and to cells, so this is exact
        u[op.inner] = 0.0
        u[op.inner] = -(a[op.inner] @ u) / diag
    return u


def integrate_cd(
    g: MetricGraph,
    mesh: NetworkMesh,
    op: DiscreteOperator,
    idata: InitialData,
    bdata: BoundaryData,
    grid: TimeGrid,
    outputs: Sequence[float] | None = None,
    observer: Observer | None = None,
) -> Trajectory:
    """Integrate ``M u' + A u = 0`` with the theta-scheme.

    Cell rows use ``(M/dt + theta A) u^{n+1} = (M/dt - (1-theta) A) u^n``; the
    junction and Dirichlet rows are algebraic and always imposed at the new time
    level. Snapshots are kept for ``outputs`` (default: final time only);
    ``observer(t, field)`` is called at every time level including ``t = 0``.
    """
    cls = classify_vertices(g)
    bdata.check_covers(cls.boundary, grid.T)
    idata.check_spans(g)
    defects = compatibility_defects(g, idata, bdata)
    initial_layer = max(defects.values()) > 1e-10
    if initial_layer:
        worst = max(defects, key=defects.get)
        log.warning("initial data incompatible at %s (defect %.3g)", worst, defects[worst])

    theta = grid.theta
    times = grid.times()
    keep = _snapshot_steps(grid, outputs)
    a_full = op.stiffness()
    free, bnd = op.free, op.boundary
    n_cells = mesh.n_cells
    mass_diag = op.mass
    theta_rows = np.where(np.arange(mesh.n_unknowns) < n_cells, theta, 1.0)[free]
    a_ff = a_full[free][:, free]
    a_fb = a_full[free][:, bnd]
    a_cells = a_full[:n_cells]

    factor_cache: dict[float, tuple] = {}

    def factor(dt):
        key = round(dt, 15)
        if key not in factor_cache:
            k = sp.diags(mass_diag[free] / dt) + sp.diags(theta_rows) @ a_ff
            k = sp.csc_matrix(k)
            try:
                factor_cache[key] = (spla.splu(k), k)
            except RuntimeError as exc:
                raise SolverError(f"singular time-step matrix: {exc}") from exc
        return factor_cache[key]

    u = consistent_initial_state(op, idata, bdata)
    traj = Trajectory(theta=theta, initial_layer=initial_layer)

    def record(step, t, u, prev):
        mass = float(mass_diag @ u)
        energy = 0.5 * float(mass_diag @ (u * u))
        flux = op.boundary_influx(u)
        influx = float(flux.sum())
        if prev is None:
            mres, edef = 0.0, 0.0
        else:
            dt = t - prev.t
            expected = dt * (theta * influx + (1 - theta) * prev.influx)
            scale = max(abs(mass), abs(prev.mass), dt * float(np.abs(flux).sum()))
            mres = abs(mass - prev.mass - expected) / scale if scale > 0 else 0.0
            edef = energy - prev.energy
        d = StepDiagnostics(
            step=step,
            t=float(t),
            mass=mass,
            mass_residual=mres,
            energy=energy,
            energy_defect=edef,
            min_u=float(u.min()),
            jensen_min=jensen_gap(g, mesh, u, cls),
            influx=influx,
        )
        traj.diagnostics.append(d)
        if step in keep:
            traj.times.append(float(t))
            traj.snapshots.append(DiscreteField(mesh, u.copy()))
        if observer is not None:
            observer(float(t), DiscreteField(mesh, u))
        return d

    prev = record(0, 0.0, u, None)
    for n in range(1, len(times)):
        t0, t1 = times[n - 1], times[n]
        dt = t1 - t0
        lu, k = factor(dt)
        g_new = op.boundary_values(bdata, t1)
        rhs_full = np.zeros(mesh.n_unknowns)
        rhs_full[:n_cells] = mass_diag[:n_cells] / dt * u[:n_cells]
        if theta < 1.0:
            rhs_full[:n_cells] -= (1.0 - theta) * (a_cells @ u)
        rhs = rhs_full[free] - theta_rows * (a_fb @ g_new)
        u_new = np.empty_like(u)
        u_new[bnd] = g_new
        u_new[free] = lu_solve_checked(lu, k, rhs)
        u = u_new
        prev = record(n, t1, u, prev)
    return traj


def mass_balance_residual(traj: Trajectory) -> np.ndarray:
    """Relative per-step defect of the discrete balance
    ``mass^{n+1} - mass^n = dt (theta F^{n+1} + (1-theta) F^n)`` with ``F`` the
    total boundary influx computed from the scheme's own fluxes."""
    return np.array([d.mass_residual for d in traj.diagnostics[1:]])


def energy_residual(traj: Trajectory) -> np.ndarray:
    """``E^{n+1} - E^n`` per step, ``E = 1/2 sum a h u^2``."""
    return np.array([d.energy_defect for d in traj.diagnostics[1:]])


def maximum_principle_check(traj: Trajectory) -> float:
    """Minimum over all cells, traces and time levels."""
    return min(d.min_u for d in traj.diagnostics)
