"""Finite-volume discretization of ``a u_t + b u_x - eps u_xx = 0`` on a network.

Sign convention: the assembled matrix ``A`` is the positive stiffness, so the
semi-discrete system reads ``M du/dt + A u = 0`` on cell rows with
``M = diag(a h)``. Face fluxes ``F = b u - eps u_x`` are fully upwinded for
convection and use two-point differences for diffusion; at an edge end the
difference runs over the half cell to the shared vertex trace.

Row layout of ``A``:

* cell rows: ``F_{i+1} - F_i``;
* inner-vertex rows: net flux from the vertex into its incident edges,
  ``-sum_e n^e(v) F^e(v)``, which must vanish;
* boundary-vertex rows: identity, paired with ``g^v(t)`` on the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import BoundaryData, DiscreteField
from .graph import GraphError, MetricGraph, classify_vertices
from .mesh import NetworkMesh

SOLVE_RTOL = 1e-12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    graph: MetricGraph
    mesh: NetworkMesh
    convection: sp.csr_matrix
    diffusion: sp.csr_matrix
    vertex_flux: sp.csr_matrix
    mass: np.ndarray
    inner: np.ndarray
    boundary: np.ndarray
    boundary_vertices: tuple[str, ...]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Full operator including Dirichlet identity rows."""
        return self._matrix

    def __post_init__(self):
        a = (self.convection + self.diffusion).tolil()
        for k in self.boundary:
            a.rows[k] = [int(k)]
            a.data[k] = [1.0]
        object.__setattr__(self, "_matrix", a.tocsr())
        n = self.mesh.n_unknowns
        free = np.ones(n, dtype=bool)
        free[self.boundary] = False
        object.__setattr__(self, "free", np.flatnonzero(free))
        object.__setattr__(self, "_boundary_flux", self.vertex_flux[self.boundary].tocsr())

    @property
    def cells(self) -> slice:
        return slice(0, self.mesh.n_cells)

    def boundary_values(self, bdata: BoundaryData, t: float) -> np.ndarray:
        return np.array([float(bdata(v, t)) for v in self.boundary_vertices])

    def rhs(self, bdata: BoundaryData, t: float) -> np.ndarray:
        r = np.zeros(self.mesh.n_unknowns)
        r[self.boundary] = self.boundary_values(bdata, t)
        return r

    def stiffness(self) -> sp.csr_matrix:
        """Convection plus diffusion without the Dirichlet identity rows."""
        return (self.convection + self.diffusion).tocsr()

    def boundary_influx(self, u: np.ndarray) -> np.ndarray:
        """Flux entering the network at every boundary vertex."""
        return self._boundary_flux @ u


def assemble_cd(g: MetricGraph, mesh: NetworkMesh) -> DiscreteOperator:
    if not mesh.matches(g):
        raise GraphError("mesh does not match graph (edges, vertices or lengths differ)")
    cls = classify_vertices(g)
    n = mesh.n_unknowns
    conv = ([], [], [])
    diff = ([], [], [])
    vflux = ([], [], [])

    def add(target, row, col, val):
        target[0].append(row)
        target[1].append(col)
        target[2].append(val)

    for e in g.edges:
        em = mesh.edge_meshes[e.id]
        start = mesh.cell_slice(e.id).start
        h = em.widths
        c = em.centers
        nc = em.n_cells
        tail = mesh.vertex_index(e.tail)
        head = mesh.vertex_index(e.head)
        b, eps = e.b, e.epsilon

        # face fluxes as {unknown: coefficient} for the convective and diffusive parts
        faces = []
        k0 = 2.0 * eps / h[0]
        faces.append(({tail: b}, {start: -k0, tail: k0}))
        for j in range(1, nc):
            kj = eps / (c[j] - c[j - 1])
            faces.append(({start + j - 1: b}, {start + j: -kj, start + j - 1: kj}))
        kn = 2.0 * eps / h[-1]
        faces.append(({start + nc - 1: b}, {head: -kn, start + nc - 1: kn}))

        for i in range(nc):
            row = start + i
            for sign, (fc, fd) in ((1.0, faces[i + 1]), (-1.0, faces[i])):
                for col, val in fc.items():
                    add(conv, row, col, sign * val)
                for col, val in fd.items():
                    add(diff, row, col, sign * val)
        for vrow, sign, (fc, fd) in ((tail, 1.0, faces[0]), (head, -1.0, faces[-1])):
            for col, val in fc.items():
                add(vflux, vrow, col, sign * val)
                add(conv, vrow, col, sign * val)
            for col, val in fd.items():
                add(vflux, vrow, col, sign * val)
                add(diff, vrow, col, sign * val)

    def build(parts):
        return sp.csr_matrix((parts[2], (parts[0], parts[1])), shape=(n, n))

    inner = np.array([mesh.vertex_index(v) for v in cls.inner], dtype=int)
    boundary = np.array([mesh.vertex_index(v) for v in cls.boundary], dtype=int)
    conv_m, diff_m = build(conv), build(diff)
    # boundary-vertex rows of the stiffness carry no equation; the flux there is
    # kept separately in vertex_flux
    keep = np.ones(n)
    keep[boundary] = 0.0
    mask = sp.diags(keep)
    mass = np.zeros(n)
    for e in g.edges:
        mass[mesh.cell_slice(e.id)] = e.a * mesh.edge_meshes[e.id].widths

    return DiscreteOperator(
        graph=g,
        mesh=mesh,
        convection=(mask @ conv_m).tocsr(),
        diffusion=(mask @ diff_m).tocsr(),
        vertex_flux=build(vflux),
        mass=mass,
        inner=inner,
        boundary=boundary,
        boundary_vertices=cls.boundary,
    )


def apply_operator(
    op: DiscreteOperator, u: DiscreteField, t: float, bdata: BoundaryData
) -> DiscreteField:
    """Residual ``A u - r(t)``; zero rows mean the cell balances, junction
    conditions and boundary values are all satisfied."""
    if u.mesh is not op.mesh and u.values.shape != (op.mesh.n_unknowns,):
        raise ValueError("field does not match operator shape")
    return DiscreteField(op.mesh, op.matrix @ u.values - op.rhs(bdata, t))


def solve_checked(matrix: sp.spmatrix, rhs: np.ndarray, rtol: float = SOLVE_RTOL) -> np.ndarray:
    """Sparse direct solve with one step of iterative refinement if needed."""
    matrix = sp.csc_matrix(matrix)
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"singular system: {exc}") from exc
    return lu_solve_checked(lu, matrix, rhs, rtol)


def lu_solve_checked(lu, matrix, rhs, rtol: float = SOLVE_RTOL) -> np.ndarray:
    x = lu.solve(rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    for _ in range(2):
        res = rhs - matrix @ x
        if np.linalg.norm(res) <= rtol * scale:
            return x
        x = x + lu.solve(res)
    res = np.linalg.norm(rhs - matrix @ x)
    if not np.isfinite(res) or res > rtol * scale * 10:
        raise SolverError(f"linear solve reached relative residual {res / scale:.3g}")
    return x


def steady_solve(
    g: MetricGraph, mesh: NetworkMesh, boundary_values, op: DiscreteOperator | None = None
) -> DiscreteField:
    """Stationary solution with constant Dirichlet values at boundary vertices.

    ``boundary_values`` maps boundary vertex ids to numbers (or is a
    :class:`BoundaryData`, evaluated at ``t = 0``).
    """
    if op is None:
        op = assemble_cd(g, mesh)
    if isinstance(boundary_values, BoundaryData):
        gvals = op.boundary_values(boundary_values, 0.0)
    else:
        gvals = np.array([float(boundary_values[v]) for v in op.boundary_vertices])
    a = op.stiffness()
    free = op.free
    u = np.zeros(mesh.n_unknowns)
    u[op.boundary] = gvals
    rhs = -(a[free][:, op.boundary] @ gvals)
    u[free] = solve_checked(a[free][:, free], rhs)
    return DiscreteField(mesh, u)


def dissipation_form(op: DiscreteOperator, u: np.ndarray) -> float:
    """Discrete ``(A_eps z, z)`` in the a-weighted inner product, i.e.
    ``-z^T A z`` over cell and inner-vertex rows. Nonpositive when the boundary
    traces of ``z`` vanish."""
    z = np.asarray(u, dtype=float)
    return float(-(z @ (op.stiffness() @ z)))
