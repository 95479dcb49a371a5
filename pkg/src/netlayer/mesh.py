"""Per-edge cell partitions and the global unknown numbering.

Unknowns are ordered as all cells of the first edge, then all cells of the
second edge, and so on (edges in canonical order), followed by one trace
unknown per vertex (vertices in canonical order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Edge, MetricGraph


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EdgeMesh:
    edge_id: str
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError(f"edge {self.edge_id}: need at least one cell")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise MeshError(f"edge {self.edge_id}: cell boundaries must increase from 0")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


@dataclass(frozen=True, eq=False)
class NetworkMesh:
    edge_meshes: dict[str, EdgeMesh]
    vertices: tuple[str, ...]
    coupling: dict[str, tuple[tuple[str, str], ...]]

    def __post_init__(self):
        offsets, start = {}, 0
        for eid, em in self.edge_meshes.items():
            offsets[eid] = start
            start += em.n_cells
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_n_cells", start)
        object.__setattr__(
            self, "_vertex_index", {v: start + k for k, v in enumerate(self.vertices)}
        )

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(self.edge_meshes)

    @property
    def n_cells(self) -> int:
        return self._n_cells

    @property
    def n_unknowns(self) -> int:
        return self._n_cells + len(self.vertices)

    def cell_slice(self, edge_id: str) -> slice:
        start = self._offsets[edge_id]
        return slice(start, start + self.edge_meshes[edge_id].n_cells)

    def vertex_index(self, v: str) -> int:
        return self._vertex_index[v]

    def cell_widths(self) -> np.ndarray:
        return np.concatenate([em.widths for em in self.edge_meshes.values()])

    def matches(self, g: MetricGraph) -> bool:
        if self.edge_ids != g.edge_ids or self.vertices != g.vertices:
            return False
        return all(
            math.isclose(self.edge_meshes[e.id].length, e.length, rel_tol=1e-12)
            for e in g.edges
        )


def _network_mesh(g: MetricGraph, nodes_for) -> NetworkMesh:
    meshes = {e.id: EdgeMesh(e.id, nodes_for(e)) for e in g.edges}
    coupling = {}
    for v in g.vertices:
        ends = []
        for e in g.edges:
            if e.tail == v:
                ends.append((e.id, "tail"))
            elif e.head == v:
                ends.append((e.id, "head"))
        coupling[v] = tuple(ends)
    return NetworkMesh(meshes, g.vertices, coupling)


def _uniform_nodes(length: float, n: int) -> np.ndarray:
    nodes = np.linspace(0.0, length, n + 1)
    nodes[-1] = length
    return nodes


def uniform_mesh(g: MetricGraph, n: int) -> NetworkMesh:
    """``n`` equal cells on every edge."""
    if n < 2:
        raise MeshError(f"need at least 2 cells per edge, got {n}")
    return _network_mesh(g, lambda e: _uniform_nodes(e.length, n))


def shishkin_transition(e: Edge, n: int, sigma: float = 2.0) -> float:
    """Width of the fine zone at the outflow end: min(l/2, sigma*(eps/b)*ln n)."""
    return min(0.5 * e.length, sigma * (e.epsilon / e.b) * math.log(n))


def shishkin_mesh(g: MetricGraph, n: int, sigma: float = 2.0) -> NetworkMesh:
    """Piecewise-uniform mesh refined towards the head of every edge.

    Half the cells cover ``[0, l - tau]`` and half cover ``[l - tau, l]``, with
    ``tau`` from :func:`shishkin_transition`.
    """
    if n < 4 or n % 2:
        raise MeshError(f"Shishkin mesh needs an even cell count >= 4, got {n}")
    if not sigma > 0:
        raise MeshError(f"sigma must be positive, got {sigma}")

    def nodes(e: Edge) -> np.ndarray:
        tau = shishkin_transition(e, n, sigma)
        half = n // 2
        split = e.length - tau
        coarse = np.linspace(0.0, split, half + 1)
        fine = split + tau * np.linspace(0.0, 1.0, half + 1)[1:]
        out = np.concatenate([coarse, fine])
        out[-1] = e.length
        return out

    return _network_mesh(g, nodes)
