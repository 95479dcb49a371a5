"""Metric graphs: directed edges with lengths and per-edge coefficients.

Every edge ``e = (tail, head)`` is identified with the interval ``(0, length)``;
``x = 0`` sits at the tail and ``x = length`` at the head. Flow runs from tail to
head, so ``b > 0`` is required on every edge.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace

FLOW_TOLERANCE = 1e-12


class GraphError(ValueError):
    """Raised for structurally invalid or inadmissible graph descriptions."""


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float
    a: float = 1.0
    b: float = 1.0
    epsilon: float = 1.0

    @property
    def speed(self) -> float:
        return self.b / self.a

    @property
    def travel_time(self) -> float:
        return self.a * self.length / self.b

    def incidence(self, v: str) -> int:
        """Incidence number: -1 at the tail, +1 at the head, 0 elsewhere."""
        if v == self.tail:
            return -1
        if v == self.head:
            return 1
        return 0


@dataclass(frozen=True)
class VertexClassification:
    inner: tuple[str, ...]
    boundary: tuple[str, ...]
    inflow: tuple[str, ...]
    outflow: tuple[str, ...]
    incident: Mapping[str, tuple[str, ...]]
    incoming: Mapping[str, tuple[str, ...]]
    outgoing: Mapping[str, tuple[str, ...]]


@dataclass(frozen=True)
class MetricGraph:
    """Finite, connected, directed graph with edge lengths and coefficients.

    Instances are immutable and validated on construction; use
    :func:`build_graph` to create one from a plain description.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    _by_id: Mapping[str, Edge] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {e.id: e for e in self.edges}
        object.__setattr__(self, "_by_id", by_id)

    def edge(self, edge_id: str) -> Edge:
        return self._by_id[edge_id]

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    def incident_edges(self, v: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.incidence(v) != 0)

    def with_epsilon(self, epsilon: float) -> MetricGraph:
        """Copy of the graph with the same diffusion coefficient on every edge."""
        _check_epsilon(epsilon, "<all>")
        return MetricGraph(
            self.vertices, tuple(replace(e, epsilon=float(epsilon)) for e in self.edges)
        )

    @property
    def max_flow_rate(self) -> float:
        return max(e.b for e in self.edges)

    @property
    def min_travel_time(self) -> float:
        return min(e.travel_time for e in self.edges)


def _check_epsilon(eps: float, edge_id: str) -> None:
    if not (0.0 < eps <= 1.0) or not math.isfinite(eps):
        raise GraphError(f"epsilon out of range (0, 1] on edge {edge_id}: {eps!r}")


def build_graph(vertices: Iterable[str], edges: Iterable[Mapping]) -> MetricGraph:
    """Validate a raw graph description and return a :class:`MetricGraph`.

    ``edges`` is an iterable of mappings with keys ``id``, ``tail``, ``head``,
    ``length`` and optionally ``a``, ``b``, ``epsilon``. Vertex and edge ids are
    opaque strings; both are stored in lexicographic order.
    """
    verts = [str(v) for v in vertices]
    if len(set(verts)) != len(verts):
        dup = sorted({v for v in verts if verts.count(v) > 1})
        raise GraphError(f"duplicate vertex id(s): {', '.join(dup)}")
    if not verts:
        raise GraphError("graph has no vertices")
    vset = set(verts)

    parsed: list[Edge] = []
    seen: set[str] = set()
    for raw in edges:
        eid = str(raw["id"])
        if eid in seen:
            raise GraphError(f"duplicate edge id: {eid}")
        seen.add(eid)
        tail, head = str(raw["tail"]), str(raw["head"])
        for end in (tail, head):
            if end not in vset:
                raise GraphError(f"edge {eid} references unknown vertex {end}")
        if tail == head:
            raise GraphError(f"edge {eid} is a self-loop at {tail}")
        e = Edge(
            id=eid,
            tail=tail,
            head=head,
            length=float(raw["length"]),
            a=float(raw.get("a", 1.0)),
            b=float(raw.get("b", 1.0)),
            epsilon=float(raw.get("epsilon", 1.0)),
        )
        for name in ("length", "a", "b"):
            val = getattr(e, name)
            if not (val > 0.0) or not math.isfinite(val):
                raise GraphError(f"nonpositive {name} on edge {eid}: {val!r}")
        _check_epsilon(e.epsilon, eid)
        parsed.append(e)
    if not parsed:
        raise GraphError("graph has no edges")

    _check_connected(verts, parsed)
    return MetricGraph(tuple(sorted(verts)), tuple(sorted(parsed, key=lambda e: e.id)))


def _check_connected(vertices: list[str], edges: list[Edge]) -> None:
    adj: dict[str, set[str]] = {v: set() for v in vertices}
    for e in edges:
        adj[e.tail].add(e.head)
        adj[e.head].add(e.tail)
    start = vertices[0]
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != len(vertices):
        missing = sorted(set(vertices) - seen)
        raise GraphError(f"graph is disconnected; unreachable from {start}: {', '.join(missing)}")


def validate_flow_conservation(g: MetricGraph) -> dict[str, float]:
    """Signed flow sum ``sum_e b^e n^e(v)`` at every inner vertex.

    Returns an empty mapping when the graph has no inner vertices. Whether the
    residuals are small enough is decided by :func:`is_admissible`.
    """
    residual = {}
    for v in g.vertices:
        incident = g.incident_edges(v)
        if len(incident) >= 2:
            residual[v] = math.fsum(e.b * e.incidence(v) for e in incident)
    return residual


def is_admissible(g: MetricGraph, residual: Mapping[str, float] | None = None) -> bool:
    if residual is None:
        residual = validate_flow_conservation(g)
    bound = FLOW_TOLERANCE * g.max_flow_rate
    return all(abs(r) <= bound for r in residual.values())


def require_admissible(g: MetricGraph) -> None:
    residual = validate_flow_conservation(g)
    if not is_admissible(g, residual):
        worst = max(residual, key=lambda v: abs(residual[v]))
        raise GraphError(
            f"flow conservation violated at vertex {worst}: "
            f"sum b*n = {residual[worst]:.6g}"
        )


def classify_vertices(g: MetricGraph) -> VertexClassification:
    incident: dict[str, tuple[str, ...]] = {}
    incoming: dict[str, tuple[str, ...]] = {}
    outgoing: dict[str, tuple[str, ...]] = {}
    for v in g.vertices:
        incident[v] = tuple(e.id for e in g.edges if e.incidence(v) != 0)
        incoming[v] = tuple(e.id for e in g.edges if e.head == v)
        outgoing[v] = tuple(e.id for e in g.edges if e.tail == v)

    inner, boundary, inflow, outflow = [], [], [], []
    for v in g.vertices:
        if len(incident[v]) >= 2:
            if not incoming[v] or not outgoing[v]:
                kind = "outflow" if not incoming[v] else "inflow"
                raise GraphError(
                    f"inner vertex {v} has only {kind} edges; flow cannot be conserved"
                )
            inner.append(v)
        else:
            boundary.append(v)
            # a boundary vertex has exactly one incident edge
            (inflow if outgoing[v] else outflow).append(v)

    return VertexClassification(
        inner=tuple(inner),
        boundary=tuple(boundary),
        inflow=tuple(inflow),
        outflow=tuple(outflow),
        incident=incident,
        incoming=incoming,
        outgoing=outgoing,
    )
