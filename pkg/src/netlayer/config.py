"""Run configuration: YAML parsing with line-anchored validation errors and a
canonical dictionary form used for the manifest echo.

Layout::

    graph:  {vertices: [...], epsilon: 0.1, edges: [{id, tail, head, length, a, b, epsilon}]}
    data:   {boundary: {vertex: [[t, g], ...]}, initial: {edge: [[x, u0], ...]}}
    mesh:   {kind: uniform|shishkin, cells: 64, sigma: 2.0}
    time:   {T: 2.0, dt: 0.01, theta: 1.0, outputs: [1.0, 2.0]}
    transport: {mode: upwind|exact}
    study:  {epsilons: "2^-4..2^-12", slope_band: [0.4, 0.65], jobs: 1, ...}
    output: results/

A scalar in place of a table means a constant. A top-level ``run`` mapping
(written into manifests) is accepted and ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .fields import BoundaryData, DataError, InitialData, Table, compatibility_defects
from .graph import GraphError, MetricGraph, build_graph, classify_vertices, require_admissible


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


SECTIONS = {
    "graph": {"vertices", "edges", "epsilon"},
    "data": {"boundary", "initial"},
    "mesh": {"kind", "cells", "sigma"},
    "time": {"T", "dt", "theta", "outputs"},
    "transport": {"mode"},
    "study": {
        "epsilons",
        "slope_band",
        "jobs",
        "cells",
        "scale",
        "min_cells",
        "steps_per_cell",
        "sample_every",
    },
    "output": None,
    "run": None,
}
EDGE_KEYS = {"id", "tail", "head", "length", "a", "b", "epsilon"}
MESH_KINDS = ("uniform", "shishkin")
TRANSPORT_MODES = ("upwind", "exact")


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "uniform"
    cells: int = 64
    sigma: float = 2.0


@dataclass(frozen=True)
class TimeSpec:
    T: float = 1.0
    dt: float | None = None
    theta: float = 1.0
    outputs: tuple[float, ...] | None = None

    def step(self, cells: int) -> float:
        return self.dt if self.dt is not None else self.T / (4 * cells)

    def output_times(self) -> tuple[float, ...]:
        return self.outputs if self.outputs is not None else (self.T,)


@dataclass(frozen=True)
class StudySpec:
    epsilons: tuple[float, ...] = ()
    slope_band: tuple[float, float] = (0.4, 0.65)
    jobs: int = 1
    cells: int | None = None
    scale: float = 32.0
    min_cells: int = 64
    steps_per_cell: float = 4.0
    sample_every: int | None = None


@dataclass(frozen=True, eq=False)
class RunConfig:
    graph: MetricGraph
    boundary: BoundaryData
    initial: InitialData
    mesh: MeshSpec = MeshSpec()
    time: TimeSpec = TimeSpec()
    transport_mode: str = "upwind"
    study: StudySpec = StudySpec()
    output: str = "netlayer-out"
    graph_epsilon: float | None = None
    source: str = "<config>"
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        """Canonical nested form; :func:`parse_config_text` of its YAML dump
        reproduces an equivalent configuration."""
        g = self.graph
        graph: dict[str, Any] = {"vertices": list(g.vertices)}
        if self.graph_epsilon is not None:
            graph["epsilon"] = self.graph_epsilon
        graph["edges"] = [
            {"id": e.id, "tail": e.tail, "head": e.head, "length": e.length, "a": e.a, "b": e.b,
             "epsilon": e.epsilon}
            for e in g.edges
        ]
        data: dict[str, Any] = {
            "boundary": {v: self.boundary.tables[v].pairs() for v in sorted(self.boundary.tables)}
        }
        data["initial"] = {e: self.initial.tables[e].pairs() for e in sorted(self.initial.tables)}
        time: dict[str, Any] = {"T": self.time.T, "theta": self.time.theta}
        if self.time.dt is not None:
            time["dt"] = self.time.dt
        if self.time.outputs is not None:
            time["outputs"] = list(self.time.outputs)
        out: dict[str, Any] = {
            "graph": graph,
            "data": data,
            "mesh": {"kind": self.mesh.kind, "cells": self.mesh.cells, "sigma": self.mesh.sigma},
            "time": time,
            "transport": {"mode": self.transport_mode},
        }
        st = self.study
        study: dict[str, Any] = {
            "slope_band": list(st.slope_band),
            "jobs": st.jobs,
            "scale": st.scale,
            "min_cells": st.min_cells,
            "steps_per_cell": st.steps_per_cell,
        }
        if st.epsilons:
            study["epsilons"] = list(st.epsilons)
        if st.cells is not None:
            study["cells"] = st.cells
        if st.sample_every is not None:
            study["sample_every"] = st.sample_every
        out["study"] = study
        out["output"] = self.output
        return out

    def replace(self, **changes) -> RunConfig:
        return replace(self, **changes)


_POWER = re.compile(r"^\s*([0-9.eE+-]+)\s*\^\s*([+-]?\d+)\s*$")


def parse_epsilon(token) -> float:
    """A number or ``base^power`` such as ``2^-4``."""
    if isinstance(token, bool):
        raise ValueError(f"not a number: {token!r}")
    if isinstance(token, (int, float)):
        return float(token)
    m = _POWER.match(str(token))
    if m:
        return float(m.group(1)) ** int(m.group(2))
    return float(str(token))


def parse_epsilons(spec) -> tuple[float, ...]:
    """Epsilon lists from ``"2^-4..2^-12"`` (every integer power in between),
    ``"0.1,0.01"`` or a YAML list of numbers / powers."""
    if isinstance(spec, (list, tuple)):
        return tuple(parse_epsilon(t) for t in spec)
    text = str(spec).strip()
    if ".." in text:
        lo, hi = (s.strip() for s in text.split("..", 1))
        m0, m1 = _POWER.match(lo), _POWER.match(hi)
        if not (m0 and m1) or float(m0.group(1)) != float(m1.group(1)):
            raise ValueError(f"range {text!r} must read base^p..base^q with one base")
        base, p, q = float(m0.group(1)), int(m0.group(2)), int(m1.group(2))
        step = 1 if q >= p else -1
        return tuple(base**k for k in range(p, q + step, step))
    return tuple(parse_epsilon(t) for t in text.split(",") if t.strip())


class _Lines:
    """Line numbers (1-based) of every key path in a YAML document."""

    def __init__(self, node):
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = k.value
                self.lines[path + (key,)] = k.start_mark.line + 1
                self._walk(v, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def __call__(self, *path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)


def load_yaml(text: str, source: str) -> tuple[dict, _Lines]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", source, line) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}", source) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    return data, _Lines(node)


def _mentioned(message: str, keys) -> tuple[str, ...]:
    """The first id in ``keys`` named in ``message``, for anchoring errors."""
    for k in keys:
        if re.search(rf"\b{re.escape(str(k))}\b", message):
            return (str(k),)
    return ()


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("config file not found", str(p)) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from exc
    return parse_config_text(text, str(p))


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture, e.g. ``fixture_path("fig1")``."""
    ref = resources.files("netlayer") / "fixtures" / f"{name}.yaml"
    p = Path(str(ref))
    if not p.is_file():
        raise ConfigError(f"no shipped fixture named {name!r}", name)
    return p


def fixture_names() -> list[str]:
    root = Path(str(resources.files("netlayer") / "fixtures"))
    return sorted(p.stem for p in root.glob("*.yaml"))


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    raw, at = load_yaml(text, source)

    def fail(msg, *path):
        raise ConfigError(msg, source, at(*path))

    for key in raw:
        if key not in SECTIONS:
            fail(f"unknown key {key!r}", key)
    for sec, allowed in SECTIONS.items():
        if allowed is None or sec not in raw:
            continue
        body = raw[sec]
        if body is None:
            raw[sec] = body = {}
        if not isinstance(body, dict):
            fail(f"section {sec!r} must be a mapping", sec)
        for key in body:
            if key not in allowed:
                fail(f"unknown key {sec}.{key}", sec, key)

    def number(value, *path, positive=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"{'.'.join(map(str, path))} must be a number, got {value!r}", *path)
        if integer and (not float(value).is_integer()):
            fail(f"{'.'.join(map(str, path))} must be an integer", *path)
        value = float(value)
        if not math.isfinite(value) or (positive and value <= 0):
            fail(f"{'.'.join(map(str, path))} must be {'positive' if positive else 'finite'}", *path)
        return int(value) if integer else value

    # graph
    if "graph" not in raw:
        fail("missing section 'graph'")
    graw = raw["graph"]
    verts = graw.get("vertices")
    if not isinstance(verts, list) or not verts:
        fail("graph.vertices must be a non-empty list", "graph", "vertices")
    edges = graw.get("edges")
    if not isinstance(edges, list) or not edges:
        fail("graph.edges must be a non-empty list", "graph", "edges")
    g_eps = graw.get("epsilon")
    if g_eps is not None:
        g_eps = number(g_eps, "graph", "epsilon")
    edge_line: dict[str, int | None] = {}
    prepared = []
    for i, e in enumerate(edges):
        if not isinstance(e, dict):
            fail("each edge must be a mapping", "graph", "edges", i)
        for key in e:
            if key not in EDGE_KEYS:
                fail(f"unknown edge key {key!r}", "graph", "edges", i, key)
        for key in ("id", "tail", "head", "length"):
            if key not in e:
                fail(f"edge is missing {key!r}", "graph", "edges", i)
        item = {k: str(e[k]) for k in ("id", "tail", "head")}
        for key in ("length", "a", "b", "epsilon"):
            if key in e:
                item[key] = number(e[key], "graph", "edges", i, key)
        if "epsilon" not in item and g_eps is not None:
            item["epsilon"] = g_eps
        edge_line[item["id"]] = at("graph", "edges", i)
        prepared.append(item)

    def graph_fail(exc):
        msg = str(exc)
        m = re.search(r"edge (\S+?)[:\s]", msg + " ")
        if m and m.group(1) in edge_line:
            raise ConfigError(msg, source, edge_line[m.group(1)]) from exc
        m = re.search(r"vertex (\S+?)[:\s]", msg + " ")
        if m:
            # anchor at the first edge touching the vertex
            for item in prepared:
                if m.group(1) in (item["tail"], item["head"]):
                    raise ConfigError(msg, source, edge_line[item["id"]]) from exc
        raise ConfigError(msg, source, at("graph")) from exc

    try:
        g = build_graph([str(v) for v in verts], prepared)
        require_admissible(g)
        vc = classify_vertices(g)
    except GraphError as exc:
        graph_fail(exc)

    # mesh and time
    mraw = raw.get("mesh", {})
    kind = mraw.get("kind", "uniform")
    if kind not in MESH_KINDS:
        fail(f"mesh.kind must be one of {', '.join(MESH_KINDS)}", "mesh", "kind")
    cells = number(mraw.get("cells", 64), "mesh", "cells", integer=True)
    if cells < 2 or (kind == "shishkin" and (cells < 4 or cells % 2)):
        fail("mesh.cells must be >= 2 (even and >= 4 for shishkin)", "mesh", "cells")
    sigma = number(mraw.get("sigma", 2.0), "mesh", "sigma", positive=True)
    mesh = MeshSpec(kind, cells, sigma)

    traw = raw.get("time", {})
    T = number(traw.get("T", 1.0), "time", "T", positive=True)
    dt = traw.get("dt")
    if dt is not None:
        dt = number(dt, "time", "dt", positive=True)
    theta = number(traw.get("theta", 1.0), "time", "theta")
    if not 0.0 <= theta <= 1.0:
        fail("time.theta must lie in [0, 1]", "time", "theta")
    outputs = traw.get("outputs")
    if outputs is not None:
        if not isinstance(outputs, list):
            fail("time.outputs must be a list", "time", "outputs")
        outputs = tuple(number(t, "time", "outputs", i) for i, t in enumerate(outputs))
        for i, t in enumerate(outputs):
            if t < 0 or t > T * (1 + 1e-12):
                fail(f"output time {t} outside [0, {T}]", "time", "outputs", i)
    tspec = TimeSpec(T, dt, theta, outputs)

    # data
    draw = raw.get("data", {})

    def table(value, span, *path):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return Table.constant(float(value), 0.0, span)
        try:
            return Table.from_pairs(value)
        except (DataError, ValueError, TypeError) as exc:
            fail(f"{'.'.join(map(str, path))}: {exc}", *path)

    braw = draw.get("boundary") or {}
    if not isinstance(braw, dict):
        fail("data.boundary must map vertex ids to tables", "data", "boundary")
    btables = {}
    for v, val in braw.items():
        v = str(v)
        if v not in g.vertices:
            fail(f"boundary data for unknown vertex {v}", "data", "boundary", v)
        if v not in vc.boundary:
            fail(f"boundary data given for inner vertex {v}", "data", "boundary", v)
        btables[v] = table(val, T, "data", "boundary", v)
    bdata = BoundaryData(btables)
    try:
        bdata.check_covers(vc.boundary, T)
    except DataError as exc:
        fail(str(exc), "data", "boundary", *_mentioned(str(exc), braw))

    iraw = draw.get("initial")
    if iraw is None:
        fail("initial data required per edge; section data.initial is missing", "data")
    if not isinstance(iraw, dict):
        fail("data.initial must map edge ids to tables", "data", "initial")
    itables = {}
    for eid, val in iraw.items():
        eid = str(eid)
        if eid not in g.edge_ids:
            fail(f"initial data for unknown edge {eid}", "data", "initial", eid)
        itables[eid] = table(val, g.edge(eid).length, "data", "initial", eid)
    idata = InitialData(itables)
    try:
        idata.check_spans(g)
    except DataError as exc:
        fail(str(exc), "data", "initial", *_mentioned(str(exc), iraw))

    # transport and study
    mode = raw.get("transport", {}).get("mode", "upwind")
    if mode not in TRANSPORT_MODES:
        fail(f"transport.mode must be one of {', '.join(TRANSPORT_MODES)}", "transport", "mode")

    sraw = raw.get("study", {})
    eps: tuple[float, ...] = ()
    if "epsilons" in sraw:
        try:
            eps = parse_epsilons(sraw["epsilons"])
        except ValueError as exc:
            fail(f"study.epsilons: {exc}", "study", "epsilons")
        for e in eps:
            if not 0.0 < e <= 1.0:
                fail(f"study.epsilons value {e} outside (0, 1]", "study", "epsilons")
    band = sraw.get("slope_band", [0.4, 0.65])
    if not (isinstance(band, list) and len(band) == 2):
        fail("study.slope_band must be [low, high]", "study", "slope_band")
    band = tuple(number(b, "study", "slope_band") for b in band)
    if band[0] > band[1]:
        fail("study.slope_band must be increasing", "study", "slope_band")
    jobs = number(sraw.get("jobs", 1), "study", "jobs", positive=True, integer=True)
    s_cells = sraw.get("cells")
    if s_cells is not None:
        s_cells = number(s_cells, "study", "cells", positive=True, integer=True)
    every = sraw.get("sample_every")
    if every is not None:
        every = number(every, "study", "sample_every", positive=True, integer=True)
    study = StudySpec(
        epsilons=eps,
        slope_band=band,
        jobs=jobs,
        cells=s_cells,
        scale=number(sraw.get("scale", 32.0), "study", "scale", positive=True),
        min_cells=number(sraw.get("min_cells", 64), "study", "min_cells", positive=True, integer=True),
        steps_per_cell=number(sraw.get("steps_per_cell", 4.0), "study", "steps_per_cell", positive=True),
        sample_every=every,
    )

    output = raw.get("output", "netlayer-out")
    if not isinstance(output, str) or not output:
        fail("output must be a directory path", "output")

    warnings = []
    defects = compatibility_defects(g, idata, bdata)
    for v in g.vertices:
        if defects[v] > 1e-10:
            warnings.append(f"initial data incompatible at {v} (defect {defects[v]:.3g})")

    return RunConfig(
        graph=g,
        boundary=bdata,
        initial=idata,
        mesh=mesh,
        time=tspec,
        transport_mode=mode,
        study=study,
        output=output,
        graph_epsilon=g_eps,
        source=source,
        warnings=tuple(warnings),
    )


def dump_config(cfg: RunConfig, extra: dict | None = None) -> str:
    """YAML text of the canonical configuration (plus an optional ``run`` block)."""
    body = cfg.to_dict()
    if extra:
        body["run"] = extra
    return yaml.safe_dump(body, sort_keys=False, default_flow_style=None, width=100)


def zero_boundary(cfg: RunConfig) -> BoundaryData:
    return BoundaryData({v: Table.constant(0.0, 0.0, cfg.time.T) for v in cfg.boundary.tables})
