"""Result files: fixed-schema CSV tables, the run manifest and atomic writes."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import RateReport
from .fields import DiscreteField
from .graph import MetricGraph
from .timeloop import StepDiagnostics

TRAJECTORY_COLUMNS = ("t", "edge", "x", "u")
DIAGNOSTICS_COLUMNS = (
    "step",
    "t",
    "mass",
    "mass_residual",
    "energy",
    "energy_defect",
    "min_u",
    "jensen_min",
)
RATE_COLUMNS = ("epsilon", "error_plain", "error_composite", "slope_partial")
RATE_DETAIL_COLUMNS = (
    "epsilon",
    "cells",
    "dt",
    "initial_composite",
    "inner_defect",
    "inflow_defect",
    "outflow_defect",
    "max_mass_residual",
    "min_u",
    "sup_u",
    "inflow_slope",
)


def fmt(value) -> str:
    """Shortest round-tripping text for numbers; ``nan``/``inf`` spelled out."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], footer: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def trajectory_rows(g: MetricGraph, snapshots: Sequence[tuple[float, DiscreteField]]):
    """One row per edge point: the tail trace at ``x=0``, every cell center and
    the head trace at ``x=length``."""
    for t, u in snapshots:
        for e in g.edges:
            em = u.mesh.edge_meshes[e.id]
            yield (t, e.id, 0.0, u.trace(e.tail))
            for x, val in zip(em.centers, u.cells(e.id)):
                yield (t, e.id, float(x), float(val))
            yield (t, e.id, em.length, u.trace(e.head))


def trajectory_csv(g: MetricGraph, snapshots) -> str:
    return csv_text(TRAJECTORY_COLUMNS, trajectory_rows(g, snapshots))


def diagnostics_csv(diagnostics: Sequence[StepDiagnostics]) -> str:
    rows = (
        (d.step, d.t, d.mass, d.mass_residual, d.energy, d.energy_defect, d.min_u, d.jensen_min)
        for d in diagnostics
    )
    return csv_text(DIAGNOSTICS_COLUMNS, rows)


def rate_csv(report: RateReport) -> str:
    rows = [
        (r.epsilon, r.error_plain, r.error_composite, p)
        for r, p in zip(report.results, report.partial_slopes())
    ]
    footer = [
        f"fitted_slope={fmt(report.slope)} intercept={fmt(report.intercept)} "
        f"residual={fmt(report.residual)}"
    ]
    return csv_text(RATE_COLUMNS, rows, footer)


def rate_detail_csv(report: RateReport) -> str:
    rows = (
        (r.epsilon, r.cells, r.dt, r.initial_composite, r.inner_defect, r.inflow_defect,
         r.outflow_defect, r.max_mass_residual, r.min_u, r.sup_u, r.inflow_slope)
        for r in report.results
    )
    return csv_text(RATE_DETAIL_COLUMNS, rows)


@dataclass
class ResultBundle:
    """File name to text content, written in sorted name order."""

    files: dict[str, str] = field(default_factory=dict)

    def add(self, name: str, text: str) -> None:
        self.files[name] = text


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(bundle: ResultBundle, directory: str | Path) -> list[Path]:
    out = Path(directory)
    written = []
    for name in sorted(bundle.files):
        p = out / name
        atomic_write(p, bundle.files[name])
        written.append(p)
    return written
