"""Command-line driver.

``netlayer <command> --config PATH [options]`` with commands ``validate``,
``solve-cd``, ``solve-transport``, ``steady``, ``rate-study`` and ``diagnose``.

Exit codes: 0 success, 1 invalid input, 2 solver or I/O failure, 3 diagnostic
or acceptance violation. Every failure prints one line to stderr of the form
``netlayer-error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .asymptotics import GridPolicy, MeshPolicy, RateReport, rate_study
from .cdsolve import SolverError, assemble_cd, steady_solve
from .config import (
    ConfigError,
    RunConfig,
    dump_config,
    fixture_path,
    parse_config,
    parse_config_text,
    parse_epsilons,
    zero_boundary,
)
from .fields import DataError, compatibility_defects
from .graph import FLOW_TOLERANCE, GraphError, classify_vertices, validate_flow_conservation
from .mesh import MeshError, NetworkMesh, shishkin_mesh, uniform_mesh
from .results import (
    ResultBundle,
    csv_text,
    diagnostics_csv,
    rate_csv,
    rate_detail_csv,
    trajectory_csv,
    write_results,
)
from .timeloop import TimeGrid, Trajectory, integrate_cd
from .transport import CFLError, ExactTransport, RecursionLimitError, integrate_transport

log = logging.getLogger("netlayer")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_DIAGNOSTIC = 3

COMMANDS = ("validate", "solve-cd", "solve-transport", "steady", "rate-study", "diagnose")

MASS_TOLERANCE = 1e-10
ENERGY_TOLERANCE = 1e-12
POSITIVITY_TOLERANCE = 1e-12
JENSEN_TOLERANCE = 1e-12


@dataclass
class RunOutcome:
    bundle: ResultBundle
    code: int = EXIT_OK
    summary: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    failure: str | None = None


def build_mesh(cfg: RunConfig, cells: int | None = None) -> NetworkMesh:
    n = cells or cfg.mesh.cells
    if cfg.mesh.kind == "shishkin":
        return shishkin_mesh(cfg.graph, n, cfg.mesh.sigma)
    return uniform_mesh(cfg.graph, n)


def time_grid(cfg: RunConfig, theta: float | None = None) -> TimeGrid:
    th = cfg.time.theta if theta is None else theta
    return TimeGrid(cfg.time.T, cfg.time.step(cfg.mesh.cells), th)


def _cd_run(cfg: RunConfig, bdata=None, theta=None, outputs=None) -> Trajectory:
    mesh = build_mesh(cfg)
    op = assemble_cd(cfg.graph, mesh)
    return integrate_cd(
        cfg.graph, mesh, op, cfg.initial, bdata or cfg.boundary, time_grid(cfg, theta), outputs or []
    )


def _validate(cfg: RunConfig, out: RunOutcome) -> None:
    g = cfg.graph
    vc = classify_vertices(g)
    residual = validate_flow_conservation(g)
    defects = compatibility_defects(g, cfg.initial, cfg.boundary)
    kind = {v: "inner" for v in vc.inner}
    kind.update({v: "inflow" for v in vc.inflow})
    kind.update({v: "outflow" for v in vc.outflow})
    rows = [(v, kind[v], residual.get(v, 0.0), defects[v]) for v in g.vertices]
    out.bundle.add("validation.csv", csv_text(("vertex", "class", "flow_residual", "compat_defect"), rows))
    worst = max((abs(r) for r in residual.values()), default=0.0)
    out.summary.append(
        f"graph ok: {len(g.vertices)} vertices, {len(g.edges)} edges, "
        f"inner {list(vc.inner)}, max flow residual {worst:g}"
    )


def _solve_cd(cfg: RunConfig, out: RunOutcome) -> None:
    if cfg.time.theta < 0.5:
        raise ConfigError("solve-cd needs theta in [0.5, 1]", cfg.source)
    traj = _cd_run(cfg, outputs=list(cfg.time.output_times()))
    out.bundle.add("trajectory.csv", trajectory_csv(cfg.graph, zip(traj.times, traj.snapshots)))
    out.bundle.add("diagnostics.csv", diagnostics_csv(traj.diagnostics))
    out.summary.append(
        f"solve-cd: {len(traj.diagnostics) - 1} steps, min u {min(d.min_u for d in traj.diagnostics):.6g}, "
        f"max mass residual {max(d.mass_residual for d in traj.diagnostics):.3g}"
    )


def _solve_transport(cfg: RunConfig, out: RunOutcome) -> None:
    mesh = build_mesh(cfg)
    times = list(cfg.time.output_times())
    if cfg.transport_mode == "exact":
        exact = ExactTransport(cfg.graph, cfg.boundary, cfg.initial)
        snaps = [(t, exact.to_field(mesh, t)) for t in times]
        out.bundle.add("trajectory.csv", trajectory_csv(cfg.graph, snaps))
        out.bundle.add("diagnostics.csv", diagnostics_csv([]))
        out.summary.append(f"solve-transport (exact): {len(snaps)} snapshots")
        return
    traj = integrate_transport(cfg.graph, mesh, cfg.initial, cfg.boundary, time_grid(cfg), times)
    out.bundle.add("trajectory.csv", trajectory_csv(cfg.graph, zip(traj.times, traj.snapshots)))
    out.bundle.add("diagnostics.csv", diagnostics_csv(traj.diagnostics))
    out.summary.append(f"solve-transport (upwind): {len(traj.diagnostics) - 1} steps")


def _steady(cfg: RunConfig, out: RunOutcome) -> None:
    mesh = build_mesh(cfg)
    u = steady_solve(cfg.graph, mesh, cfg.boundary)
    out.bundle.add("trajectory.csv", trajectory_csv(cfg.graph, [(math.inf, u)]))
    traces = ", ".join(f"{v}={u.trace(v):.6g}" for v in cfg.graph.vertices)
    out.summary.append(f"steady: vertex values {traces}")


def study_report(cfg: RunConfig) -> RateReport:
    """Rate study with the mesh and time-step policy taken from ``cfg``."""
    st = cfg.study
    if not st.epsilons:
        raise ConfigError("rate-study needs study.epsilons or --epsilons", cfg.source)
    mesh_policy = MeshPolicy(
        kind=cfg.mesh.kind, cells=st.cells, sigma=cfg.mesh.sigma, scale=st.scale, min_cells=st.min_cells
    )
    grid_policy = GridPolicy(
        T=cfg.time.T, theta=cfg.time.theta, steps_per_cell=st.steps_per_cell, sample_every=st.sample_every
    )
    try:
        report = rate_study(
            cfg.graph, cfg.boundary, cfg.initial, st.epsilons, mesh_policy, grid_policy, jobs=st.jobs
        )
    except ValueError as exc:
        if isinstance(exc, (GraphError, DataError, MeshError)):
            raise
        raise ConfigError(str(exc), cfg.source) from exc
    return report


def _rate_study(cfg: RunConfig, out: RunOutcome) -> None:
    st = cfg.study
    report = study_report(cfg)
    out.bundle.add("rate_summary.csv", rate_csv(report))
    out.bundle.add("rate_details.csv", rate_detail_csv(report))
    out.timings.update({f"epsilon={r.epsilon:.6g}": r.seconds for r in report.results})
    lo, hi = st.slope_band
    out.summary.append(
        f"rate-study: slope {report.slope:.4f} (band [{lo}, {hi}]), N={report.results[0].cells}, "
        f"initial-data adjustment {report.compat_adjustment:.3g}"
    )
    for r in report.results:
        out.summary.append(
            f"  eps={r.epsilon:.4e} plain={r.error_plain:.4e} composite={r.error_composite:.4e}"
        )
    out.summary.extend(f"warning: {w}" for w in report.warnings)
    if not lo <= report.slope <= hi:
        out.code = EXIT_DIAGNOSTIC
        out.failure = f"fitted slope {report.slope:.4f} outside [{lo}, {hi}]"


def _diagnose(cfg: RunConfig, out: RunOutcome) -> None:
    g = cfg.graph
    rows = []

    def check(suite, value, threshold, ok):
        status = "skip" if ok is None else ("pass" if ok else "fail")
        rows.append((suite, status, value, threshold))

    residual = validate_flow_conservation(g)
    worst = max((abs(r) for r in residual.values()), default=0.0)
    bound = FLOW_TOLERANCE * g.max_flow_rate
    check("flow", worst, bound, worst <= bound)

    traj = _cd_run(cfg)
    mres = max(d.mass_residual for d in traj.diagnostics)
    check("mass", mres, MASS_TOLERANCE, mres <= MASS_TOLERANCE)

    # g = 0 is generally incompatible with u0; the resulting initial layer is expected here
    timeloop_log = logging.getLogger("netlayer.timeloop")
    level = timeloop_log.level
    timeloop_log.setLevel(logging.ERROR)
    try:
        etraj = _cd_run(cfg, bdata=zero_boundary(cfg), theta=1.0)
    finally:
        timeloop_log.setLevel(level)
    e0 = etraj.diagnostics[0].energy
    growth = max((d.energy_defect for d in etraj.diagnostics[1:]), default=0.0)
    check("energy", growth, ENERGY_TOLERANCE * e0, growth <= ENERGY_TOLERANCE * e0)

    ptraj = traj if cfg.time.theta == 1.0 else _cd_run(cfg, theta=1.0)
    umin = min(d.min_u for d in ptraj.diagnostics)
    check("positivity", umin, -POSITIVITY_TOLERANCE, umin >= -POSITIVITY_TOLERANCE)

    ttraj = integrate_transport(g, build_mesh(cfg), cfg.initial, cfg.boundary, time_grid(cfg, 1.0))
    gaps = [d.jensen_min for d in ttraj.diagnostics if not math.isnan(d.jensen_min)]
    if gaps:
        check("jensen", min(gaps), -JENSEN_TOLERANCE, min(gaps) >= -JENSEN_TOLERANCE)
    else:
        check("jensen", math.nan, -JENSEN_TOLERANCE, None)

    out.bundle.add("diagnose.csv", csv_text(("suite", "status", "value", "threshold"), rows))
    for suite, status, value, threshold in rows:
        out.summary.append(f"{suite:<10} {status:<4} value={value:.3g} threshold={threshold:.3g}")
    failed = [r[0] for r in rows if r[1] == "fail"]
    if failed:
        out.code = EXIT_DIAGNOSTIC
        out.failure = f"diagnostic suite(s) failed: {', '.join(failed)}"


HANDLERS = {
    "validate": _validate,
    "solve-cd": _solve_cd,
    "solve-transport": _solve_transport,
    "steady": _steady,
    "rate-study": _rate_study,
    "diagnose": _diagnose,
}


def versions() -> dict[str, str]:
    return {
        "netlayer": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
        "python": platform.python_version(),
    }


def run(command: str, cfg: RunConfig) -> RunOutcome:
    """Execute ``command`` and return the files it produced (plus the
    manifest) without touching the file system. Input and solver errors
    propagate as exceptions."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}", cfg.source)
    out = RunOutcome(ResultBundle())
    start = time.perf_counter()
    HANDLERS[command](cfg, out)
    out.timings["total"] = time.perf_counter() - start
    files = sorted(out.bundle.files) + ["manifest.yaml"]
    out.bundle.add(
        "manifest.yaml",
        dump_config(cfg, {"command": command, "exit_code": out.code, "files": files, "versions": versions()}),
    )
    return out


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Apply command-line overrides by editing the canonical form and parsing it
    again, so every override passes the same validation as the file."""
    body = cfg.to_dict()
    changed = False
    if args.mesh is not None:
        body["mesh"]["kind"] = args.mesh
        changed = True
    if args.cells is not None:
        body["mesh"]["cells"] = args.cells
        body["study"]["cells"] = args.cells
        changed = True
    if args.theta is not None:
        body["time"]["theta"] = args.theta
        changed = True
    if args.jobs is not None:
        body["study"]["jobs"] = args.jobs
        changed = True
    if args.epsilons is not None:
        try:
            body["study"]["epsilons"] = list(parse_epsilons(args.epsilons))
        except ValueError as exc:
            raise ConfigError(f"--epsilons: {exc}", "command line") from exc
        changed = True
    if args.out is not None:
        body["output"] = args.out
        changed = True
    if not changed:
        return cfg
    return parse_config_text(yaml.safe_dump(body, sort_keys=False), f"{cfg.source} (with overrides)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        fail(EXIT_INPUT, "usage", message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netlayer", description="Convection-diffusion on metric graphs.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML config path, or fixture:NAME")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--jobs", type=int, help="parallel epsilon solves in rate-study")
    p.add_argument("--epsilons", help='e.g. "2^-4..2^-12" or "0.1,0.01,0.001,0.0001"')
    p.add_argument("--mesh", choices=("uniform", "shishkin"))
    p.add_argument("--cells", type=int, help="cells per edge")
    p.add_argument("--theta", type=float)
    p.add_argument("--timings", action="store_true", help="also write timings.yaml (not deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def fail(code: int, kind: str, message: str) -> None:
    text = " ".join(str(message).split())
    print(f"netlayer-error: {kind}: {text}", file=sys.stderr)
    raise SystemExit(code)


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        path = args.config
        if path.startswith("fixture:"):
            path = fixture_path(path.split(":", 1)[1])
        cfg = apply_overrides(parse_config(path), args)
        for w in cfg.warnings:
            log.warning(w)
        outcome = run(args.command, cfg)
    except (ConfigError, GraphError, DataError, MeshError) as exc:
        fail(EXIT_INPUT, "input", exc)
    except CFLError as exc:
        fail(EXIT_INPUT, "cfl", exc)
    except (SolverError, RecursionLimitError, np.linalg.LinAlgError) as exc:
        fail(EXIT_SOLVER, "solver", exc)

    if args.timings:
        outcome.bundle.add("timings.yaml", yaml.safe_dump(outcome.timings, sort_keys=True))
    try:
        write_results(outcome.bundle, cfg.output)
    except OSError as exc:
        fail(EXIT_SOLVER, "io", f"{exc.filename or cfg.output}: {exc.strerror or exc}")
    for line in outcome.summary:
        print(line)
    print(f"results written to {Path(cfg.output)}")
    if outcome.failure:
        kind = "acceptance" if args.command == "rate-study" else "diagnostic"
        fail(outcome.code, kind, outcome.failure)
    return outcome.code


def console() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console()
