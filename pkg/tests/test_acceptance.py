"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary)."""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from netlayer import cli
from netlayer.asymptotics import LayerField
from netlayer.cdsolve import assemble_cd, steady_solve
from netlayer.config import fixture_names, fixture_path, parse_config
from netlayer.fields import BoundaryData, DiscreteField
from netlayer.mesh import shishkin_mesh, uniform_mesh
from netlayer.timeloop import TimeGrid, integrate_cd
from netlayer.transport import (
    ExactTransport,
    UpwindTransport,
    integrate_transport,
    jensen_terms,
    junction_dissipation,
    transport_step_upwind,
)
from problems import TOPOLOGIES, random_data, random_graph, single_edge_graph

DATA = Path(__file__).parent / "data"


def random_cd_run(rng, topology, theta, **data_kw):
    g = random_graph(rng, topology)
    n = 2 * int(rng.integers(2, 12))
    mesh = (uniform_mesh, shishkin_mesh)[int(rng.integers(2))](g, n)
    T = float(rng.uniform(0.2, 1.5))
    grid = TimeGrid(T, T / int(rng.integers(5, 30)), theta)
    data_kw.setdefault("compatible", bool(rng.integers(2)))
    idata, bdata = random_data(rng, g, T, **data_kw)
    return integrate_cd(g, mesh, assemble_cd(g, mesh), idata, bdata, grid)


@pytest.fixture(scope="module")
def studies():
    out = {}
    for name in ("single_edge", "fig1"):
        cfg = parse_config(fixture_path(name))
        start = time.perf_counter()
        report = cli.study_report(cfg)
        out[name] = (cfg, report, time.perf_counter() - start)
    return out


@pytest.mark.slow
def test_criterion_1_sqrt_epsilon_rate(studies, report):
    parts, ok = [], True
    for name, (cfg, rep, seconds) in studies.items():
        lo, hi = cfg.study.slope_band
        assert (lo, hi) == (0.4, 0.65)
        assert rep.epsilons == [2.0**-k for k in range(4, 13)] and cfg.time.T == 2.0
        ok &= lo <= rep.slope <= hi
        parts.append(f"{name} slope={rep.slope:.3f} ({seconds:.0f}s)")
    report(1, ok, "; ".join(parts) + " band [0.4, 0.65]")


@pytest.mark.slow
def test_criterion_2_composite_improvement(studies, report):
    parts, ok = [], True
    for name, (_, rep, _) in studies.items():
        for r in rep.results[-2:]:
            ratio = r.error_composite / r.error_plain
            ok &= ratio <= 0.5
            parts.append(f"{name} eps=2^{math.log2(r.epsilon):.0f} ratio={ratio:.3f}")
    report(2, ok, "; ".join(parts) + " (need <= 0.5)")


def test_criterion_3_layer_norm_closed_form(report):
    worst = 0.0
    for eps, b, length, amp in [(0.1, 1.0, 1.0, 1.0), (0.01, 2.0, 0.5, -0.4), (2.0**-12, 1.0, 1.0, 0.7), (0.9, 0.5, 2.0, 3.0)]:
        w = LayerField(single_edge_graph(eps=eps, b=b, length=length), {"e1": amp})
        closed = abs(amp) * math.sqrt(eps / (2 * b)) * math.sqrt(-math.expm1(-2 * b * length / eps))
        split = max(0.0, length - 60 * eps / b)
        integrand = lambda x: float(w("e1", x)) ** 2
        val = sum(quad(integrand, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0] for lo, hi in [(0, split), (split, length)] if hi > lo)
        assert w.l2_norm("e1") == pytest.approx(closed, rel=1e-14)
        worst = max(worst, abs(math.sqrt(val) - closed) / closed)
    report(3, worst <= 1e-8, f"max relative deviation {worst:.2e} (need <= 1e-8)")


def test_criterion_4_steady_layer(report):
    g = single_edge_graph(eps=0.1)
    exact = math.expm1(5) / math.expm1(10)
    errs = {}
    for n in (128, 256, 512):
        u = steady_solve(g, shishkin_mesh(g, n), {"v1": 0.0, "v2": 1.0})
        errs[n] = abs(float(u.evaluate(g, "e1", 0.5)) - exact)
    ratios = [errs[128] / errs[256], errs[256] / errs[512]]
    # halving up to the log factor of a Shishkin mesh: 2 ln N / ln 2N
    needed = [2 * math.log(128) / math.log(256), 2 * math.log(256) / math.log(512)]
    ok = errs[128] <= 2e-3 and all(r >= q for r, q in zip(ratios, needed))
    report(4, ok, f"|u(0.5)-6.6928e-3|={errs[128]:.2e} at N=128 (need <= 2e-3); ratios {ratios[0]:.2f}, {ratios[1]:.2f}")


def test_criterion_5_mass_conservation(report):
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for k in range(100):
        theta = (1.0, 0.5, float(rng.uniform(0.5, 1.0)))[k % 3]
        traj = random_cd_run(rng, TOPOLOGIES[k % 4], theta, low=-1.0, high=1.0)
        worst = max(worst, max(d.mass_residual for d in traj.diagnostics))
    report(5, worst <= 1e-10, f"max relative mass residual {worst:.2e} over 100 runs (need <= 1e-10)")


def test_criterion_6_energy_dissipation(report):
    rng = np.random.default_rng(20240502)
    worst = -math.inf
    for k in range(100):
        traj = random_cd_run(rng, TOPOLOGIES[k % 4], 1.0, low=-1.0, high=1.0, zero_boundary=True)
        e0 = traj.diagnostics[0].energy
        worst = max(worst, max(d.energy_defect for d in traj.diagnostics[1:]) / e0)
    report(6, worst <= 1e-12, f"max (E^(n+1)-E^n)/E^0 = {worst:.2e} over 100 runs (need <= 1e-12)")


def test_criterion_7_maximum_principle(report):
    rng = np.random.default_rng(20240503)
    worst = math.inf
    for k in range(1000):
        traj = random_cd_run(rng, TOPOLOGIES[k % 4], 1.0, low=-0.5, high=1.0, floor=0.0)
        worst = min(worst, min(d.min_u for d in traj.diagnostics))
    report(7, worst >= -1e-12, f"global minimum {worst:.2e} over 1000 runs (need >= -1e-12)")


def test_criterion_8_junction_jensen(report):
    rng = np.random.default_rng(20240504)
    worst_gap, worst_d, checks = math.inf, math.inf, 0
    for k in range(60):
        g = random_graph(rng, ("path2", "fig1", "diamond6")[k % 3])
        mesh = uniform_mesh(g, int(rng.integers(4, 24)))
        T = float(rng.uniform(0.5, 2.0))
        theta = (1.0, 0.5)[k % 2]
        dt = T / int(rng.integers(5, 40))
        if theta < 1.0:
            dt = min(dt, UpwindTransport(g, mesh).max_explicit_dt() / (1.0 - theta))
        grid = TimeGrid(T, dt, theta)
        idata, bdata = random_data(rng, g, T, low=-1.0, high=1.0, compatible=bool(k % 2))
        traj = integrate_transport(g, mesh, idata, bdata, grid, outputs=list(grid.times()))
        for u in traj.snapshots:
            traces = {e.id: u.cells(e.id)[-1] for e in g.edges}
            values = {v: u.trace(v) for v in g.vertices}
            for v, (out, inc) in jensen_terms(g, traces, values).items():
                worst_gap = min(worst_gap, (inc - out) / max(1.0, inc))
                checks += 1
            worst_d = min(worst_d, min(junction_dissipation(g, traces, values).values()))
        worst_gap = min(worst_gap, min(d.jensen_min for d in traj.diagnostics))
    ok = worst_gap >= -1e-12 and worst_d >= -1e-12
    report(8, ok, f"min Jensen gap {worst_gap:.2e}, min D(v) {worst_d:.2e} over {checks} junction-steps")


def test_criterion_9_upwind_against_oracle(report):
    cfg = parse_config(fixture_path("fig1"))
    T = cfg.time.T
    exact = ExactTransport(cfg.graph, cfg.boundary, cfg.initial)
    hs, errs = [], []
    for n in (16, 32, 64, 128, 256):
        mesh = uniform_mesh(cfg.graph, n)
        h = 1.0 / n
        traj = integrate_transport(cfg.graph, mesh, cfg.initial, cfg.boundary, TimeGrid(T, 0.5 * h), [T])
        diff = traj.snapshots[-1].cell_values - exact.cell_values(mesh, T)
        weights = np.concatenate([e.a * mesh.edge_meshes[e.id].widths for e in cfg.graph.edges])
        hs.append(h)
        errs.append(math.sqrt(weights @ diff**2))
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]

    g = single_edge_graph(a=2.0, b=3.0)
    n = 16
    mesh = uniform_mesh(g, n)
    u0 = DiscreteField.zeros(mesh)
    u0.values[:n] = np.arange(n, dtype=float)
    out = transport_step_upwind(g, mesh, u0, BoundaryData.constant({"v1": 7.0, "v2": 0.0}), 0.0, 2.0 / (3 * n), theta=0.0)
    shift = np.abs(out.cell_values - np.concatenate([[7.0], np.arange(n - 1)])).max()
    ok = order >= 0.85 and shift <= 1e-12
    report(9, ok, f"measured order {order:.3f} (need >= 0.85); CFL=1 shift defect {shift:.1e} (need <= 1e-12)")


def invoke(capsys, *argv):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    capsys.readouterr()
    return code


def test_criterion_10_cli(tmp_path, capsys, report):
    codes = {}
    identical = True
    for name in fixture_names():
        out = tmp_path / name
        codes[name] = invoke(capsys, "diagnose", "--config", f"fixture:{name}", "--out", out)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        invoke(capsys, "diagnose", "--config", f"fixture:{name}", "--out", out)
        identical &= first == {p.name: p.read_bytes() for p in out.iterdir()}
    bad = {
        "fig1_bad_flow": invoke(capsys, "validate", "--config", DATA / "fig1_bad_flow.yaml", "--out", tmp_path / "b1"),
        "missing_initial": invoke(capsys, "validate", "--config", DATA / "missing_initial.yaml", "--out", tmp_path / "b2"),
        "negative_dip": invoke(capsys, "diagnose", "--config", DATA / "negative_dip.yaml", "--out", tmp_path / "b3"),
    }
    ok = (
        all(c == 0 for c in codes.values())
        and identical
        and bad == {"fig1_bad_flow": 1, "missing_initial": 1, "negative_dip": 3}
    )
    report(10, ok, f"diagnose exits {codes}; reruns identical={identical}; known-bad exits {bad}")
