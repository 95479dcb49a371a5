import textwrap

import pytest
import yaml

from netlayer.config import (
    ConfigError,
    dump_config,
    fixture_names,
    fixture_path,
    parse_config,
    parse_config_text,
    parse_epsilons,
)

MINIMAL = textwrap.dedent(
    """\
    graph:
      vertices: [v1, v2]
      epsilon: 0.1
      edges:
        - {id: e1, tail: v1, head: v2, length: 1.0}
    data:
      boundary: {v1: 0.0, v2: 1.0}
      initial:
        e1: [[0, 0], [1, 1]]
    time: {T: 1.0, dt: 0.1}
    """
)


def line_of(exc: pytest.ExceptionInfo) -> int | None:
    return exc.value.line


def test_fixtures_are_shipped():
    assert fixture_names() == ["diamond6", "fig1", "path2", "single_edge"]


def test_fig1_fixture_parses_to_fig1_graph():
    cfg = parse_config(fixture_path("fig1"))
    g = cfg.graph
    assert g.vertices == ("v1", "v2", "v3", "v4")
    assert [(e.id, e.tail, e.head, e.b) for e in g.edges] == [
        ("e1", "v1", "v3", 1.0),
        ("e2", "v2", "v3", 1.0),
        ("e3", "v3", "v4", 2.0),
    ]
    assert all(e.length == 1.0 and e.a == 1.0 and e.epsilon == 0.1 for e in g.edges)
    assert cfg.study.epsilons == tuple(2.0**-k for k in range(4, 13))
    assert not cfg.warnings


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.mesh.kind == "uniform" and cfg.mesh.cells == 64
    assert cfg.time.theta == 1.0 and cfg.time.output_times() == (1.0,)
    assert cfg.boundary("v2", 0.7) == 1.0
    assert cfg.transport_mode == "upwind"


def test_flow_violation_cites_residual_at_v3(tmp_path):
    text = fixture_path("fig1").read_text().replace("b: 2.0", "b: 1.0")
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=r"flow conservation violated at vertex v3: sum b\*n = 1") as exc:
        parse_config(p)
    assert text.splitlines()[line_of(exc) - 1].strip().startswith("- {id: e1")


def test_missing_initial_data():
    text = MINIMAL.replace("  initial:\n    e1: [[0, 0], [1, 1]]\n", "")
    with pytest.raises(ConfigError, match="initial data required per edge"):
        parse_config_text(text)


def test_initial_data_missing_for_one_edge():
    text = textwrap.dedent(
        """\
        graph:
          vertices: [v1, v2, v3]
          edges:
            - {id: e1, tail: v1, head: v2, length: 1.0}
            - {id: e2, tail: v2, head: v3, length: 1.0}
        data:
          boundary: {v1: 0.0, v3: 0.0}
          initial:
            e1: 0.0
        """
    )
    with pytest.raises(ConfigError, match="initial data required per edge; missing e2") as exc:
        parse_config_text(text)
    assert line_of(exc) == 8


@pytest.mark.parametrize(
    "old, new, line, message",
    [
        ("time: {T: 1.0, dt: 0.1}", "time: {T: 1.0, dt: 0.1, dtt: 1}", 10, "unknown key time.dtt"),
        ("  epsilon: 0.1\n", "  epsilon: 0.1\n  colour: red\n", 4, "unknown key graph.colour"),
        ("length: 1.0}", "length: 1.0, speed: 2}", 5, "unknown edge key 'speed'"),
        ("length: 1.0}", "length: -1.0}", 5, "nonpositive length on edge e1"),
        ("epsilon: 0.1", "epsilon: 1.5", 5, "epsilon out of range"),
        ("time: {T: 1.0, dt: 0.1}", "time: {T: 1.0, dt: 0.1, theta: 2}", 10, "theta must lie"),
        ("time: {T: 1.0, dt: 0.1}", "time: {T: 1.0, dt: 0.1}\nmesh: {kind: shishkin, cells: 7}", 11, "even"),
        ("time: {T: 1.0, dt: 0.1}", "time: {T: 1.0, dt: 0.1}\nextras: 1", 11, "unknown key 'extras'"),
        ("boundary: {v1: 0.0, v2: 1.0}", "boundary: {v1: 0.0}", 7, "boundary data required for vertex v2"),
        ("boundary: {v1: 0.0, v2: 1.0}", "boundary: {v1: [[0, 0], [0.5, 0]], v2: 1.0}", 7, "must cover"),
        ("e1: [[0, 0], [1, 1]]", "e1: [[0, 0], [0.5, 1]]", 9, "must span"),
        ("e1: [[0, 0], [1, 1]]", "e1: [[0, 0], [0, 1]]", 9, "strictly increasing"),
        ("[v1, v2]", "[v1, v2, v3]", 1, "disconnected"),
    ],
)
def test_errors_are_line_anchored(old, new, line, message):
    assert old in MINIMAL
    with pytest.raises(ConfigError, match=message) as exc:
        parse_config_text(MINIMAL.replace(old, new), "case.yaml")
    assert line_of(exc) == line
    assert str(exc.value).startswith(f"case.yaml:{line}: ")


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError, match="YAML syntax error") as exc:
        parse_config_text(MINIMAL + "data: [unclosed\n")
    assert line_of(exc) is not None


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/nonexistent/config.yaml")


def test_boundary_data_on_inner_vertex_rejected():
    text = fixture_path("fig1").read_text().replace("  boundary:\n", "  boundary:\n    v3: 0.5\n", 1)
    with pytest.raises(ConfigError, match="inner vertex v3"):
        parse_config_text(text)


def test_incompatible_data_is_a_warning():
    cfg = parse_config_text(MINIMAL.replace("e1: [[0, 0], [1, 1]]", "e1: [[0, 0.5], [1, 1]]"))
    assert cfg.warnings == ("initial data incompatible at v1 (defect 0.5)",)


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("2^-4..2^-12", tuple(2.0**-k for k in range(4, 13))),
        ("2^-1..2^-3", (0.5, 0.25, 0.125)),
        ("0.1, 0.01,0.001", (0.1, 0.01, 0.001)),
        (["2^-2", 0.1], (0.25, 0.1)),
        ("10^-1..10^-3", (0.1, 0.01, 0.001)),
    ],
)
def test_parse_epsilons(spec, expected):
    assert parse_epsilons(spec) == pytest.approx(expected, rel=1e-15)


def test_parse_epsilons_rejects_mixed_bases():
    with pytest.raises(ValueError):
        parse_epsilons("2^-1..10^-3")


@pytest.mark.parametrize("name", ["single_edge", "path2", "fig1", "diamond6"])
def test_round_trip(name):
    cfg = parse_config(fixture_path(name))
    text = dump_config(cfg, {"command": "validate"})
    again = parse_config_text(text)
    assert again.to_dict() == cfg.to_dict()
    assert yaml.safe_load(text)["run"] == {"command": "validate"}


@pytest.mark.parametrize("name", ["single_edge", "path2", "fig1", "diamond6"])
def test_fixtures_have_compatible_data(name):
    assert parse_config(fixture_path(name)).warnings == ()
