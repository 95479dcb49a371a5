"""Regenerate the shipped YAML fixtures and the known-bad test configs.

    python tools/make_fixtures.py

All data are smooth, nonnegative and compatible (initial data continuous at
junctions and equal to the boundary data at t = 0) unless the file is one of
the deliberately broken test inputs.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

ROOT = Path(__file__).resolve().parents[1]
GOOD = ROOT / "src" / "netlayer" / "fixtures"
BAD = ROOT / "tests" / "data"

STUDY = {"epsilons": "2^-4..2^-12", "slope_band": [0.4, 0.65], "jobs": 1}


def pairs(points, values):
    return [[round(float(p), 12), round(float(v), 12)] for p, v in zip(points, values)]


def space_table(length, fn, n=41):
    x = np.linspace(0.0, length, n)
    return pairs(x, fn(x))


def time_table(T, fn, n=81):
    t = np.linspace(0.0, T, n)
    return pairs(t, fn(t))


def edge(eid, tail, head, length=1.0, a=1.0, b=1.0):
    return {"id": eid, "tail": tail, "head": head, "length": length, "a": a, "b": b}


def config(vertices, edges, boundary, initial, eps, T, dt, cells=64, study=None, outputs=None):
    body = {
        "graph": {"vertices": vertices, "epsilon": eps, "edges": edges},
        "data": {"boundary": boundary, "initial": initial},
        "mesh": {"kind": "shishkin", "cells": cells, "sigma": 2.0},
        "time": {"T": T, "dt": dt, "theta": 1.0, "outputs": outputs or [T / 2, T]},
        "transport": {"mode": "upwind"},
    }
    if study:
        body["study"] = study
    return body


def single_edge():
    T = 2.0
    return config(
        ["v1", "v2"],
        [edge("e1", "v1", "v2")],
        {"v1": time_table(T, lambda t: 0 * t, 2), "v2": time_table(T, lambda t: 0 * t + 1.0, 2)},
        {"e1": space_table(1.0, lambda x: np.sin(np.pi * x / 2))},
        eps=0.1,
        T=T,
        dt=0.01,
        study=STUDY,
    )


def path2():
    T = 2.0

    def u0(s):
        return 0.5 + 0.3 * np.cos(np.pi * s / 1.5)

    return config(
        ["v1", "v2", "v3"],
        [edge("e1", "v1", "v2", 1.0, a=1.0, b=1.5), edge("e2", "v2", "v3", 0.5, a=2.0, b=1.5)],
        {"v1": time_table(T, lambda t: 0.5 + 0.3 * np.cos(1.5 * t)), "v3": time_table(T, lambda t: 0 * t + u0(1.5), 2)},
        {"e1": space_table(1.0, u0), "e2": space_table(0.5, lambda x: u0(1.0 + x), 21)},
        eps=0.05,
        T=T,
        dt=0.01,
    )


def f1(s):
    return 0.5 + 0.4 * np.sin(np.pi * s / 2)


def f2(s):
    return 0.5 + 0.4 * np.cos(np.pi * (s - 1))


def u3(y):
    return (f1(1 + y / 2) + f2(1 + y / 2)) / 2


def fig1(b3=2.0):
    T = 2.0
    return config(
        ["v1", "v2", "v3", "v4"],
        [edge("e1", "v1", "v3"), edge("e2", "v2", "v3"), edge("e3", "v3", "v4", b=b3)],
        {
            "v1": time_table(T, lambda t: f1(-t)),
            "v2": time_table(T, lambda t: f2(-t)),
            "v4": time_table(T, lambda t: 0 * t + u3(1.0), 2),
        },
        {"e1": space_table(1.0, f1), "e2": space_table(1.0, f2), "e3": space_table(1.0, u3)},
        eps=0.1,
        T=T,
        dt=0.01,
        study=STUDY,
    )


def diamond6():
    T = 2.0
    level = {"s": 0.9, "A": 0.7, "B": 0.5, "C": 0.6, "D": 0.4, "t": 0.3}
    edges = [
        edge("e1", "s", "A", 1.0, b=2.0),
        edge("e2", "A", "B", 0.8, b=1.5),
        edge("e3", "A", "C", 1.2, a=0.5, b=0.5),
        edge("e4", "B", "D", 1.0, b=1.5),
        edge("e5", "C", "D", 0.6, a=2.0, b=0.5),
        edge("e6", "D", "t", 1.0, b=2.0),
    ]
    initial = {}
    for e in edges:
        lo, hi, ell = level[e["tail"]], level[e["head"]], e["length"]
        initial[e["id"]] = space_table(
            ell, lambda x, lo=lo, hi=hi, ell=ell: lo + (hi - lo) * x / ell + 0.1 * np.sin(np.pi * x / ell)
        )
    return config(
        ["A", "B", "C", "D", "s", "t"],
        edges,
        {"s": time_table(T, lambda t: 0.9 - 0.2 * np.sin(t)), "t": time_table(T, lambda t: 0 * t + 0.3, 2)},
        initial,
        eps=0.1,
        T=T,
        dt=0.01,
    )


def dump(body, path: Path, header: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(body, sort_keys=False, default_flow_style=None, width=100)
    path.write_text(f"# {header}\n{text}", encoding="utf-8")


def main():
    dump(single_edge(), GOOD / "single_edge.yaml", "single edge v1 -> v2, outflow layer at v2")
    dump(path2(), GOOD / "path2.yaml", "two-edge path v1 -> v2 -> v3 with unequal lengths and cross-sections")
    dump(fig1(), GOOD / "fig1.yaml", "three edges merging at v3: e1, e2 into v3, e3 out to v4")
    dump(diamond6(), GOOD / "diamond6.yaml", "six-edge diamond s -> A -> {B, C} -> D -> t")

    dump(fig1(b3=1.0), BAD / "fig1_bad_flow.yaml", "known bad: flow rates (1, 1, 1) are not conserved at v3")
    missing = single_edge()
    del missing["data"]["initial"]
    dump(missing, BAD / "missing_initial.yaml", "known bad: no initial data")
    dip = copy.deepcopy(single_edge())
    dip["data"]["initial"]["e1"] = space_table(
        1.0, lambda x: np.sin(np.pi * x / 2) - 0.9 * np.exp(-(((x - 0.5) / 0.08) ** 2))
    )
    dip["time"] = {"T": 0.5, "dt": 0.01, "theta": 1.0, "outputs": [0.5]}
    del dip["study"]
    dump(dip, BAD / "negative_dip.yaml", "known bad for positivity: initial datum dips below zero")


if __name__ == "__main__":
    main()
