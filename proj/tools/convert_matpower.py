#!/usr/bin/env python3
"""Convert IEEE test cases into the canonical grid JSON format.

IEEE-14 and IEEE-118 are read from PYPOWER (pip install pypower). PYPOWER's
case30 is the Alsac-Stott variant, so the original IEEE 30-bus data is
tabulated below. Parallel branches are merged into one line whose
susceptance is the sum of the parallel susceptances. Buses get planar
coordinates from a Kamada-Kawai layout (networkx), scaled to [0, 100].

Usage: convert_matpower.py OUT_DIR
"""
import json
import sys
from collections import OrderedDict
from pathlib import Path

import networkx as nx

IEEE30_DEMAND = [0, 21.7, 2.4, 7.6, 94.2, 0, 22.8, 30.0, 0, 5.8, 0, 11.2, 0, 6.2, 8.2,
                 3.5, 9.0, 3.2, 9.5, 2.2, 17.5, 0, 3.2, 8.7, 0, 3.5, 0, 0, 2.4, 10.6]
IEEE30_GENERATION = {1: 260.2, 2: 40.0}
IEEE30_BRANCHES = [
    (1, 2, 0.0575), (1, 3, 0.1652), (2, 4, 0.1737), (3, 4, 0.0379), (2, 5, 0.1983),
    (2, 6, 0.1763), (4, 6, 0.0414), (5, 7, 0.1160), (6, 7, 0.0820), (6, 8, 0.0420),
    (6, 9, 0.2080), (6, 10, 0.5560), (9, 11, 0.2080), (9, 10, 0.1100), (4, 12, 0.2560),
    (12, 13, 0.1400), (12, 14, 0.2559), (12, 15, 0.1304), (12, 16, 0.1987), (14, 15, 0.1997),
    (16, 17, 0.1923), (15, 18, 0.2185), (18, 19, 0.1292), (19, 20, 0.0680), (10, 20, 0.2090),
    (10, 17, 0.0845), (10, 21, 0.0749), (10, 22, 0.1499), (21, 22, 0.0236), (15, 23, 0.2020),
    (22, 24, 0.1790), (23, 24, 0.2700), (24, 25, 0.3292), (25, 26, 0.3800), (25, 27, 0.2087),
    (28, 27, 0.3960), (27, 29, 0.4153), (27, 30, 0.6027), (29, 30, 0.4533), (8, 28, 0.2000),
    (6, 28, 0.0599),
]


def build(name, n_bus, generation, demand, branches):
    """branches: iterable of (from, to, reactance, rate_a)."""
    merged = OrderedDict()
    for f, t, x, rate in branches:
        key = (min(f, t), max(f, t))
        susceptance = 1.0 / x
        if key in merged:
            entry = merged[key]
            entry["susceptance"] += susceptance
            entry["rate"] = entry["rate"] + rate if entry["rate"] and rate else 0.0
        else:
            merged[key] = {"from": f, "to": t, "susceptance": susceptance, "rate": rate}

    graph = nx.Graph()
    graph.add_nodes_from(range(1, n_bus + 1))
    graph.add_edges_from(merged.keys())
    pos = nx.kamada_kawai_layout(graph)
    xs = [p[0] for p in pos.values()]
    ys = [p[1] for p in pos.values()]
    span = max(max(xs) - min(xs), max(ys) - min(ys))

    buses = []
    for i in range(1, n_bus + 1):
        buses.append({
            "id": str(i),
            "x": round((pos[i][0] - min(xs)) / span * 100.0, 6),
            "y": round((pos[i][1] - min(ys)) / span * 100.0, 6),
            "generation": round(generation.get(i, 0.0), 6),
            "demand": round(max(demand[i - 1], 0.0), 6),
        })
    lines = []
    for (a, b), entry in merged.items():
        line = {
            "id": f"{entry['from']}-{entry['to']}",
            "from": str(entry["from"]),
            "to": str(entry["to"]),
            "susceptance": round(entry["susceptance"], 9),
        }
        if entry["rate"] and entry["rate"] < 9000:
            line["capacity"] = entry["rate"]
        lines.append(line)
    return {"name": name, "buses": buses, "lines": lines}


def from_pypower(name, case):
    bus = case["bus"]
    n_bus = bus.shape[0]
    assert all(int(b) == i + 1 for i, b in enumerate(bus[:, 0]))
    generation = {}
    for row in case["gen"]:
        if row[7] > 0 and row[1] > 0:
            generation[int(row[0])] = generation.get(int(row[0]), 0.0) + float(row[1])
    demand = [float(v) for v in bus[:, 2]]
    branches = [(int(r[0]), int(r[1]), float(r[3]), float(r[5]))
                for r in case["branch"] if r[10] > 0]
    return build(name, n_bus, generation, demand, branches)


def main():
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    from pypower.case14 import case14
    from pypower.case118 import case118

    grids = {
        "ieee14": from_pypower("IEEE 14", case14()),
        "ieee30": build("IEEE 30", 30, IEEE30_GENERATION, IEEE30_DEMAND,
                        [(f, t, x, 0.0) for f, t, x in IEEE30_BRANCHES]),
        "ieee118": from_pypower("IEEE 118", case118()),
    }
    for key, grid in grids.items():
        (out / f"{key}.json").write_text(json.dumps(grid, indent=1) + "\n")
        print(key, len(grid["buses"]), "buses", len(grid["lines"]), "lines")


if __name__ == "__main__":
    main()
