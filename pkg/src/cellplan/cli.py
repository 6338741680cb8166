"""Command-line front end.

Exit codes: 0 success, 2 bad arguments, 3 I/O or file-format error,
4 infeasible query (endpoint in an obstacle, margin violation, no path).

Options may also come from a JSON config file (``--config``) whose keys are
flag names, either flat or grouped per command; flags override the config,
which overrides the defaults. ``CELLPLAN_OUTDIR`` sets the directory for
outputs whose name is not given explicitly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import QueryError
from .grid import GridFormatError, WorldSpec, generate_city_world, load_grid, save_grid

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4
OUTDIR_ENV = "CELLPLAN_OUTDIR"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(args, inputs: Sequence[str]) -> dict:
    skip = {"func", "json", "config", "command"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {
        "tool": "cellplan",
        "version": __version__,
        "command": args.command,
        "params": params,
        "seed": params.get("seed"),
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs],
    }


def _out_path(explicit: Optional[str], default_name: str) -> str:
    if explicit:
        return explicit
    return os.path.join(os.environ.get(OUTDIR_ENV, "."), default_name)


def _write_json(path: str, doc: dict) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def _write_sidecar(path: str, manifest: dict) -> None:
    _write_json(path + ".manifest.json", manifest)


def _read_json(path: str) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    if not text.strip():
        raise InputError(f"{path} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def _load_grid(path: str):
    try:
        return load_grid(path)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except GridFormatError as e:
        raise InputError(f"{path}: {e}") from e


def _load_decomposition(path: str):
    from .decomp import Decomposition

    try:
        return Decomposition.from_dict(_read_json(path))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from e


def _load_graph(path: str):
    from .cellgraph import ConnectivityGraph

    try:
        return ConnectivityGraph.from_dict(_read_json(path))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from e


def _stem(path: str) -> str:
    base = os.path.basename(path)
    for ext in (".og3d", ".decomp.json", ".graph.json", ".path.json", ".json"):
        if base.endswith(ext):
            return base[: -len(ext)]
    return os.path.splitext(base)[0]


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> dict:
    spec = WorldSpec(L=args.L, H=args.H, block=args.block, seed=args.seed,
                     max_boxes=args.max_boxes, setback=args.setback, resolution=args.resolution)
    try:
        spec.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    grid = generate_city_world(spec)
    out = _out_path(args.output, f"world_L{args.L}_H{args.H}_s{args.seed}.og3d")
    d = os.path.dirname(out)
    if d:
        os.makedirs(d, exist_ok=True)
    save_grid(grid, out)
    _write_sidecar(out, _manifest(args, []))
    return {"output": out, "dims": list(grid.dims), "obstacle_voxels": int(grid.occupancy.sum())}


def _graph_doc(graph, eps: float, manifest: dict) -> dict:
    doc = graph.to_dict()
    doc["eps"] = eps
    doc["manifest"] = manifest
    return doc


def cmd_decompose(args) -> dict:
    from .cellgraph import prepare_graph
    from .decomp import decompose
    from .verify import verify_decomposition

    grid = _load_grid(args.grid)
    t0 = time.perf_counter()
    dec = decompose(grid)
    elapsed = time.perf_counter() - t0
    manifest = _manifest(args, [args.grid])
    out = _out_path(args.output, _stem(args.grid) + ".decomp.json")
    doc = dec.to_dict(include_coverage=args.coverage)
    doc["manifest"] = manifest
    _write_json(out, doc)
    summary: Dict[str, Any] = {"output": out, "cells": dec.cell_count,
                               "free_cells": int((~dec.occ).sum()), "time": elapsed}
    if args.verify:
        rep = verify_decomposition(grid, dec)
        summary["verify"] = rep.to_dict()
        summary["verify_lines"] = rep.lines()
    if args.graph:
        graph, _ = prepare_graph(dec, grid, args.eps)
        gout = out[: -len(".decomp.json")] + ".graph.json" if out.endswith(".decomp.json") else out + ".graph.json"
        _write_json(gout, _graph_doc(graph, args.eps, manifest))
        summary["graph"] = gout
        summary["edges"] = graph.n_edges
    return summary


def cmd_graph(args) -> dict:
    from .cellgraph import prepare_graph

    grid = _load_grid(args.grid)
    dec = _load_decomposition(args.decomp)
    graph, _ = prepare_graph(dec, grid, args.eps)
    out = _out_path(args.output, _stem(args.decomp) + ".graph.json")
    _write_json(out, _graph_doc(graph, args.eps, _manifest(args, [args.grid, args.decomp])))
    return {"output": out, "vertices": len(graph.vertices), "edges": graph.n_edges,
            "objective": graph.objective}


def cmd_plan(args) -> dict:
    from .baseline import theta_star
    from .cellgraph import compute_margins, prepare_graph
    from .optimize import PathQuery, astar_socp, exact_shortest_path, ksp_socp

    grid = _load_grid(args.grid)
    inputs = [args.grid]
    start = np.array(args.start, dtype=float)
    goal = np.array(args.goal, dtype=float)
    query = PathQuery(start, goal, args.eps, args.deadline, args.kmax)
    if args.planner == "theta":
        p = theta_star(grid, start, goal)
        if p is None:
            raise QueryError("goal unreachable from start")
        doc = p.to_dict()
        length = p.length
    else:
        if not args.decomp:
            raise UsageError(f"--decomp is required for planner {args.planner}")
        dec = _load_decomposition(args.decomp)
        inputs.append(args.decomp)
        if args.graph:
            graph = _load_graph(args.graph)
            inputs.append(args.graph)
            margins = compute_margins(dec, grid, args.eps)
        else:
            graph, margins = prepare_graph(dec, grid, args.eps)
        if args.planner == "astar-socp":
            res = astar_socp(graph, dec, query, margins)
        elif args.planner == "ksp-socp":
            res = ksp_socp(graph, dec, query, margins)
        else:
            res = exact_shortest_path(graph, dec, query, margins, node_cap=args.node_cap)
        if res.path is None:
            raise QueryError("goal unreachable from start")
        doc = res.path.to_dict(timings=args.timings)
        doc["meta"].update({"truncated": res.truncated, "exhausted": res.exhausted})
        length = res.path.length
    doc["manifest"] = _manifest(args, inputs)
    out = _out_path(args.output, f"path_{args.planner}.path.json")
    _write_json(out, doc)
    return {"output": out, "planner": args.planner, "length": length,
            "waypoints": len(doc["waypoints"])}


def cmd_bench(args) -> dict:
    from .bench import (BenchRecord, quadratic_fit, run_planner_suite, default_query,
                        world_record, write_csv, write_trace, edge_statistics)
    from .optimize import PathQuery

    outdir = args.output or os.environ.get(OUTDIR_ENV, "bench_out")
    os.makedirs(os.path.join(outdir, "traces"), exist_ok=True)
    worlds: List[BenchRecord] = []
    rows: List[BenchRecord] = []
    degrees: List[int] = []
    for L in args.L:
        for seed in args.seeds:
            spec = WorldSpec(L=L, H=args.H, block=args.block, seed=seed)
            try:
                spec.validate()
            except ValueError as e:
                raise UsageError(str(e)) from e
            rec, grid, dec, graph, margins = world_record(spec)
            worlds.append(rec)
            degrees.extend(graph.degrees().tolist())
            q = default_query(grid)
            q = PathQuery(q.w_in, q.w_t, args.eps)
            for r in run_planner_suite(rec, grid, dec, graph, margins, q, args.planners,
                                       args.deadline, args.kmax, args.node_cap):
                rows.append(r)
                if r.trace:
                    write_trace(r, os.path.join(outdir, "traces", f"L{L}_s{seed}_{r.planner}.csv"))
    dcsv = os.path.join(outdir, "decomposition.csv")
    pcsv = os.path.join(outdir, "planners.csv")
    tcsv = os.path.join(outdir, "timings.csv")
    cols = ("L", "H", "block", "seed", "cell_count", "edge_count", "memory_bytes")
    write_csv(worlds, dcsv, cols)
    write_csv(rows, pcsv)
    write_csv(worlds + rows, tcsv, BenchRecord.TIMED)
    manifest = _manifest(args, [])
    for p in (dcsv, pcsv, tcsv):
        _write_sidecar(p, manifest)
    summary: Dict[str, Any] = {"output": outdir, "worlds": len(worlds), "rows": len(rows),
                               "edge_stats": edge_statistics(degrees)}
    if len({r.L for r in worlds}) > 1:
        a, r2 = quadratic_fit([r.L for r in worlds], [r.cell_count for r in worlds])
        summary.update(coefficient=a, r2=r2)
    return summary


def _box_obj(lo, hi, base: int) -> List[str]:
    lines = []
    for c in range(8):
        v = [hi[k] if (c >> k) & 1 else lo[k] for k in range(3)]
        lines.append("v {:.9g} {:.9g} {:.9g}".format(*v))
    quads = [(0, 2, 6, 4), (1, 5, 7, 3), (0, 4, 5, 1), (2, 3, 7, 6), (0, 1, 3, 2), (4, 6, 7, 5)]
    for q in quads:
        lines.append("f " + " ".join(str(base + i + 1) for i in q))
    return lines


def cmd_export(args) -> dict:
    from .decomp import DECOMP_FORMAT, Decomposition
    from .optimize import PATH_FORMAT

    doc = _read_json(args.input)
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt == DECOMP_FORMAT:
        dec = _load_decomposition(args.input)
        boxes = [dec.box_meters(int(n)) for n in dec.free_ids()]
        ids = [int(n) for n in dec.free_ids()]
        if args.format == "json":
            payload: Any = {"kind": "boxes", "boxes": [{"cell": i, "lo": lo.tolist(), "hi": hi.tolist()}
                                                       for i, (lo, hi) in zip(ids, boxes)]}
        else:
            lines = []
            for n, (i, (lo, hi)) in enumerate(zip(ids, boxes)):
                lines.append(f"o cell_{i}")
                lines += _box_obj(lo, hi, 8 * n)
            payload = "\n".join(lines) + "\n"
        kind, count = "boxes", len(boxes)
    elif fmt == PATH_FORMAT:
        pts = doc.get("waypoints") or []
        if not pts:
            raise InputError(f"{args.input} contains no waypoints")
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if doc.get("cells"):
            from .optimize import collapse
            pts = collapse(pts)
        if args.format == "json":
            payload = {"kind": "polyline", "points": pts.tolist()}
        else:
            lines = ["o path"] + ["v {:.9g} {:.9g} {:.9g}".format(*p) for p in pts]
            lines.append("l " + " ".join(str(i + 1) for i in range(len(pts))))
            payload = "\n".join(lines) + "\n"
        kind, count = "polyline", len(pts)
    else:
        raise InputError(f"{args.input}: unrecognised document format {fmt!r}")
    out = _out_path(args.output, _stem(args.input) + "." + args.format)
    manifest = _manifest(args, [args.input])
    if args.format == "json":
        payload["manifest"] = manifest
        _write_json(out, payload)
    else:
        with open(out, "w") as f:
            f.write(f"# cellplan {__version__} export of {args.input}\n")
            f.write(payload)
        _write_sidecar(out, manifest)
    return {"output": out, "kind": kind, "count": count}


# ---------------------------------------------------------------------------
# parser


def _point(s: str) -> List[float]:
    parts = s.replace(",", " ").split()
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three coordinates, got {s!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a machine-readable summary")
    common.add_argument("--config", help="JSON file with default option values")

    p = argparse.ArgumentParser(prog="cellplan", parents=[common],
                                description="Cell decomposition path planning on 3D occupancy grids.")
    p.add_argument("--version", action="version", version=f"cellplan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a random city world")
    g.add_argument("--L", type=int, required=True, help="XY side length in voxels")
    g.add_argument("--H", type=int, required=True, help="height in voxels")
    g.add_argument("--block", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-boxes", type=int, default=5)
    g.add_argument("--setback", type=int, default=2)
    g.add_argument("--resolution", type=float, default=1.0)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("decompose", parents=[common], help="decompose a grid into cells")
    d.add_argument("grid")
    d.add_argument("-o", "--output")
    d.add_argument("--verify", action="store_true", help="run the independent verifier")
    d.add_argument("--graph", action="store_true", help="also write the connectivity graph")
    d.add_argument("--eps", type=float, default=1.0, help="safety margin in meters")
    d.add_argument("--coverage", action="store_true", help="store the coverage map")
    d.set_defaults(func=cmd_decompose)

    gr = sub.add_parser("graph", parents=[common], help="build the connectivity graph")
    gr.add_argument("grid")
    gr.add_argument("decomp")
    gr.add_argument("--eps", type=float, default=1.0)
    gr.add_argument("-o", "--output")
    gr.set_defaults(func=cmd_graph)

    pl = sub.add_parser("plan", parents=[common], help="plan a path")
    pl.add_argument("--grid", required=True)
    pl.add_argument("--decomp")
    pl.add_argument("--graph")
    pl.add_argument("--planner", choices=("theta", "astar-socp", "ksp-socp", "exact"), default="ksp-socp")
    pl.add_argument("--start", type=_point, required=True, help="x,y,z in meters")
    pl.add_argument("--goal", type=_point, required=True, help="x,y,z in meters")
    pl.add_argument("--eps", type=float, default=1.0)
    pl.add_argument("--kmax", type=int)
    pl.add_argument("--deadline", type=float, help="seconds")
    pl.add_argument("--node-cap", type=int, default=200_000)
    pl.add_argument("--timings", action="store_true",
                    help="store elapsed seconds in the trace (output no longer reproducible)")
    pl.add_argument("-o", "--output")
    pl.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", parents=[common], help="run the benchmark suite")
    b.add_argument("--L", type=int, nargs="+", default=[100])
    b.add_argument("--H", type=int, default=200)
    b.add_argument("--block", type=int, default=50)
    b.add_argument("--seeds", type=int, nargs="+", default=[0])
    b.add_argument("--planners", nargs="+", default=["theta", "astar-socp", "ksp-socp", "exact"],
                   choices=("theta", "astar-socp", "ksp-socp", "exact"))
    b.add_argument("--eps", type=float, default=1.0)
    b.add_argument("--kmax", type=int, default=10)
    b.add_argument("--deadline", type=float)
    b.add_argument("--node-cap", type=int, default=20_000)
    b.add_argument("-o", "--output", help="output directory")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export", parents=[common], help="export geometry for viewers")
    e.add_argument("input", help="decomposition or path file")
    e.add_argument("--format", choices=("json", "obj"), default="json")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_export)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = _read_json(known.config)
    if not isinstance(cfg, dict):
        raise InputError(f"{known.config}: config must be a JSON object")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subs.choices.items():
        dests = {a.dest for a in sp._actions}
        values = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
        values.update({k.replace("-", "_"): v for k, v in cfg.get(name, {}).items()})
        values = {k: v for k, v in values.items() if k in dests}
        if values:
            # config values satisfy required flags too
            for a in sp._actions:
                if a.dest in values:
                    a.required = False
            sp.set_defaults(**values)


def _emit(summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary, sort_keys=True, default=float))
        return
    for k, v in summary.items():
        if k == "verify_lines":
            for line in v:
                print(line)
        elif k != "verify":
            print(f"{k}: {v}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except InputError as e:
        print(f"cellplan: error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        summary = args.func(args)
    except UsageError as e:
        print(f"cellplan: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as e:
        print(f"cellplan: error: {e}", file=sys.stderr)
        return EXIT_IO
    except QueryError as e:
        print(f"cellplan: infeasible query: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as e:
        print(f"cellplan: error: {e}", file=sys.stderr)
        return EXIT_IO
    if "verify" in summary:
        summary["verified"] = summary["verify"]["passed"]
    _emit(summary, args.json)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
