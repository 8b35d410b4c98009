"""Command line entry point: ``gcnav run | metrics | dump-graph``."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import sys
from typing import List, Optional, Sequence

import yaml

from .adapter import HttpChatAdapter
from .constraints import LibraryDefaults
from .corpus import corpus_dir
from .graph_constraint import compile_graph, dump
from .harness import (
    RunConfig,
    build_report,
    compute_metrics,
    metrics_dict,
    read_report,
    run_worlds,
    spl_term,
    write_report,
)
from .instr_graph import DecompositionError, parse_instruction_file
from .solver import SolverParams

COLUMNS = ("episode", "success", "oracle", "ne_m", "traj_m", "shortest_m", "spl", "steps", "backtracks", "reason")


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise SystemExit(f"{path}: config must be a mapping")
    return data


def config_from(args, cfg: dict) -> RunConfig:
    solver = SolverParams(**cfg.get("solver", {}))
    d = dict(cfg.get("defaults", {}))
    if "delta_phi_deg" in d:
        d["delta_phi"] = math.radians(d.pop("delta_phi_deg"))
    defaults = LibraryDefaults(**d)
    adapter = None
    url = args.adapter or cfg.get("adapter", {}).get("url")
    if url:
        adapter = HttpChatAdapter.from_config(cfg, url=url)
    return RunConfig(
        solver=solver,
        defaults=defaults,
        backtracking=not args.no_backtrack and cfg.get("backtracking", True),
        relax=args.relax_constraints or cfg.get("relax", False),
        max_motion_points=int(cfg.get("max_motion_points", 2000)),
        seed=args.seed,
        adapter=adapter,
        adapter_retries=int(cfg.get("adapter", {}).get("retries", 2)),
    )


def world_files(specs: Sequence[str]) -> List[str]:
    paths = []
    for spec in specs:
        if spec == "corpus":
            spec = corpus_dir()
        if os.path.isdir(spec):
            paths.extend(sorted(glob.glob(os.path.join(spec, "*.json"))))
        else:
            paths.append(spec)
    return paths


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return "inf" if not math.isfinite(x) else f"{x:.3f}"
    return "" if x is None else str(x)


def print_table(results, out=None) -> None:
    out = out or sys.stdout
    out.write("\t".join(COLUMNS) + "\n")
    for r in results:
        row = (
            f"{r.world}/{r.episode_id}",
            r.success,
            r.oracle_success,
            r.ne_m,
            r.traj_len_m,
            r.shortest_len_m,
            spl_term(r),
            r.solver_steps,
            r.backtracks,
            r.reason,
        )
        out.write("\t".join(_fmt(v) for v in row) + "\n")
    if results:
        m = metrics_dict(compute_metrics(results))
        out.write("\t".join(f"{k}={_fmt(v)}" for k, v in m.items()) + "\n")


def cmd_run(args) -> int:
    cfg_file = load_config(args.config)
    cfg = config_from(args, cfg_file)
    paths = world_files(args.world)
    ids = [s for s in (args.episodes or "").split(",") if s] or None
    workers = args.workers or int(cfg_file.get("workers", 1))
    results = run_worlds(paths, cfg, ids, workers=workers)
    if not results:
        print("no episodes selected", file=sys.stderr)
        return 2
    print_table(results)
    if args.report:
        write_report(build_report(results, cfg), args.report)
    if args.render:
        from .render import render_summary, render_trajectory
        from .world import load_world

        worlds = {}
        for p in paths:
            w, _ = load_world(p)
            worlds[w.name] = w
        for r in results:
            name = f"{r.world}__{r.episode_id}.svg".replace("/", "_")
            render_trajectory(worlds[r.world], r, os.path.join(args.render, name))
        render_summary(results, os.path.join(args.render, "summary.svg"))
    return 0


def cmd_metrics(args) -> int:
    results = read_report(args.report)
    print_table(results)
    if args.radius is not None:
        m = metrics_dict(compute_metrics(results, args.radius))
        print("\t".join(f"{k}={_fmt(v)}" for k, v in m.items()) + f"\tradius={args.radius}")
    return 0


def cmd_dump_graph(args) -> int:
    with open(args.instruction, encoding="utf-8") as fh:
        text = fh.read()
    try:
        g = parse_instruction_file(text)
        k = compile_graph(g)
    except DecompositionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    json.dump(dump(k), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcnav", description="Graph-constraint instruction following in 2D worlds.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run episodes and report metrics")
    run.add_argument("--world", action="append", required=True, help="world file, directory, or 'corpus'")
    run.add_argument("--episodes", help="comma-separated episode ids (id or world/id)")
    run.add_argument("--config", help="YAML or JSON run configuration")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--render", metavar="DIR", help="write one SVG per episode here")
    run.add_argument("--report", metavar="FILE", help="write the JSON report here")
    run.add_argument("--no-backtrack", action="store_true")
    run.add_argument("--relax-constraints", action="store_true")
    run.add_argument("--adapter", metavar="URL", help="chat-completion endpoint for natural-language instructions")
    run.add_argument("--workers", type=int, default=0)
    run.set_defaults(func=cmd_run)

    met = sub.add_parser("metrics", help="summarize a report file")
    met.add_argument("--report", required=True)
    met.add_argument("--radius", type=float, help="re-judge success at this radius")
    met.set_defaults(func=cmd_metrics)

    dg = sub.add_parser("dump-graph", help="print the compiled constraints of an instruction file")
    dg.add_argument("--instruction", required=True)
    dg.set_defaults(func=cmd_dump_graph)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
