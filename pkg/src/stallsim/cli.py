"""Command-line interface.

Exit codes: 0 success, 1 tool/input error, 2 deadlock found.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dse as dse_mod
from . import generator, oracle, traversal
from .graph import CompilerConfig, SimGraph, compile as compile_graph, dump_graph, load_graph
from .schedule import Schedule, parse_schedule, resolve
from .trace import Trace, expand_loops, parse_trace, validate_trace, write_trace
from .traversal import DepthVector

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEADLOCK = 2


class CliError(Exception):
    pass


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    return p.read_text()


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_range(text: str, what: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..", 1)
        return int(lo), int(hi)
    except ValueError:
        raise CliError(f"bad {what} {text!r}, expected <lo>..<hi>") from None


def _parse_depths(text: str) -> dict[str, int]:
    depths: dict[str, int] = {}
    if text.startswith("@"):
        for lineno, raw in enumerate(_read(text[1:]).splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise CliError(f"{text[1:]}:{lineno}: expected '<fifo-id> <depth>'")
            depths[parts[0]] = int(parts[1])
        return depths
    for item in text.split(","):
        if "=" not in item:
            raise CliError(f"bad depth {item!r}, expected fifo=value")
        fifo, value = item.split("=", 1)
        depths[fifo.strip()] = int(value)
    return depths


def _load_design(args) -> tuple[Schedule, Trace]:
    schedule = parse_schedule(_read(args.schedule))
    trace = parse_trace(_read(args.trace))
    violations = validate_trace(trace, schedule)
    if violations:
        for v in violations:
            print(f"error: record {v.index}: {v.message}", file=sys.stderr)
        raise CliError(f"trace failed validation with {len(violations)} finding(s)")
    return schedule, trace


def _config(args) -> CompilerConfig:
    return CompilerConfig(eliminate=not getattr(args, "no_eliminate", False))


def _depth_vector(args, schedule: Schedule) -> DepthVector:
    if not args.depths:
        raise CliError("--depths is required")
    depths = _parse_depths(args.depths)
    missing = schedule.fifos - set(depths)
    if missing:
        raise CliError(f"missing depths for fifos: {', '.join(sorted(missing))}")
    return DepthVector(depths)


def _sim_report(args, graph: SimGraph, depths: DepthVector, result, source: str) -> int:
    if args.format == "json":
        doc = {
            "source": source,
            "depths": dict(sorted(depths.depths.items())),
            "cycles": result.cycles,
            "deadlock": result.is_deadlock,
        }
        if result.is_deadlock and result.witness and graph is not None:
            doc["witness"] = [graph.node_label(n) for n in result.witness]
        _write_out(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.out)
    else:
        lines = []
        if result.is_deadlock:
            lines.append("DEADLOCK")
            if result.witness and graph is not None:
                lines.append("cycle:")
                lines.extend(f"  {graph.node_label(n)}" for n in result.witness)
        else:
            lines.append(f"cycles: {result.cycles}")
            if graph is not None and source == "graph":
                path = traversal.critical_path(graph, depths)
                lines.append(f"critical path ({len(path)} nodes):")
                show = path if len(path) <= 20 else path[:10] + ["..."] + path[-9:]
                for n in show:
                    lines.append(f"  {n if isinstance(n, str) else graph.node_label(n)}")
        _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_DEADLOCK if result.is_deadlock else EXIT_OK


def cmd_simulate(args) -> int:
    schedule, trace = _load_design(args)
    depths = _depth_vector(args, schedule)
    graph = compile_graph(resolve(trace, schedule), schedule, _config(args))
    result = traversal.simulate(graph, depths)
    return _sim_report(args, graph, depths, result, "graph")


def cmd_oracle(args) -> int:
    schedule, trace = _load_design(args)
    depths = _depth_vector(args, schedule)
    result = oracle.simulate_events(resolve(trace, schedule), schedule, depths, _config(args))
    return _sim_report(args, None, depths, result, "oracle")


def _stats_text(stats) -> str:
    return (
        f"nodes: {stats.nodes_before_elim} -> {stats.nodes_after_elim} "
        f"({stats.node_reduction:.2%} reduced)\n"
        f"edges: {stats.edges_before_elim} -> {stats.edges_after_elim} "
        f"({stats.edge_reduction:.2%} reduced)\n"
        f"max pending: {stats.max_pending}\n"
        f"max static stage: {stats.max_static_stage}\n"
    )


def cmd_compile(args) -> int:
    schedule, trace = _load_design(args)
    graph = compile_graph(resolve(trace, schedule), schedule, _config(args))
    if args.out:
        Path(args.out).write_bytes(dump_graph(graph))
    if args.format == "json":
        stats = graph.stats
        doc = {
            "nodes_before_elim": stats.nodes_before_elim,
            "nodes_after_elim": stats.nodes_after_elim,
            "edges_before_elim": stats.edges_before_elim,
            "edges_after_elim": stats.edges_after_elim,
            "node_reduction": round(stats.node_reduction, 6),
            "edge_reduction": round(stats.edge_reduction, 6),
            "max_pending": stats.max_pending,
            "max_static_stage": stats.max_static_stage,
        }
        print(json.dumps(doc, sort_keys=True, indent=2))
    else:
        print(_stats_text(graph.stats), end="")
    return EXIT_OK


def cmd_dse(args) -> int:
    if args.graph:
        graph = load_graph(Path(args.graph).read_bytes())
    else:
        if not (args.schedule and args.trace):
            raise CliError("dse needs --graph or both --schedule and --trace")
        schedule, trace = _load_design(args)
        graph = compile_graph(resolve(trace, schedule), schedule, _config(args))

    fifos = graph.fifos
    if args.sweep:
        fifo, _, rng = args.sweep.partition(":")
        if not args.depths:
            raise CliError("--sweep needs --depths as the base vector")
        base = DepthVector(_parse_depths(args.depths))
        spec = dse_mod.DseSpec(
            mode="sweep", sweep_fifo=fifo, sweep_range=_parse_range(rng, "sweep range"),
            base=base, parallelism=args.parallelism,
        )
    elif args.random:
        spec = dse_mod.DseSpec(
            mode="random", fifos=fifos, count=args.random, seed=args.seed,
            depth_range=_parse_range(args.range, "depth range"), parallelism=args.parallelism,
        )
    elif args.depths:
        spec = dse_mod.DseSpec(
            mode="explicit", points=(DepthVector(_parse_depths(args.depths)),),
            parallelism=args.parallelism,
        )
    else:
        raise CliError("dse needs --sweep, --random or --depths")

    points = dse_mod.sample(spec)
    report = dse_mod.evaluate(graph, points, args.parallelism)
    include_timing = not args.no_timing
    if args.format == "csv":
        _write_out(dse_mod.report_to_csv(report, include_timing), args.out)
    elif args.format == "json":
        _write_out(dse_mod.report_to_json(report, include_timing), args.out)
    else:
        best = report.best
        lines = [
            f"points: {len(report.points)}",
            f"deadlocks: {report.deadlock_count}",
        ]
        if best is not None:
            depths = " ".join(f"{k}={v}" for k, v in sorted(best.depths.depths.items()))
            lines.append(f"best: {best.result.cycles} cycles at {depths} "
                         f"(total depth {best.depths.total})")
        if include_timing:
            lines.append(f"wall: {report.wall_seconds:.3f}s  "
                         f"mean point: {report.mean_point_micros:.0f}us  "
                         f"effective speedup: {report.effective_speedup:.2f}x")
        _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.preset:
        presets = {
            "backpressure": generator.backpressure_design,
            "cross": generator.cross_design,
            "chain-loop": generator.chain_loop_design,
            "big": generator.big_design,
        }
        if args.preset not in presets:
            raise CliError(f"unknown preset {args.preset!r} (choose from {', '.join(presets)})")
        design = presets[args.preset]()
    else:
        params = generator.GenParams(
            seed=args.seed,
            modules=_parse_range(args.modules, "module range"),
            fifos=_parse_range(args.fifos, "fifo range"),
            max_tripcount=args.max_tripcount,
            pipelined_prob=args.pipelined_prob,
            axi_interfaces=_parse_range(args.axi, "axi range"),
            tokens=_parse_range(args.tokens, "token range"),
            topology=args.topology,
        )
        design = generator.gen_design(params)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "design.sched").write_text(design.schedule_text)
    (out_dir / "design.trace").write_text(design.trace_text)
    depth_lines = "".join(f"{f} {d}\n" for f, d in sorted(design.tokens.items()))
    (out_dir / "design.depths").write_text(depth_lines)
    print(f"wrote design.sched, design.trace, design.depths to {out_dir}")
    return EXIT_OK


def cmd_expand(args) -> int:
    trace = parse_trace(_read(args.trace))
    _write_out(write_trace(expand_loops(trace)), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    schedule = parse_schedule(_read(args.schedule))
    trace = parse_trace(_read(args.trace))
    violations = validate_trace(trace, schedule)
    if violations:
        for v in violations:
            print(f"record {v.index}: {v.message}", file=sys.stderr)
        print(f"{len(violations)} finding(s)", file=sys.stderr)
        return EXIT_ERROR
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stallsim",
                                     description="Cycle simulator for dataflow designs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, schedule=True, trace=True):
        if schedule:
            p.add_argument("--schedule", required=False)
        if trace:
            p.add_argument("--trace", required=False)
        p.add_argument("--format", choices=("json", "csv", "text"), default="text")
        p.add_argument("-o", "--out", default=None)

    p = sub.add_parser("simulate", help="compile a design and compute its cycle count")
    add_io(p)
    p.add_argument("--depths", required=True)
    p.add_argument("--no-eliminate", action="store_true")
    p.set_defaults(func=cmd_simulate, requires=("schedule", "trace"))

    p = sub.add_parser("compile", help="compile a design to a graph dump")
    add_io(p)
    p.add_argument("--no-eliminate", action="store_true")
    p.set_defaults(func=cmd_compile, requires=("schedule", "trace"))

    p = sub.add_parser("dse", help="explore fifo depth vectors")
    add_io(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--depths", default=None)
    p.add_argument("--sweep", default=None, metavar="FIFO:LO..HI")
    p.add_argument("--random", type=int, default=None, metavar="COUNT")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--range", default="1..16", metavar="LO..HI")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--no-eliminate", action="store_true")
    p.add_argument("--no-timing", action="store_true",
                   help="omit timing fields for reproducible output")
    p.set_defaults(func=cmd_dse, requires=())

    p = sub.add_parser("oracle", help="run the reference event simulator")
    add_io(p)
    p.add_argument("--depths", required=True)
    p.add_argument("--no-eliminate", action="store_true")
    p.set_defaults(func=cmd_oracle, requires=("schedule", "trace"))

    p = sub.add_parser("gen", help="generate a synthetic design")
    p.add_argument("--preset", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modules", default="2..5")
    p.add_argument("--fifos", default="1..6")
    p.add_argument("--max-tripcount", type=int, default=16)
    p.add_argument("--pipelined-prob", type=float, default=0.7)
    p.add_argument("--axi", default="0..1")
    p.add_argument("--tokens", default="2..12")
    p.add_argument("--topology", choices=generator.TOPOLOGIES, default="random-dag")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_gen, requires=())

    p = sub.add_parser("expand", help="expand loop regions of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_expand, requires=("trace",))

    p = sub.add_parser("validate", help="check a trace against its schedule")
    p.add_argument("--schedule", required=True)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_validate, requires=("schedule", "trace"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for required in args.requires:
        if not getattr(args, required, None):
            parser.error(f"--{required} is required for {args.command}")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
