"""Command line front end: run scenarios, verify traces, sweep sizes."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .analysis import (
    check_trace,
    dependency_graph,
    detect_stall,
    export_gantt,
    format_metrics,
    gantt_svg,
    gantt_table,
    kahn_check,
    makespan,
    metrics,
    verify_mer,
    CycleWitness,
)
from .domain import ValidationError
from .engine import RunResult, Trace, TraceFormatError, run_mode
from .scenario import Scenario, ScenarioError, list_presets, load_scenario, preset_path

OUT_ENV = "AGENTPIPE_OUT"

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_range(text: str, default_step: int = 1) -> list[int]:
    """``"4"``, ``"1..4"`` or ``"5..60:5"`` to a list of ints."""
    try:
        span, _, step = text.partition(":")
        lo, sep, hi = span.partition("..")
        a = int(lo)
        b = int(hi) if sep else a
        st = int(step) if step else default_step
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected N, A..B or A..B:STEP") from None
    if st <= 0 or b < a or a < 1:
        raise UsageError(f"bad range {text!r}")
    return list(range(a, b + 1, st))


def with_robots(s: Scenario, k: int) -> Scenario:
    return dataclasses.replace(s, robots=[], robot_count=k)


def with_tasks_per_job(s: Scenario, n: int) -> Scenario:
    if s.workload is None:
        raise UsageError(f"scenario {s.name!r} has no generated workload to resize")
    return dataclasses.replace(s, workload=dataclasses.replace(s.workload, tasks_per_job=n))


def _load(ref: str) -> Scenario:
    try:
        return load_scenario(ref)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _apply_engine_flags(s: Scenario, args) -> Scenario:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.t_max is not None:
        changes["t_max"] = args.t_max
    if args.ticks_per_second is not None:
        changes["ticks_per_second"] = args.ticks_per_second
    if getattr(args, "service_time", None) is not None:
        changes["central_service_time"] = args.service_time
    return s.with_engine(**changes) if changes else s


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_ENV) or "agentpipe-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _problems(result: RunResult) -> list[str]:
    out = [f"MER: {v}" for v in verify_mer(result.trace)]
    source = result.engine if result.mode == "decentralized" and result.engine is not None else result.trace
    stall = detect_stall(source)
    if stall is not None:
        out.append(f"stall: {stall}")
    return out


def _emit(result: RunResult, out: Path, stem: str, svg: bool, tps: int) -> list[str]:
    trace_path = out / f"{stem}.csv"
    result.trace.write(trace_path)
    m = metrics(result.trace)
    m["status"] = result.status
    (out / f"{stem}.metrics.txt").write_text(format_metrics(m), encoding="utf-8")
    rows = export_gantt(result.trace)
    (out / f"{stem}.gantt.tsv").write_text(gantt_table(rows), encoding="utf-8")
    if svg:
        (out / f"{stem}.svg").write_text(gantt_svg(rows, tps, stem), encoding="utf-8")
    problems = _problems(result)
    flag = "ok" if not problems else "VIOLATION"
    print(f"{stem}: status={result.status} makespan={m['makespan']} "
          f"avg_completion={m['avg_completion_time']} trace={trace_path} [{flag}]")
    for p in problems:
        print(f"  {p}", file=sys.stderr)
    return problems


def cmd_run(args) -> int:
    base = _apply_engine_flags(_load(args.scenario), args)
    out = _out_dir(args)
    tps = base.engine.ticks_per_second
    robots = parse_range(args.robots) if args.robots else [None]
    sizes = parse_range(args.tasks_per_job, 5) if args.tasks_per_job else [None]
    failed = False
    spans: dict[tuple, int] = {}
    curves: dict[tuple, float] = {}
    for n in sizes:
        s_n = with_tasks_per_job(base, n) if n is not None else base
        for k in robots:
            s = with_robots(s_n, k) if k is not None else s_n
            for res in run_mode(s, args.mode):
                stem = base.name + (f"-n{n}" if n is not None else "") + (f"-k{k}" if k is not None else "")
                stem += f"-{res.mode}"
                failed |= bool(_emit(res, out, stem, args.svg, tps))
                spans[(res.mode, n, k)] = makespan(res.trace)
                curves[(res.mode, n, k)] = metrics(res.trace)["avg_completion_time"]
    if len(robots) > 1:
        print("\nmode\trobots\tmakespan\tspeedup")
        for (mode, n, k), span in spans.items():
            ref = spans[(mode, n, robots[0])]
            print(f"{mode}\t{k}\t{span}\t{ref / span if span else 0.0:.4f}")
    if len(sizes) > 1:
        modes = sorted({m for m, _, _ in curves})
        print("\ntasks_per_job\t" + "\t".join(modes))
        for n in sizes:
            print(f"{n}\t" + "\t".join(f"{curves[(m, n, robots[0])]:.1f}" for m in modes))
    return EXIT_VIOLATION if failed else EXIT_OK


def crossover(sizes: list[int], dec: list[float], cen: list[float]) -> int | None:
    """First size from which decentralized stays strictly below centralized."""
    found = None
    for n, d, c in zip(sizes, dec, cen):
        if d < c:
            found = n if found is None else found
        else:
            found = None
    return found


def cmd_sweep(args) -> int:
    base = _apply_engine_flags(_load(args.scenario), args)
    sizes = parse_range(args.tasks_per_job, 5)
    service = [int(x) for x in args.service_times.split(",")] if args.service_times else [
        base.engine.central_service_time]
    dec, cen = [], {s: [] for s in service}
    for n in sizes:
        s_n = with_tasks_per_job(base, n)
        dec.append(metrics(run_mode(s_n, "decentralized")[0].trace)["avg_completion_time"])
        for st in service:
            res = run_mode(s_n.with_engine(central_service_time=st), "centralized")[0]
            cen[st].append(metrics(res.trace)["avg_completion_time"])
    print("tasks_per_job\tdecentralized\t" + "\t".join(f"centralized(s={st})" for st in service))
    for i, n in enumerate(sizes):
        print(f"{n}\t{dec[i]:.1f}\t" + "\t".join(f"{cen[st][i]:.1f}" for st in service))
    for st in service:
        x = crossover(sizes, dec, cen[st])
        print(f"crossover(s={st}): {x if x is not None else 'none'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        trace = Trace.read(args.trace)
    except FileNotFoundError:
        print(f"error: no such trace file {args.trace}", file=sys.stderr)
        return EXIT_USAGE
    except TraceFormatError as exc:
        print(f"parse: FAIL {exc}")
        return EXIT_VIOLATION
    bad = False
    problems = check_trace(trace)
    print(f"well-formed: {'PASS' if not problems else 'FAIL'}")
    for p in problems:
        print(f"  {p}")
    bad |= bool(problems)
    try:
        mer = verify_mer(trace)
    except TraceFormatError as exc:
        print(f"mer: FAIL {exc}")
        return EXIT_VIOLATION
    print(f"mer: {'PASS' if not mer else 'FAIL'}")
    for v in mer:
        print(f"  {v}")
    bad |= bool(mer)
    order = kahn_check(dependency_graph(trace))
    if isinstance(order, CycleWitness):
        print(f"acyclic: FAIL cycle {' -> '.join(map(str, order.cycle))}")
        bad = True
    else:
        print(f"acyclic: PASS ({len(order.order)} executions)")
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in list_presets():
            print(f"{name}\t{load_scenario(preset_path(name)).description.strip().splitlines()[0]}")
        return EXIT_OK
    if not args.name:
        raise UsageError("presets describe needs a preset name")
    path = preset_path(args.name)
    if path is None:
        raise UsageError(f"unknown preset {args.name!r}; try 'presets list'")
    print(path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--t-max", type=int, help="tick budget")
    p.add_argument("--ticks-per-second", type=int)
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or ./agentpipe-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentpipe",
                                     description="Mobile-agent task pipelining simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or preset")
    run.add_argument("scenario", help="path to a YAML scenario or a preset name")
    run.add_argument("--mode", choices=["decentralized", "centralized", "both"])
    run.add_argument("--svg", action="store_true", help="also write an SVG Gantt chart")
    run.add_argument("--robots", help="robot count or range, e.g. 1..4")
    run.add_argument("--tasks-per-job", help="size range, e.g. 5..60 (step 5) or 5..60:1")
    run.add_argument("--service-time", type=int, help="central server service time in ticks")
    _engine_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="average completion time against tasks per job")
    sweep.add_argument("scenario")
    sweep.add_argument("--tasks-per-job", default="5..60")
    sweep.add_argument("--service-times", help="comma separated list, e.g. 0,1,5")
    _engine_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify", help="check a trace CSV")
    verify.add_argument("trace")
    verify.set_defaults(func=cmd_verify)

    presets = sub.add_parser("presets", help="list or show shipped presets")
    presets.add_argument("action", choices=["list", "describe"])
    presets.add_argument("name", nargs="?")
    presets.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as exc:
        print("scenario error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
