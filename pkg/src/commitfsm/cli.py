"""Command line front end: generate machines, render artefacts, run simulations,
and benchmark generation across the family.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bft, render, sim
from .fsm import DocumentError, deserialize, serialize, validate

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_SIM_FAIL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commitfsm",
        description="Generate, render and simulate replicated-commit protocol state machines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a machine document")
    gen.add_argument("-r", "--replication-factor", type=int, required=True)
    gen.add_argument("-o", "--output", required=True)

    ren = sub.add_parser("render", help="render a machine document as an artefact")
    ren.add_argument("-i", "--input", required=True)
    ren.add_argument("--format", choices=render.FORMATS, required=True)
    ren.add_argument("-o", "--output", required=True)
    ren.add_argument("--module-name", default="commit_machine")
    ren.add_argument("--no-annotations", action="store_true")

    simp = sub.add_parser("simulate", help="run seeded fault-injection simulations")
    simp.add_argument("-r", "--replication-factor", type=int, required=True)
    simp.add_argument("--scenario", choices=sim.SCENARIOS, default=sim.SINGLE_UPDATE)
    simp.add_argument("--silent", type=int, default=0)
    simp.add_argument("--crash", type=int, default=0)
    simp.add_argument("--byzantine", type=int, default=0)
    simp.add_argument("--seeds", type=int, default=1)
    simp.add_argument("--seed", type=int, default=0, help="base seed; run i uses seed+i")
    simp.add_argument("--delivery", choices=sim.DELIVERY_MODES, default=sim.FIFO_PER_LINK)
    simp.add_argument("--trace-dir", help="write every trace into this directory")

    ben = sub.add_parser("bench", help="state counts and generation times per fault tolerance")
    ben.add_argument("--f", default="1,2,4,8,15", help="comma-separated fault tolerances")
    ben.add_argument("--format", choices=("csv",), default="csv")
    return parser


def _cmd_generate(args) -> int:
    r = args.replication_factor
    if r < bft.MIN_REPLICATION_FACTOR:
        print(
            f"error: minimum replication factor is {bft.MIN_REPLICATION_FACTOR} (got {r})",
            file=sys.stderr,
        )
        return EXIT_USAGE
    machine, stats = bft.generate_with_stats(r)
    diags = validate(machine)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_FAILURE
    Path(args.output).write_text(serialize(machine), encoding="utf-8")
    print(stats.csv_row())
    return EXIT_OK


def _cmd_render(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        machine = deserialize(text)
    except DocumentError as exc:
        print(f"error: invalid machine document: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    diags = validate(machine)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_FAILURE
    options = render.RenderOptions(
        format=args.format,
        include_annotations=not args.no_annotations,
        source_module_name=args.module_name,
    )
    try:
        artefact = render.render(machine, options)
    except render.OptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    Path(args.output).write_text(artefact, encoding="utf-8")
    return EXIT_OK


def _fault_plan(args) -> tuple[sim.Fault, ...]:
    faults = []
    node = 0
    for count, kind in (
        (args.silent, sim.SILENT),
        (args.crash, sim.CRASH),
        (args.byzantine, sim.BYZANTINE),
    ):
        for _ in range(count):
            faults.append(sim.Fault(node, kind))
            node += 1
    return tuple(faults)


def _fault_label(args) -> str:
    parts = []
    for count, kind in ((args.silent, "silent"), (args.crash, "crash"), (args.byzantine, "byzantine")):
        if count:
            parts.append(f"{kind}={count}")
    return "|".join(parts) if parts else "none"


def _cmd_simulate(args) -> int:
    r = args.replication_factor
    if r < bft.MIN_REPLICATION_FACTOR:
        print(
            f"error: minimum replication factor is {bft.MIN_REPLICATION_FACTOR} (got {r})",
            file=sys.stderr,
        )
        return EXIT_USAGE
    total_faults = args.silent + args.crash + args.byzantine
    if min(args.silent, args.crash, args.byzantine, args.seeds) < 0 or total_faults >= r:
        print("error: fault counts must be non-negative and total fewer than r", file=sys.stderr)
        return EXIT_USAGE
    machine = bft.generate(r)
    faults = _fault_plan(args)
    label = _fault_label(args)
    trace_dir = Path(args.trace_dir) if args.trace_dir else None
    if trace_dir:
        trace_dir.mkdir(parents=True, exist_ok=True)
    first_failure = None
    for i in range(args.seeds):
        seed = args.seed + i
        config = sim.SimConfig(
            replication_factor=r,
            seed=seed,
            scenario=args.scenario,
            faults=faults,
            delivery=args.delivery,
        )
        trace = sim.run_simulation(machine, config)
        verdict = sim.check_agreement(trace, config)
        print(f"{args.scenario},{r},{label},{seed},{verdict}")
        path = None
        if trace_dir:
            path = trace_dir / f"trace-{args.scenario}-r{r}-seed{seed}.txt"
            path.write_text(trace.serialize(), encoding="utf-8")
        if not verdict.ok and first_failure is None:
            if path is None:
                path = Path(f"trace-{args.scenario}-r{r}-seed{seed}.txt")
                path.write_text(trace.serialize(), encoding="utf-8")
            first_failure = path
    if first_failure is not None:
        print(f"first failing trace: {first_failure}", file=sys.stderr)
        return EXIT_SIM_FAIL
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        fs = [int(part) for part in args.f.split(",") if part.strip()]
    except ValueError:
        print(f"error: --f expects comma-separated integers, got {args.f!r}", file=sys.stderr)
        return EXIT_USAGE
    if not fs or any(f < 1 for f in fs):
        print("error: every fault tolerance must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    print("f,r,initial,final,seconds")
    for f in fs:
        r = 3 * f + 1
        _, stats = bft.generate_with_stats(r)
        seconds = float(f"{stats.millis / 1000:.2g}")
        print(f"{f},{r},{stats.initial},{stats.final},{seconds:g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    handlers = {
        "generate": _cmd_generate,
        "render": _cmd_render,
        "simulate": _cmd_simulate,
        "bench": _cmd_bench,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
