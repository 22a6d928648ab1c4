"""Command line entry point: ``libosvm run | stack-dump | abi-matrix``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .abi import format_abi_matrix
from .boot import DEFAULT_INITIAL_SP, BootConfig, build_musl_stack, format_stack_dump
from .harness import Outcome, run_scenario
from .memory import DEFAULT_MEMORY_SIZE, RODATA_BASE
from .mm import ALLOCATORS
from .scenario import ScenarioError, load_scenario

EXIT_PARSE_ERROR = 101
OUTCOME_STATUS = {
    Outcome.ASSERTION_FAILED: 102,
    Outcome.DEADLOCK: 103,
    Outcome.BUDGET_EXCEEDED: 104,
    Outcome.FAULT: 105,
}
DEFAULT_STACK_TOP = DEFAULT_MEMORY_SIZE // 2 - 16


def _int(text: str) -> int:
    return int(text, 0)


def _emit_capture(data: bytes, prefix: str, stream) -> None:
    if not data:
        return
    text = data.decode("utf-8", errors="backslashreplace")
    for line in text.splitlines():
        print(f"{prefix}{line}", file=stream)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.path)
    except ScenarioError as exc:
        print(f"{args.path}:{exc.line}:{exc.col}: error: {exc.message}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except OSError as exc:
        print(f"{args.path}: error: {exc.strerror}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    if args.allocator:
        scenario.machine.allocator = args.allocator
    if args.step_budget:
        scenario.machine.step_budget = args.step_budget
    trace = run_scenario(scenario)

    if args.trace == "-":
        sys.stdout.write(trace.serialize())
    elif args.trace:
        Path(args.trace).write_text(trace.serialize(), encoding="utf-8", newline="\n")
    if args.stdout_file:
        Path(args.stdout_file).write_bytes(trace.stdout)
    else:
        _emit_capture(trace.stdout, "[stdout] ", sys.stdout)
    if args.stderr_file:
        Path(args.stderr_file).write_bytes(trace.stderr)
    else:
        _emit_capture(trace.stderr, "[stderr] ", sys.stderr)

    sys.stdout.flush()
    if trace.outcome is Outcome.EXIT:
        return trace.exit_code & 0xFF
    print(f"{scenario.name}: {trace.outcome.value}" + (f" ({trace.detail})" if trace.detail else ""),
          file=sys.stderr)
    return OUTCOME_STATUS[trace.outcome]


def cmd_stack_dump(args: argparse.Namespace) -> int:
    try:
        BootConfig(program_name=args.program_name.encode("utf-8") + b"\0")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    image = build_musl_stack(args.initial_sp, 0, RODATA_BASE)
    if not args.paper_compat:
        image = image.relocated(args.stack_top - image.total_len)
    sys.stdout.write(format_stack_dump(image))
    return 0


def cmd_abi_matrix(args: argparse.Namespace) -> int:
    sys.stdout.write(format_abi_matrix())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libosvm", description="Scripted library-OS micro-VM")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("path")
    run.add_argument("--trace", metavar="OUT", help="write the execution trace to OUT ('-' for stdout)")
    run.add_argument("--stdout-file", metavar="PATH", help="write the guest stdout capture to PATH")
    run.add_argument("--stderr-file", metavar="PATH", help="write the guest stderr capture to PATH")
    run.add_argument("--allocator", choices=sorted(ALLOCATORS), help="override the scenario's allocator")
    run.add_argument("--step-budget", type=_int, help="override the scenario's micro-op budget")
    run.set_defaults(func=cmd_run)

    dump = sub.add_parser("stack-dump", help="print the boot stack image as hex words")
    dump.add_argument("--program-name", default="guest")
    dump.add_argument("--initial-sp", type=_int, default=DEFAULT_INITIAL_SP,
                      help="top of the build buffer (default %(default)#x)")
    dump.add_argument("--stack-top", type=_int, default=DEFAULT_STACK_TOP,
                      help="platform stack top the image is copied under (default %(default)#x)")
    dump.add_argument("--paper-compat", action="store_true",
                      help="keep AT_RANDOM pointing into the build buffer")
    dump.set_defaults(func=cmd_stack_dump)

    matrix = sub.add_parser("abi-matrix", help="print the syscall coverage table")
    matrix.set_defaults(func=cmd_abi_matrix)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
