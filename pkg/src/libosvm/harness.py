"""Scripted micro-VM that drives guest threads through the real trap path.

Each guest thread runs a script of micro-ops. The pc is a byte address inside
the script's code window (one 4-byte slot per op), so a frame alone says
which script and op a thread resumes at. Kernel and guest communicate only
through the TrapFrame passed to ``handle_sys`` and through guest memory.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .abi import MASK64, to_signed
from .boot import BootConfig, BootFault, BootSequence
from .kernel import Event, HardFault, KernelState
from .memory import STDERR_DEVICE, STDOUT_DEVICE, GuestMemory, GuestMemoryError
from .sched import Deadlock, SystemHalt
from .trapframe import ABI_NAMES, INSN_SIZE, TrapFrame, decode_pc, script_entry_pc

DEFAULT_STEP_BUDGET = 1_000_000


# -- micro-ops ----------------------------------------------------------------

@dataclass(frozen=True)
class SetReg:
    rd: int
    value: int


@dataclass(frozen=True)
class Move:
    rd: int
    rs: int


@dataclass(frozen=True)
class AddImm:
    rd: int
    rs: int
    imm: int


@dataclass(frozen=True)
class LoadWord:
    rd: int
    base: int
    offset: int
    width: int
    signed: bool = False


@dataclass(frozen=True)
class StoreWord:
    rs: int
    base: int
    offset: int
    width: int


@dataclass(frozen=True)
class Syscall:
    pass


@dataclass(frozen=True)
class AssertReg:
    reg: int
    expected: int


@dataclass(frozen=True)
class AssertMem:
    base: int
    offset: int
    expected: bytes


@dataclass(frozen=True)
class Jump:
    target: int


@dataclass(frozen=True)
class JumpIfZero:
    reg: int
    target: int


@dataclass(frozen=True)
class Halt:
    pass


MicroOp = SetReg | Move | AddImm | LoadWord | StoreWord | Syscall | AssertReg | AssertMem | Jump | JumpIfZero | Halt


@dataclass
class GuestScript:
    name: str
    ops: list
    labels: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for op in self.ops:
            target = getattr(op, "target", None)
            if target is not None and not 0 <= target <= len(self.ops):
                raise HarnessFault(f"script {self.name!r}: jump target {target} out of range")


class HarnessFault(RuntimeError):
    pass


class AssertionFailed(Exception):
    def __init__(self, tid, op_index, what, expected, actual):
        super().__init__(f"tid {tid} op {op_index}: {what} expected {expected} got {actual}")
        self.tid, self.op_index, self.what = tid, op_index, what
        self.expected, self.actual = expected, actual


class StepEvent(enum.Enum):
    CONTINUED = "continued"  # stopped by the step budget
    TRAPPED = "trapped"
    HALTED = "halted"
    ASSERT_FAILED = "assert_failed"


@dataclass
class StepResult:
    frame: TrapFrame
    event: StepEvent
    steps: int
    failure: AssertionFailed | None = None


def step_thread(script: GuestScript, frame: TrapFrame, mem: GuestMemory, budget: int,
                tid: int | None = None, log: list | None = None) -> StepResult:
    """Run ``script`` from ``frame.pc`` until an ecall, a halt, a failed assertion or ``budget`` ops."""
    frame = frame.copy()
    regs = frame.regs
    ops = script.ops
    _, index = decode_pc(frame.pc)
    base_pc = frame.pc - index * INSN_SIZE
    steps = 0
    while True:
        if index >= len(ops):
            frame.pc = base_pc + index * INSN_SIZE
            return StepResult(frame, StepEvent.HALTED, steps)
        if steps >= budget:
            frame.pc = base_pc + index * INSN_SIZE
            return StepResult(frame, StepEvent.CONTINUED, steps)
        op = ops[index]
        steps += 1
        kind = type(op)
        if kind is Syscall:
            frame.pc = base_pc + index * INSN_SIZE
            return StepResult(frame, StepEvent.TRAPPED, steps)
        if kind is SetReg:
            if op.rd:
                regs[op.rd] = op.value & MASK64
        elif kind is AddImm:
            if op.rd:
                regs[op.rd] = (regs[op.rs] + op.imm) & MASK64
        elif kind is Move:
            if op.rd:
                regs[op.rd] = regs[op.rs]
        elif kind is JumpIfZero:
            if regs[op.reg] == 0:
                index = op.target
                continue
        elif kind is Jump:
            index = op.target
            continue
        elif kind is LoadWord:
            value = mem.load_word((regs[op.base] + op.offset) & MASK64, op.width)
            if op.signed:
                value = to_signed(value, 8 * op.width) & MASK64
            if op.rd:
                regs[op.rd] = value
        elif kind is StoreWord:
            mem.store_word((regs[op.base] + op.offset) & MASK64, regs[op.rs], op.width)
        elif kind is AssertReg:
            expected = op.expected & MASK64
            ok = regs[op.reg] == expected
            if log is not None:
                log.append(Event("assert", (ABI_NAMES[op.reg],), (
                    ("tid", tid), ("op", index), ("expected", f"{expected:#x}"),
                    ("actual", f"{regs[op.reg]:#x}"), ("result", "ok" if ok else "fail"))))
            if not ok:
                frame.pc = base_pc + index * INSN_SIZE
                failure = AssertionFailed(tid, index, ABI_NAMES[op.reg], f"{expected:#x}", f"{regs[op.reg]:#x}")
                return StepResult(frame, StepEvent.ASSERT_FAILED, steps, failure)
        elif kind is AssertMem:
            addr = (regs[op.base] + op.offset) & MASK64
            actual = mem.read_bytes(addr, len(op.expected))
            ok = actual == op.expected
            if log is not None:
                log.append(Event("assert", ("mem",), (
                    ("tid", tid), ("op", index), ("addr", f"{addr:#x}"), ("expected", op.expected.hex()),
                    ("actual", actual.hex()), ("result", "ok" if ok else "fail"))))
            if not ok:
                frame.pc = base_pc + index * INSN_SIZE
                failure = AssertionFailed(tid, index, f"mem[{addr:#x}]", op.expected.hex(), actual.hex())
                return StepResult(frame, StepEvent.ASSERT_FAILED, steps, failure)
        elif kind is Halt:
            frame.pc = base_pc + index * INSN_SIZE
            return StepResult(frame, StepEvent.HALTED, steps)
        else:
            raise HarnessFault(f"unknown micro-op {op!r}")
        index += 1


# -- scenario execution -------------------------------------------------------

@dataclass
class MachineConfig:
    memory_size: int = 16 << 20
    heap_start: int | None = None
    heap_size: int | None = None
    stack_top: int | None = None
    allocator: str = "freelist"
    step_budget: int = DEFAULT_STEP_BUDGET

    def make_memory(self) -> GuestMemory:
        start = self.memory_size // 2 if self.heap_start is None else self.heap_start
        heap_end = None if self.heap_size is None else start + self.heap_size
        return GuestMemory(self.memory_size, self.heap_start, heap_end, self.stack_top)


@dataclass
class Expectations:
    exit_code: int | None = None
    stdout: bytes | None = None
    stderr: bytes | None = None


@dataclass
class Scenario:
    scripts: list[GuestScript]
    machine: MachineConfig = field(default_factory=MachineConfig)
    boot: BootConfig = field(default_factory=BootConfig)
    data: list[tuple[int, bytes]] = field(default_factory=list)
    expect: Expectations = field(default_factory=Expectations)
    name: str = "scenario"


class Outcome(enum.Enum):
    EXIT = "exit"
    ASSERTION_FAILED = "assertion_failed"
    DEADLOCK = "deadlock"
    BUDGET_EXCEEDED = "budget_exceeded"
    FAULT = "fault"


@dataclass
class ExecutionTrace:
    events: list[Event] = field(default_factory=list)
    outcome: Outcome | None = None
    exit_code: int | None = None
    steps: int = 0
    stdout: bytes = b""
    stderr: bytes = b""
    detail: str = ""

    def append(self, event: Event) -> None:
        self.events.append(event)

    def lines(self) -> list[str]:
        return [event.render() for event in self.events]

    def serialize(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def kinds(self) -> list[str]:
        return [event.kind for event in self.events]


def run_scenario(scenario: Scenario) -> ExecutionTrace:
    trace = ExecutionTrace()
    mem = scenario.machine.make_memory()
    for addr, blob in scenario.data:
        mem.write_bytes(addr, blob)
    kernel = KernelState(mem, sink=trace.append)
    try:
        frame = BootSequence(kernel, scenario.boot).boot(script_entry_pc(0), scenario.machine.allocator)
    except (BootFault, HardFault, GuestMemoryError) as exc:
        _finish(trace, Outcome.FAULT, detail=f"boot:{type(exc).__name__}")
    else:
        execute(kernel, mem, scenario.scripts, frame, scenario.machine.step_budget, trace)
    trace.stdout = mem.capture(STDOUT_DEVICE) if mem.mmio_regions else b""
    trace.stderr = mem.capture(STDERR_DEVICE) if mem.mmio_regions else b""
    _check_expectations(scenario.expect, trace)
    trace.append(Event("end", (), (("outcome", trace.outcome.value), ("code", trace.exit_code),
                                   ("steps", trace.steps))))
    return trace


def execute(kernel, mem: GuestMemory, scripts: list[GuestScript], frame: TrapFrame,
            budget: int, trace: ExecutionTrace) -> None:
    """The run loop. Touches the kernel only through ``handle_sys`` and ``current_tid``."""
    steps = 0
    while True:
        try:
            script_index, _ = decode_pc(frame.pc)
            script = scripts[script_index]
        except (ValueError, IndexError):
            trace.steps = steps
            return _finish(trace, Outcome.FAULT, detail=f"bad_pc:{frame.pc:#x}")
        tid = kernel.current_tid
        try:
            result = step_thread(script, frame, mem, budget - steps, tid, trace.events)
        except GuestMemoryError as exc:
            trace.steps = steps
            return _finish(trace, Outcome.FAULT, detail=f"memory:{type(exc).__name__}", tid=tid)
        steps += result.steps
        trace.steps = steps
        frame = result.frame
        if result.event is StepEvent.TRAPPED:
            try:
                frame = kernel.handle_sys(frame)
            except SystemHalt as halt:
                return _finish(trace, Outcome.EXIT, code=halt.code)
            except Deadlock as exc:
                return _finish(trace, Outcome.DEADLOCK, blocked=str(exc))
        elif result.event is StepEvent.HALTED:
            # a halted thread spins in place forever; nothing else is ever scheduled
            trace.append(Event("halt", (), (("tid", tid), ("pc", f"{frame.pc:#x}"))))
            trace.steps = budget
            return _finish(trace, Outcome.BUDGET_EXCEEDED)
        elif result.event is StepEvent.CONTINUED:
            return _finish(trace, Outcome.BUDGET_EXCEEDED, tid=tid, pc=f"{frame.pc:#x}")
        else:
            failure = result.failure
            return _finish(trace, Outcome.ASSERTION_FAILED, tid=failure.tid, op=failure.op_index)


def _finish(trace: ExecutionTrace, outcome: Outcome, code: int | None = None, detail: str = "", **fields) -> None:
    trace.outcome = outcome
    trace.exit_code = code
    trace.detail = detail
    if outcome is Outcome.EXIT:
        trace.append(Event("exit", (), (("code", code),)))
    else:
        items = tuple(fields.items()) + ((("detail", detail),) if detail else ())
        trace.append(Event("fault", (outcome.value,), items))


def _check_expectations(expect: Expectations, trace: ExecutionTrace) -> None:
    checks = []
    if expect.exit_code is not None:
        checks.append(("exit_code", trace.outcome is Outcome.EXIT and trace.exit_code == expect.exit_code))
    if expect.stdout is not None:
        checks.append(("stdout", trace.stdout == expect.stdout))
    if expect.stderr is not None:
        checks.append(("stderr", trace.stderr == expect.stderr))
    for what, ok in checks:
        trace.append(Event("expect", (what,), (("result", "ok" if ok else "mismatch"),)))
    if trace.outcome is Outcome.EXIT and not all(ok for _, ok in checks):
        trace.outcome = Outcome.ASSERTION_FAILED
