from pathlib import Path

import pytest

from libosvm.abi import SYSCALLS
from libosvm.boot import BootConfig
from libosvm.harness import (
    AddImm, AssertMem, AssertReg, ExecutionTrace, GuestScript, Halt, Jump, JumpIfZero, LoadWord,
    MachineConfig, Move, Outcome, Scenario, SetReg, StepEvent, StoreWord, Syscall, execute,
    run_scenario, step_thread,
)
from libosvm.memory import GuestMemory, Misaligned
from libosvm.trapframe import TrapFrame, reg_index, script_entry_pc

R = reg_index


def exit_group(code):
    return [SetReg(R("a7"), SYSCALLS["exit_group"]), SetReg(R("a0"), code), Syscall()]


def test_step_thread_arithmetic_and_memory():
    script = GuestScript("t", [
        SetReg(R("t0"), 0x1000), SetReg(R("t1"), -2), AddImm(R("t1"), R("t1"), 5), Move(R("t2"), R("t1")),
        StoreWord(R("t2"), R("t0"), 8, 4), LoadWord(R("s0"), R("t0"), 8, 4),
        SetReg(R("t3"), 0xFFFFFFFF), StoreWord(R("t3"), R("t0"), 16, 4), LoadWord(R("s1"), R("t0"), 16, 4, True),
        AssertMem(R("t0"), 8, b"\x03\x00\x00\x00"), AssertReg(R("s0"), 3), AssertReg(R("s1"), -1), Halt(),
    ])
    res = step_thread(script, TrapFrame(pc=script_entry_pc(0)), GuestMemory(), 100)
    assert res.event is StepEvent.HALTED and res.steps == 13
    assert res.frame.pc == script_entry_pc(0) + 12 * 4


def test_step_thread_stops_at_ecall_and_budget():
    script = GuestScript("t", [SetReg(R("a0"), 1), Syscall(), Jump(0)])
    res = step_thread(script, TrapFrame(pc=script_entry_pc(0)), GuestMemory(), 100)
    assert res.event is StepEvent.TRAPPED and res.frame.pc == script_entry_pc(0) + 4
    spin = GuestScript("s", [AddImm(R("t0"), R("t0"), 1), Jump(0)])
    res = step_thread(spin, TrapFrame(pc=script_entry_pc(0)), GuestMemory(), 7)
    assert res.event is StepEvent.CONTINUED and res.steps == 7 and res.frame[R("t0")] == 4


def test_branches():
    script = GuestScript("t", [SetReg(R("t0"), 0), JumpIfZero(R("t0"), 3), SetReg(R("a0"), 1), Halt()])
    res = step_thread(script, TrapFrame(pc=script_entry_pc(0)), GuestMemory(), 10)
    assert res.frame.a0 == 0


def test_misaligned_load_raises():
    script = GuestScript("t", [SetReg(R("t0"), 0x1001), LoadWord(R("a0"), R("t0"), 0, 8)])
    with pytest.raises(Misaligned):
        step_thread(script, TrapFrame(pc=script_entry_pc(0)), GuestMemory(), 10)


def test_bad_jump_target_rejected():
    from libosvm.harness import HarnessFault
    with pytest.raises(HarnessFault):
        GuestScript("t", [Jump(5)])


def test_run_exit_code_and_expectations():
    sc = Scenario([GuestScript("main", exit_group(3))])
    trace = run_scenario(sc)
    assert trace.outcome is Outcome.EXIT and trace.exit_code == 3
    sc.expect.exit_code = 4
    trace = run_scenario(sc)
    assert trace.outcome is Outcome.ASSERTION_FAILED
    assert trace.lines()[-2] == "expect exit_code result=mismatch"


def test_memory_fault_outcome():
    sc = Scenario([GuestScript("main", [SetReg(R("t0"), 1 << 40), LoadWord(R("a0"), R("t0"), 0, 8)])])
    trace = run_scenario(sc)
    assert trace.outcome is Outcome.FAULT and trace.detail == "memory:OutOfBounds"


def test_clone_into_missing_script_faults():
    sc = Scenario([GuestScript("main", [
        SetReg(R("a7"), SYSCALLS["clone"]), SetReg(R("a1"), 0x700000), SetReg(R("a2"), 9), Syscall(),
        SetReg(R("a7"), SYSCALLS["sched_yield"]), Syscall(), *exit_group(0)])])
    trace = run_scenario(sc)
    assert trace.outcome is Outcome.FAULT and trace.detail.startswith("bad_pc")


def test_boot_fault_outcome():
    trace = run_scenario(Scenario([GuestScript("main", exit_group(0))], boot=BootConfig(paper_compat=True)))
    assert trace.outcome is Outcome.FAULT and trace.detail == "boot:BootFault"


def test_halt_spins_until_budget():
    sc = Scenario([GuestScript("main", [Halt()])], machine=MachineConfig(step_budget=50))
    trace = run_scenario(sc)
    assert trace.outcome is Outcome.BUDGET_EXCEEDED and trace.steps == 50


class RecordingKernel:
    """Proxy that only lets the run loop reach the two channel entry points."""

    def __init__(self, kernel):
        self._kernel = kernel
        self.calls = []

    def __getattr__(self, name):
        if name not in ("handle_sys", "current_tid"):
            raise AssertionError(f"run loop touched kernel.{name}")
        self.calls.append(name)
        return getattr(self._kernel, name)


def test_run_loop_uses_only_the_trap_channel(kernel):
    proxy = RecordingKernel(kernel)
    trace = ExecutionTrace()
    script = GuestScript("main", [SetReg(R("a7"), SYSCALLS["sched_yield"]), Syscall(), *exit_group(0)])
    execute(proxy, kernel.memory, [script], kernel.boot_frame, 100, trace)
    assert trace.outcome is Outcome.EXIT
    assert set(proxy.calls) == {"handle_sys", "current_tid"}


GOLDEN = sorted((Path(__file__).parent / "fixtures" / "golden").glob("*.trace"))


@pytest.mark.parametrize("path", GOLDEN, ids=lambda p: p.stem)
def test_golden_trace(path):
    from libosvm.scenario import load_scenario
    scenario = load_scenario(Path(__file__).parent.parent / "scenarios" / f"{path.stem}.scn")
    assert run_scenario(scenario).serialize() == path.read_text()
