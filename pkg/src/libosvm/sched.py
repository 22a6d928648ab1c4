"""Cooperative threads: TCBs, a FIFO ready queue and futex wait queues.

Nothing here preempts. A thread leaves the CPU only by yielding, blocking on
a futex or exiting, and the next thread is always the ready-queue head.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

from .abi import EAGAIN, EFAULT, EINVAL, ENOSYS, FUTEX_PRIVATE_FLAG, FUTEX_WAIT, FUTEX_WAKE, to_signed
from .trapframe import A0, SP, TrapFrame, script_entry_pc, MAX_SCRIPTS

if TYPE_CHECKING:
    from .kernel import KernelState


class ThreadState(enum.Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"
    EXITED = "exited"


class SchedulerError(RuntimeError):
    """Scheduler contract violation (a kernel bug, not a guest error)."""


class Deadlock(RuntimeError):
    """No thread can run and the system has not exited.

    The message lists the futex queues as ``uaddr:tid,tid;...``.
    """


class SystemHalt(Exception):
    def __init__(self, code: int):
        super().__init__(code)
        self.code = code


@dataclass
class Tcb:
    tid: int
    saved_regs: TrapFrame
    thread_state: ThreadState = ThreadState.READY


def _noop_emit(kind: str, *words, **fields) -> None:
    pass


class Scheduler:
    def __init__(self, emit: Callable[..., None] = _noop_emit):
        self.emit = emit
        self.threads: dict[int, Tcb] = {}
        self.ready: deque[int] = deque()
        self.futex_waiters: dict[int, deque[int]] = {}
        self.exited: list[int] = []
        self.current: int | None = None
        self.next_tid = 1
        self.exit_code: int | None = None
        self.total_created = 0
        # set by a wrapper when the current thread must give up the CPU
        self._pending: str | None = None

    # -- thread lifecycle -----------------------------------------------------

    def _new_tcb(self, frame: TrapFrame) -> Tcb:
        tcb = Tcb(self.next_tid, frame)
        self.next_tid += 1
        self.total_created += 1
        self.threads[tcb.tid] = tcb
        return tcb

    def start_main(self, frame: TrapFrame) -> Tcb:
        if self.total_created:
            raise SchedulerError("main thread already exists")
        tcb = self._new_tcb(frame.copy())
        tcb.thread_state = ThreadState.RUNNING
        self.current = tcb.tid
        return tcb

    @property
    def current_tcb(self) -> Tcb:
        if self.current is None:
            raise SchedulerError("no current thread")
        return self.threads[self.current]

    def spawn(self, frame: TrapFrame) -> Tcb:
        tcb = self._new_tcb(frame)
        self.ready.append(tcb.tid)
        self.emit("sched", "spawn", tid=tcb.tid, pc=f"{frame.pc:#x}", sp=f"{frame[SP]:#x}")
        return tcb

    def context_switch(self, from_tcb: Tcb | None, to_tcb: Tcb, frame: TrapFrame | None) -> TrapFrame:
        """Save ``frame`` into ``from_tcb`` and return the frame ``to_tcb`` resumes with."""
        if from_tcb is to_tcb:
            return frame
        if to_tcb.thread_state is not ThreadState.READY:
            raise SchedulerError(f"switch to tid {to_tcb.tid} in state {to_tcb.thread_state.value}")
        if from_tcb is not None and frame is not None:
            from_tcb.saved_regs = frame.copy()
            if from_tcb.thread_state is ThreadState.RUNNING:
                from_tcb.thread_state = ThreadState.READY
        to_tcb.thread_state = ThreadState.RUNNING
        self.current = to_tcb.tid
        self.emit("sched", "switch", **{"from": from_tcb.tid if from_tcb else "none"}, to=to_tcb.tid)
        return to_tcb.saved_regs.copy()

    def yield_current(self) -> None:
        self._pending = "yield"

    def block_current(self, uaddr: int) -> None:
        tcb = self.current_tcb
        tcb.thread_state = ThreadState.BLOCKED
        self.futex_waiters.setdefault(uaddr, deque()).append(tcb.tid)
        self.emit("sched", "block", tid=tcb.tid, uaddr=f"{uaddr:#x}")
        self._pending = "block"

    def wake(self, uaddr: int, max_count: int) -> int:
        waiters = self.futex_waiters.get(uaddr)
        woken = 0
        while waiters and woken < max_count:
            tid = waiters.popleft()
            self.threads[tid].thread_state = ThreadState.READY
            self.ready.append(tid)
            self.emit("sched", "wake", tid=tid, uaddr=f"{uaddr:#x}")
            woken += 1
        if waiters is not None and not waiters:
            del self.futex_waiters[uaddr]
        return woken

    def exit_current(self, code: int) -> None:
        tcb = self.threads.pop(self.current_tcb.tid)
        tcb.thread_state = ThreadState.EXITED
        self.exited.append(tcb.tid)
        self.emit("sched", "exit", tid=tcb.tid, code=code)
        self.exit_code = code
        self._pending = "exit"

    def exit_group(self, code: int) -> None:
        for tid in sorted(self.threads):
            self.threads[tid].thread_state = ThreadState.EXITED
            self.exited.append(tid)
        self.threads.clear()
        self.ready.clear()
        self.futex_waiters.clear()
        self.current = None
        self.exit_code = code
        self.emit("sched", "exit_group", code=code)
        raise SystemHalt(code)

    @property
    def exiting(self) -> bool:
        return self._pending == "exit"

    def finish_trap(self, frame: TrapFrame) -> TrapFrame:
        """Apply any switch requested during the trap; return the frame to resume."""
        pending, self._pending = self._pending, None
        if pending is None:
            return frame
        if pending == "yield":
            if not self.ready:
                return frame
            caller = self.current_tcb
            self.ready.append(caller.tid)
            return self.context_switch(caller, self.threads[self.ready.popleft()], frame)
        if pending == "block":
            if not self.ready:
                raise Deadlock(self._deadlock_report())
            return self.context_switch(self.current_tcb, self.threads[self.ready.popleft()], frame)
        # exit: the caller's TCB is already gone
        self.current = None
        if not self.ready:
            if self.threads:
                raise Deadlock(self._deadlock_report())
            raise SystemHalt(self.exit_code)
        return self.context_switch(None, self.threads[self.ready.popleft()], None)

    def _deadlock_report(self) -> str:
        parts = [f"{uaddr:#x}:{','.join(map(str, tids))}" for uaddr, tids in sorted(self.futex_waiters.items())]
        return ";".join(parts) or "none"

    def check_invariants(self) -> None:
        running = [t.tid for t in self.threads.values() if t.thread_state is ThreadState.RUNNING]
        if len(running) > 1 or (running and running[0] != self.current):
            raise SchedulerError(f"running set {running} vs current {self.current}")
        for tid in self.ready:
            if self.threads[tid].thread_state is not ThreadState.READY:
                raise SchedulerError(f"tid {tid} queued while {self.threads[tid].thread_state.value}")
        waiting = [tid for q in self.futex_waiters.values() for tid in q]
        for tid in waiting:
            if self.threads[tid].thread_state is not ThreadState.BLOCKED:
                raise SchedulerError(f"tid {tid} on a futex queue while not blocked")
        placed = len(running) + len(self.ready) + len(waiting) + len(self.exited)
        if placed != self.total_created or len(set(self.ready)) != len(self.ready):
            raise SchedulerError(f"{placed} placements for {self.total_created} threads")


# -- syscall wrappers ---------------------------------------------------------

def sys_clone(kernel: KernelState, flags: int, child_stack: int, entry: int, arg: int) -> int:
    mem = kernel.memory
    if child_stack % 16 or not 0 < child_stack <= mem.size:
        return -EINVAL
    if entry >= MAX_SCRIPTS:
        return -EINVAL
    # the child inherits the parent's registers, like Linux clone
    child = kernel.frame.copy()
    child.pc = script_entry_pc(entry)
    child[SP] = child_stack
    child[A0] = arg
    return kernel.scheduler.spawn(child).tid


def sys_futex(kernel: KernelState, uaddr: int, op: int, val: int, timeout: int, uaddr2: int, val3: int) -> int:
    cmd = op & ~FUTEX_PRIVATE_FLAG
    if cmd == FUTEX_WAIT:
        return sys_futex_wait(kernel, uaddr, val)
    if cmd == FUTEX_WAKE:
        return sys_futex_wake(kernel, uaddr, val)
    return -ENOSYS


def sys_futex_wait(kernel: KernelState, uaddr: int, expected: int) -> int:
    if uaddr % 4:
        return -EINVAL
    if not kernel.memory.in_bounds(uaddr, 4):
        return -EFAULT
    if kernel.memory.load_word(uaddr, 4) != expected & 0xFFFFFFFF:
        return -EAGAIN
    kernel.scheduler.block_current(uaddr)
    # value the waiter sees once it is woken
    return 0


def sys_futex_wake(kernel: KernelState, uaddr: int, max_count: int) -> int:
    if uaddr % 4:
        return -EINVAL
    return kernel.scheduler.wake(uaddr, max(0, to_signed(max_count, 32)))


def sys_sched_yield(kernel: KernelState) -> int:
    kernel.scheduler.yield_current()
    return 0


def sys_exit(kernel: KernelState, code: int) -> int:
    kernel.scheduler.exit_current(to_signed(code, 32))
    return 0


def sys_exit_group(kernel: KernelState, code: int) -> int:
    kernel.scheduler.exit_group(to_signed(code, 32))
    return 0  # unreachable


def sys_set_tid_address(kernel: KernelState, tidptr: int) -> int:
    return 0


def sys_rt_sigaction(kernel: KernelState, signum: int, act: int, oldact: int, sigsetsize: int) -> int:
    return 0


def sys_rt_sigprocmask(kernel: KernelState, how: int, nset: int, oset: int, sigsetsize: int) -> int:
    return 0
