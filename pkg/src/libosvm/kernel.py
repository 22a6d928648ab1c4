"""Kernel state, operation registries and the syscall trap handler."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import fdio, mm, sched
from .abi import ENOSYS, SYSCALL_ARITY, SYSCALL_NAMES, SYSCALLS, to_signed
from .memory import GuestMemory
from .trapframe import A0, INSN_SIZE, TrapFrame


class HardFault(RuntimeError):
    """Kernel misuse that no errno can express (e.g. a trap before bootstrap)."""


@dataclass(frozen=True)
class Event:
    kind: str
    words: tuple[str, ...] = ()
    fields: tuple[tuple[str, object], ...] = ()

    def render(self) -> str:
        parts = [self.kind, *self.words]
        parts.extend(f"{key}={'none' if value is None else value}" for key, value in self.fields)
        return " ".join(parts)


@dataclass
class OpsRegistries:
    memory_ops: mm.KernelAllocator
    scheduler_ops: sched.Scheduler
    io_ops: fdio.FdTable


class KernelState:
    """Everything the trap handler may touch besides the trapping frame."""

    def __init__(self, memory: GuestMemory, sink: Callable[[Event], None] | None = None):
        self.memory = memory
        self.registries: OpsRegistries | None = None
        self.mappings: dict[int, int] = {}  # live mmap regions: base -> pages
        self.frame: TrapFrame | None = None  # frame of the trap being serviced
        self.events: list[Event] = []
        self._sink = sink

    def emit(self, kind: str, *words: str, **fields: object) -> None:
        event = Event(kind, tuple(words), tuple(fields.items()))
        self.events.append(event)
        if self._sink is not None:
            self._sink(event)

    def install(self, registries: OpsRegistries) -> None:
        if self.registries is not None:
            raise HardFault("operation registries are already populated")
        self.registries = registries

    def _regs(self) -> OpsRegistries:
        if self.registries is None:
            raise HardFault("operation registries not populated")
        return self.registries

    @property
    def memory_ops(self) -> mm.KernelAllocator:
        return self._regs().memory_ops

    @property
    def scheduler(self) -> sched.Scheduler:
        return self._regs().scheduler_ops

    @property
    def io_ops(self) -> fdio.FdTable:
        return self._regs().io_ops

    @property
    def current_tid(self) -> int | None:
        return self.scheduler.current

    def handle_sys(self, frame: TrapFrame) -> TrapFrame:
        return handle_sys(frame, self)


WRAPPERS: dict[str, Callable[..., int]] = {
    "mmap": mm.sys_mmap,
    "munmap": mm.sys_munmap,
    "brk": mm.sys_brk,
    "mremap": mm.sys_mremap,
    "mprotect": mm.sys_mprotect,
    "clone": sched.sys_clone,
    "futex": sched.sys_futex,
    "sched_yield": sched.sys_sched_yield,
    "exit": sched.sys_exit,
    "exit_group": sched.sys_exit_group,
    "set_tid_address": sched.sys_set_tid_address,
    "rt_sigaction": sched.sys_rt_sigaction,
    "rt_sigprocmask": sched.sys_rt_sigprocmask,
    "write": fdio.sys_write,
    "fstat": fdio.sys_fstat,
    "writev": fdio.sys_writev,
    "prlimit64": fdio.sys_prlimit64,
    "getrandom": fdio.sys_getrandom,
    "clock_gettime": fdio.sys_clock_gettime,
    "ioctl": fdio.sys_ioctl,
}
DISPATCH: dict[int, Callable[..., int]] = {SYSCALLS[name]: fn for name, fn in WRAPPERS.items()}
MEMORY_SYSCALLS = frozenset(SYSCALLS[n] for n in ("mmap", "munmap", "brk", "mremap", "mprotect"))


def _hexargs(values) -> str:
    return ",".join(f"{v:#x}" for v in values) or "-"


def _ret(a0: int) -> str:
    value = to_signed(a0)
    return f"{value:#x}" if value >= 0 else str(value)


def handle_sys(frame: TrapFrame, kernel: KernelState) -> TrapFrame:
    """Service one ecall.

    Returns the frame to resume: the caller's with a0 set and pc advanced by
    one instruction, or another thread's saved frame after a context switch.
    Raises SystemHalt when the system exits and Deadlock when nothing can run.
    """
    scheduler = kernel.scheduler  # HardFault before bootstrap
    nr = frame.a7
    name = SYSCALL_NAMES.get(nr, "unknown")
    wrapper = DISPATCH.get(nr)
    kernel.emit("trap", tid=scheduler.current, pc=f"{frame.pc:#x}", nr=nr, name=name,
                args=_hexargs(frame.args(SYSCALL_ARITY.get(name, 6))))
    frame = frame.copy()
    if wrapper is None:
        result = -ENOSYS
    else:
        kernel.emit("wrapper", wrapper.__name__)
        kernel.frame = frame
        try:
            result = wrapper(kernel, *frame.args(SYSCALL_ARITY[name]))
        finally:
            kernel.frame = None
    if scheduler.exiting:
        return scheduler.finish_trap(frame)
    frame[A0] = result
    frame.pc += INSN_SIZE
    extra = {}
    if nr in MEMORY_SYSCALLS:
        stats = kernel.memory_ops.stats()
        extra = {"free_pages": stats.free_pages, "largest_free_run": stats.largest_free_run,
                 "mapped_regions": stats.mapped_regions}
    kernel.emit("ret", tid=scheduler.current, a0=_ret(frame.a0), pc=f"{frame.pc:#x}", **extra)
    return scheduler.finish_trap(frame)
