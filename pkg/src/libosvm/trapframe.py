"""RISC-V integer register file as seen by the syscall trap handler."""
from __future__ import annotations

from dataclasses import dataclass, field

from .abi import MASK64

ABI_NAMES = (
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2",
    "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7",
    "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
)
REG_INDEX: dict[str, int] = {name: i for i, name in enumerate(ABI_NAMES)}
REG_INDEX.update({f"x{i}": i for i in range(32)})
REG_INDEX["fp"] = 8

SP, A0, A1, A2, A3, A4, A5, A7 = (REG_INDEX[r] for r in ("sp", "a0", "a1", "a2", "a3", "a4", "a5", "a7"))


def reg_index(name: str) -> int:
    try:
        return REG_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown register {name!r}") from None


@dataclass
class TrapFrame:
    """pc plus x1..x31. ``regs[0]`` is x0 and always reads zero."""

    pc: int = 0
    regs: list[int] = field(default_factory=lambda: [0] * 32)

    def __getitem__(self, reg: int | str) -> int:
        if isinstance(reg, str):
            reg = reg_index(reg)
        return self.regs[reg]

    def __setitem__(self, reg: int | str, value: int) -> None:
        if isinstance(reg, str):
            reg = reg_index(reg)
        if reg:
            self.regs[reg] = value & MASK64

    def copy(self) -> TrapFrame:
        return TrapFrame(self.pc, list(self.regs))

    @property
    def a0(self) -> int:
        return self.regs[A0]

    @property
    def a7(self) -> int:
        return self.regs[A7]

    def args(self, n: int = 6) -> tuple[int, ...]:
        return tuple(self.regs[A0:A0 + n])


# Guest code layout: script i occupies a notional text window at
# CODE_BASE + i * CODE_STRIDE, one 4-byte slot per micro-op.
CODE_BASE = 0x40000000
CODE_STRIDE = 0x100000
MAX_SCRIPTS = 1024
INSN_SIZE = 4


def script_entry_pc(index: int) -> int:
    return CODE_BASE + index * CODE_STRIDE


def decode_pc(pc: int) -> tuple[int, int]:
    """Split a pc into (script index, micro-op index)."""
    offset = pc - CODE_BASE
    if offset < 0 or offset % INSN_SIZE:
        raise ValueError(f"pc {pc:#x} is not a micro-op address")
    script, op = divmod(offset, CODE_STRIDE)
    return script, op // INSN_SIZE
