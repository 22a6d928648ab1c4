"""Boot sequence: platform bootstrap, musl stack construction, libc handoff.

The stack image is built in a scratch buffer whose top is ``initial_sp`` and
then copied word by word below the platform stack top. Only the AT_RANDOM
pointer is rewritten during the copy, since the scratch buffer does not live
in guest memory; ``paper_compat=True`` keeps the unrelocated pointer.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .abi import (
    AT_CLKTCK, AT_EGID, AT_EUID, AT_GID, AT_HWCAP, AT_NULL, AT_PAGESZ, AT_PHDR, AT_PHENT,
    AT_PHNUM, AT_RANDOM, AT_SECURE, AT_UID, AUXV_NAMES, MASK64, PAGE_SIZE, WORD_SIZE,
)
from .fdio import FdTable
from .kernel import HardFault, KernelState, OpsRegistries
from .memory import (
    MMIO_LEN, MMIO_STDERR_BASE, MMIO_STDOUT_BASE, RODATA_BASE, RODATA_LEN,
    STDERR_DEVICE, STDOUT_DEVICE,
)
from .mm import make_allocator
from .sched import Scheduler
from .trapframe import A0, A1, A2, A3, A4, A5, SP, TrapFrame

DEFAULT_INITIAL_SP = 0x80010000
DEFAULT_PROGRAM_NAME = b"guest\0"
MUSL_BUFFER_BYTES = 4096
ENTROPY_CONSTANT = 0xDEADBEEF_CAFEBABE
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

AUXV_ORDER = (
    AT_PHDR, AT_PHENT, AT_PHNUM, AT_PAGESZ, AT_CLKTCK, AT_HWCAP,
    AT_UID, AT_EUID, AT_GID, AT_EGID, AT_SECURE, AT_RANDOM, AT_NULL,
)
# No program headers are exposed, so libc never looks for PT_TLS.
AUXV_VALUES = {AT_PAGESZ: PAGE_SIZE, AT_CLKTCK: 100}

LIBC_STAGES = ("init_libc", "init_tls", "init_ssp", "libc_start_init")


class BootFault(RuntimeError):
    pass


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def generate_random_bytes(entropy: tuple[int, int]) -> tuple[int, int]:
    """Deterministically derive the 16 AT_RANDOM bytes as (low, high) words."""
    low = _mix64((entropy[0] ^ GOLDEN_GAMMA) & MASK64)
    high = _mix64((entropy[1] ^ low) & MASK64)
    return low, high


class DownwardStack:
    def __init__(self, top: int):
        self._sp = top
        self.words: list[int] = []  # in push order, i.e. highest address first

    def push(self, value: int) -> None:
        self._sp -= WORD_SIZE
        self.words.append(value & MASK64)

    def sp(self) -> int:
        return self._sp


@dataclass(frozen=True)
class MuslStackImage:
    bytes: bytes
    sp: int  # address of argc where the image was built (or relocated to)
    sp_offset: int
    at_random_offset: int
    at_random_slot: int  # offset of the AT_RANDOM value word in the auxv

    @property
    def total_len(self) -> int:
        return len(self.bytes)

    def words(self) -> list[int]:
        return [w for (w,) in struct.iter_unpack("<Q", self.bytes)]

    def word(self, offset: int) -> int:
        return int.from_bytes(self.bytes[offset:offset + WORD_SIZE], "little")

    def relocated(self, target_sp: int) -> MuslStackImage:
        """The image as it reads once copied to ``target_sp``, AT_RANDOM fixed up."""
        buf = bytearray(self.bytes)
        slot = self.at_random_slot
        buf[slot:slot + WORD_SIZE] = (target_sp + self.at_random_offset).to_bytes(WORD_SIZE, "little")
        return MuslStackImage(bytes(buf), target_sp, self.sp_offset, self.at_random_offset, self.at_random_slot)


def build_musl_stack(
    initial_sp: int,
    ehdr_start: int,
    program_name_ptr: int,
    entropy: tuple[int, int] | None = None,
    buffer_capacity: int = MUSL_BUFFER_BYTES,
) -> MuslStackImage:
    """Push argc/argv/envp/auxv and the AT_RANDOM block below ``initial_sp``.

    ``ehdr_start`` is ignored: the ELF header is not readable on bare metal.
    """
    if initial_sp % WORD_SIZE:
        raise BootFault(f"initial_sp {initial_sp:#x} is not word aligned")
    if entropy is None:
        entropy = (initial_sp, ENTROPY_CONSTANT)
    ds = DownwardStack(initial_sp)
    low, high = generate_random_bytes(entropy)
    ds.push(high)
    ds.push(low)  # libc reads the canary from here
    at_random_ptr = ds.sp()
    at_random_push = None
    for key in reversed(AUXV_ORDER):
        ds.push(at_random_ptr if key == AT_RANDOM else AUXV_VALUES.get(key, 0))
        if key == AT_RANDOM:
            at_random_push = len(ds.words) - 1
        ds.push(key)
    ds.push(0)  # envp terminator
    ds.push(0)  # argv terminator
    ds.push(program_name_ptr)
    ds.push(1)  # argc
    total = len(ds.words) * WORD_SIZE
    if total > buffer_capacity:
        raise BootFault(f"stack image of {total} bytes exceeds the {buffer_capacity}-byte build buffer")
    data = b"".join(w.to_bytes(WORD_SIZE, "little") for w in reversed(ds.words))
    slot = total - (at_random_push + 1) * WORD_SIZE
    return MuslStackImage(data, ds.sp(), 0, at_random_ptr - ds.sp(), slot)


def _labels(image: MuslStackImage) -> list[str]:
    words = image.words()
    labels = ["argc", "argv[0]", "argv[1]", "envp[0]"]
    i = 4
    while i + 1 < len(words):
        name = AUXV_NAMES.get(words[i], f"AT_{words[i]}")
        labels += [f"{name} key", f"{name} value"]
        i += 2
        if words[i - 2] == AT_NULL:
            break
    labels += ["random low", "random high"]
    return labels


def format_stack_dump(image: MuslStackImage) -> str:
    lines = []
    for (offset, word), label in zip(enumerate(image.words()), _labels(image)):
        lines.append(f"0x{offset * WORD_SIZE:04x} 0x{word:016x}  {label}")
    return "\n".join(lines) + "\n"


@dataclass
class BootConfig:
    program_name: bytes = DEFAULT_PROGRAM_NAME
    initial_sp: int = DEFAULT_INITIAL_SP
    buffer_capacity: int = MUSL_BUFFER_BYTES
    entropy: tuple[int, int] | None = None
    paper_compat: bool = False

    def __post_init__(self):
        if not self.program_name.endswith(b"\0") or len(self.program_name) < 2:
            raise ValueError("program_name must be non-empty and NUL-terminated")
        if len(self.program_name) > RODATA_LEN:
            raise ValueError("program_name does not fit the read-only name region")


@dataclass
class BootSequence:
    """Reset -> platform bootstrap -> runtime bootstrap -> libc handoff -> main."""

    kernel: KernelState
    config: BootConfig = field(default_factory=BootConfig)
    stage: str = "reset"
    trace: list[str] = field(default_factory=list)
    image: MuslStackImage | None = None

    def _advance(self, expected: str, new: str) -> None:
        if self.stage != expected:
            raise BootFault(f"boot step needs stage {expected!r}, machine is at {self.stage!r}")
        self.stage = new
        self.trace.append(new)

    def platform_bootstrap(self, allocator: str = "freelist") -> OpsRegistries:
        kernel = self.kernel
        if kernel.registries is not None or self.stage != "reset":
            raise HardFault("platform already bootstrapped")
        mem = kernel.memory
        stdout = mem.add_mmio(MMIO_STDOUT_BASE, MMIO_LEN, STDOUT_DEVICE)
        stderr = mem.add_mmio(MMIO_STDERR_BASE, MMIO_LEN, STDERR_DEVICE)
        mem.reserve(RODATA_BASE, RODATA_LEN, "rodata")
        registries = OpsRegistries(
            memory_ops=make_allocator(allocator, mem.heap_start, mem.heap_end),
            scheduler_ops=Scheduler(kernel.emit),
            io_ops=FdTable(),
        )
        kernel.install(registries)
        self._advance("reset", "platform_bootstrap")
        kernel.emit(
            "boot", "platform_bootstrap",
            memory_ops=registries.memory_ops.name,
            stdout=f"{stdout.base:#x}+{stdout.len:#x}",
            stderr=f"{stderr.base:#x}+{stderr.len:#x}",
            heap=f"{mem.heap_start:#x}-{mem.heap_end:#x}",
            trap_handler="handle_sys",
        )
        return registries

    def runtime_bootstrap(self) -> int:
        """Build the stack image, copy it under the stack top; return the new sp."""
        if self.stage != "platform_bootstrap":
            raise BootFault(f"runtime bootstrap needs a bootstrapped platform (stage {self.stage!r})")
        cfg, mem = self.config, self.kernel.memory
        mem.write_bytes(RODATA_BASE, cfg.program_name)
        image = build_musl_stack(cfg.initial_sp, 0, RODATA_BASE, cfg.entropy, cfg.buffer_capacity)
        target_sp = mem.stack_top - image.total_len
        if target_sp < 0 or any(r.base < mem.stack_top and target_sp < r.end
                                for r in (*mem.mmio_regions, *mem.reserved)):
            raise BootFault(f"stack_top {mem.stack_top:#x} too low for a {image.total_len}-byte image")
        placed = image if cfg.paper_compat else image.relocated(target_sp)
        for offset in range(0, placed.total_len, WORD_SIZE):
            mem.store_word(target_sp + offset, placed.word(offset), WORD_SIZE)
        self.image = placed
        self._advance("platform_bootstrap", "runtime_bootstrap")
        self.kernel.emit("boot", "runtime_bootstrap", buffer_sp=f"{image.sp:#x}",
                         target_sp=f"{target_sp:#x}", copied=image.total_len)
        return target_sp

    def libc_handoff(self, entry_pc: int) -> TrapFrame:
        """Model __libc_start_main: read argc/argv/auxv back from guest memory, start tid 1."""
        if self.stage != "runtime_bootstrap":
            raise BootFault(f"libc handoff before runtime bootstrap (stage {self.stage!r})")
        mem = self.kernel.memory
        sp = mem.stack_top - self.image.total_len
        argc = mem.load_word(sp, 4)
        argv = sp + WORD_SIZE
        # skip argv and envp to reach the auxv
        p = argv + (argc + 1) * WORD_SIZE
        while mem.load_word(p):
            p += WORD_SIZE
        p += WORD_SIZE
        aux = {}
        while True:
            key, value = mem.load_word(p), mem.load_word(p + WORD_SIZE)
            p += 2 * WORD_SIZE
            if key == AT_NULL:
                break
            aux[key] = value
        if not mem.in_bounds(aux.get(AT_RANDOM, -1), 16):
            raise BootFault(f"AT_RANDOM {aux.get(AT_RANDOM, 0):#x} does not point into guest memory")
        canary = mem.load_word(aux[AT_RANDOM], WORD_SIZE)

        frame = TrapFrame(pc=entry_pc)
        frame[SP] = sp
        frame[A0] = entry_pc
        frame[A1] = argc
        frame[A2] = argv
        frame[A3] = frame[A4] = frame[A5] = 0
        self._advance("runtime_bootstrap", "libc_start_main")
        self.kernel.emit("boot", "libc_start_main", argc=argc, argv=f"{argv:#x}",
                         page_size=aux.get(AT_PAGESZ, 0), canary=f"{canary:#x}", stages=",".join(LIBC_STAGES))
        tcb = self.kernel.scheduler.start_main(frame)
        self._advance("libc_start_main", "main_entry")
        self.kernel.emit("boot", "main_entry", tid=tcb.tid, pc=f"{entry_pc:#x}", sp=f"{sp:#x}")
        return frame

    def boot(self, entry_pc: int, allocator: str = "freelist") -> TrapFrame:
        self.platform_bootstrap(allocator)
        self.runtime_bootstrap()
        return self.libc_handoff(entry_pc)
