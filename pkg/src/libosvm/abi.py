"""Linux riscv64 ABI constants used by the kernel, plus the syscall coverage matrix.

Numbers come from ``asm-generic/unistd.h`` (riscv64 uses the generic table),
errno values from ``asm-generic/errno*.h`` and auxv keys from ``elf.h``.
``tests/fixtures/linux_riscv64_abi.txt`` holds the header-derived oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

WORD_SIZE = 8
PAGE_SIZE = 4096
MASK64 = (1 << 64) - 1


def to_signed(value: int, bits: int = 64) -> int:
    value &= (1 << bits) - 1
    if value >> (bits - 1):
        value -= 1 << bits
    return value


# Syscall numbers (Linux riscv64).
SYSCALLS: dict[str, int] = {
    "ioctl": 29,
    "write": 64,
    "writev": 66,
    "fstat": 80,
    "exit": 93,
    "exit_group": 94,
    "set_tid_address": 96,
    "futex": 98,
    "clock_gettime": 113,
    "sched_yield": 124,
    "rt_sigaction": 134,
    "rt_sigprocmask": 135,
    "brk": 214,
    "munmap": 215,
    "mremap": 216,
    "clone": 220,
    "mmap": 222,
    "mprotect": 226,
    "prlimit64": 261,
    "getrandom": 278,
}
SYSCALL_NAMES: dict[int, str] = {nr: name for name, nr in SYSCALLS.items()}

# Number of argument registers (a0..) each syscall consumes; used for tracing.
SYSCALL_ARITY: dict[str, int] = {
    "ioctl": 3,
    "write": 3,
    "writev": 3,
    "fstat": 2,
    "exit": 1,
    "exit_group": 1,
    "set_tid_address": 1,
    "futex": 6,
    "clock_gettime": 2,
    "sched_yield": 0,
    "rt_sigaction": 4,
    "rt_sigprocmask": 4,
    "brk": 1,
    "munmap": 2,
    "mremap": 5,
    "clone": 4,
    "mmap": 6,
    "mprotect": 3,
    "prlimit64": 4,
    "getrandom": 3,
}


class UnknownSyscall(KeyError):
    pass


def syscall_number(name: str) -> int:
    """Return the riscv64 number for a syscall name (``sys_`` prefix optional)."""
    key = name[4:] if name.startswith("sys_") else name
    try:
        return SYSCALLS[key]
    except KeyError:
        raise UnknownSyscall(name) from None


# errno values; the kernel returns them negated in a0.
EBADF = 9
EAGAIN = 11
ENOMEM = 12
EFAULT = 14
EINVAL = 22
ENOTTY = 25
ENOSYS = 38
ERRNO: dict[str, int] = {
    "EBADF": EBADF,
    "EAGAIN": EAGAIN,
    "ENOMEM": ENOMEM,
    "EFAULT": EFAULT,
    "EINVAL": EINVAL,
    "ENOTTY": ENOTTY,
    "ENOSYS": ENOSYS,
}

# futex(2) operations
FUTEX_WAIT = 0
FUTEX_WAKE = 1
FUTEX_PRIVATE_FLAG = 128
INT_MAX = (1 << 31) - 1

# auxv keys
AT_NULL = 0
AT_PHDR = 3
AT_PHENT = 4
AT_PHNUM = 5
AT_PAGESZ = 6
AT_UID = 11
AT_EUID = 12
AT_GID = 13
AT_EGID = 14
AT_HWCAP = 16
AT_CLKTCK = 17
AT_SECURE = 23
AT_RANDOM = 25
AUXV_NAMES: dict[int, str] = {
    AT_NULL: "AT_NULL",
    AT_PHDR: "AT_PHDR",
    AT_PHENT: "AT_PHENT",
    AT_PHNUM: "AT_PHNUM",
    AT_PAGESZ: "AT_PAGESZ",
    AT_UID: "AT_UID",
    AT_EUID: "AT_EUID",
    AT_GID: "AT_GID",
    AT_EGID: "AT_EGID",
    AT_HWCAP: "AT_HWCAP",
    AT_CLKTCK: "AT_CLKTCK",
    AT_SECURE: "AT_SECURE",
    AT_RANDOM: "AT_RANDOM",
}

# struct stat (asm-generic, 64-bit longs)
STAT_SIZE = 128
STAT_MODE_OFFSET = 16
S_IFCHR = 0o020000
CONSOLE_MODE = S_IFCHR | 0o620

# Symbolic names a scenario script may use as immediates.
NAMED_CONSTANTS: dict[str, int] = {
    **{f"SYS_{name}": nr for name, nr in SYSCALLS.items()},
    **ERRNO,
    "FUTEX_WAIT": FUTEX_WAIT,
    "FUTEX_WAKE": FUTEX_WAKE,
    "FUTEX_PRIVATE_FLAG": FUTEX_PRIVATE_FLAG,
    "FUTEX_WAIT_PRIVATE": FUTEX_WAIT | FUTEX_PRIVATE_FLAG,
    "FUTEX_WAKE_PRIVATE": FUTEX_WAKE | FUTEX_PRIVATE_FLAG,
    "INT_MAX": INT_MAX,
    "PAGE_SIZE": PAGE_SIZE,
}


@dataclass(frozen=True)
class AbiRow:
    syscall: str
    number: int
    status: str  # implemented | stub | absent
    contract: str
    note: str = ""


# One row per line of the syscall interface table, in table order.
ABI_MATRIX: tuple[AbiRow, ...] = (
    AbiRow("sys_mmap", 222, "implemented", "Yes: page-aligned base; -EINVAL (len 0, fd != -1); -ENOMEM",
           "anonymous only; addr hint and prot ignored"),
    AbiRow("sys_munmap", 215, "implemented", "Yes: 0; -EINVAL unless exactly one live mapping",
           "partial unmap rejected"),
    AbiRow("sys_brk", 214, "stub", "Stub (-ENOMEM)"),
    AbiRow("sys_mremap", 216, "stub", "Stub (-ENOSYS)"),
    AbiRow("sys_mprotect", 226, "stub", "Stub (no-op)"),
    AbiRow("sys_clone", 220, "implemented", "Yes: child tid; -EINVAL on bad child stack",
           "child starts at explicit entry with a0=arg"),
    AbiRow("sys_futex (FUTEX_WAIT)", 98, "implemented", "Yes: 0 when woken; -EAGAIN on word mismatch",
           "timeout ignored; other futex ops -ENOSYS"),
    AbiRow("sys_futex (FUTEX_WAKE)", 98, "implemented", "Yes: number woken (at most max)"),
    AbiRow("sys_sched_yield", 124, "implemented", "Yes: 0"),
    AbiRow("sys_exit", 93, "implemented", "Yes: does not return; last thread halts system"),
    AbiRow("sys_exit_group", 94, "implemented", "Yes: halts system with code"),
    AbiRow("sys_set_tid_address", 96, "stub", "Stub (no-op)", "returns 0, Linux returns caller tid"),
    AbiRow("sys_rt_sigaction", 134, "stub", "Stub (no-op)"),
    AbiRow("sys_rt_sigprocmask", 135, "stub", "Stub (no-op)"),
    AbiRow("sys_write", 64, "implemented", "stdout / stderr: byte count; -EBADF; -EFAULT"),
    AbiRow("sys_fstat", 80, "implemented", "stdout / stderr: 0, char-device stat; -EBADF; -EFAULT"),
    AbiRow("sys_writev", 66, "implemented", "stdout / stderr: total bytes; -EBADF; -EFAULT; -EINVAL"),
    AbiRow("sys_prlimit64", 261, "stub", "Stub (no-op)"),
    AbiRow("sys_getrandom", 278, "stub", "Return dummy value: buffer filled with 0x5a, returns len"),
    AbiRow("sys_clock_gettime", 113, "stub", "Return zero time: {0 s, 0 ns}, returns 0"),
    AbiRow("sys_ioctl", 29, "stub", "Stub (-ENOTTY)"),
)


def format_abi_matrix(rows: tuple[AbiRow, ...] = ABI_MATRIX) -> str:
    lines = ["syscall\tnumber\tstatus\treturn\tnote"]
    for row in rows:
        lines.append(f"{row.syscall}\t{row.number}\t{row.status}\t{row.contract}\t{row.note}")
    return "\n".join(lines) + "\n"
