#!/usr/bin/env python3
"""Extract the ABI constants the kernel model relies on from Linux UAPI headers.

Writes ``kind name value`` lines; the committed copy is
tests/fixtures/linux_riscv64_abi.txt. RISC-V uses the asm-generic syscall table.
"""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

SYSCALLS = (
    "ioctl", "write", "writev", "fstat", "exit", "exit_group", "set_tid_address", "futex",
    "clock_gettime", "sched_yield", "rt_sigaction", "rt_sigprocmask", "brk", "munmap",
    "mremap", "clone", "mmap", "mprotect", "prlimit64", "getrandom",
)
ERRNOS = ("EBADF", "EAGAIN", "ENOMEM", "EFAULT", "EINVAL", "ENOTTY", "ENOSYS")
AUXV = ("AT_NULL", "AT_PHDR", "AT_PHENT", "AT_PHNUM", "AT_PAGESZ", "AT_UID", "AT_EUID",
        "AT_GID", "AT_EGID", "AT_HWCAP", "AT_CLKTCK", "AT_SECURE", "AT_RANDOM")
FUTEX = ("FUTEX_WAIT", "FUTEX_WAKE", "FUTEX_PRIVATE_FLAG")

DEFINE = re.compile(r"^#define\s+(\w+)\s+(\w+)")


def read_defines(*paths: Path) -> dict[str, str]:
    defs: dict[str, str] = {}
    for path in paths:
        for line in path.read_text().splitlines():
            m = DEFINE.match(line)
            if m:
                defs.setdefault(m.group(1), m.group(2))
    return defs


def resolve(defs: dict[str, str], name: str) -> int:
    seen = set()
    value = defs[name]
    while not value.lstrip("-").isdigit():
        if value in seen:
            raise ValueError(f"cyclic define {name}")
        seen.add(value)
        value = defs[value]
    return int(value)


def extract(include: Path) -> list[tuple[str, str, int]]:
    rows = []
    defs = read_defines(include / "asm-generic/unistd.h")
    rows += [("syscall", n, resolve(defs, f"__NR_{n}")) for n in SYSCALLS]
    defs = read_defines(include / "asm-generic/errno-base.h", include / "asm-generic/errno.h")
    rows += [("errno", n, resolve(defs, n)) for n in ERRNOS]
    defs = read_defines(include / "linux/auxvec.h")
    rows += [("auxv", n, resolve(defs, n)) for n in AUXV]
    defs = read_defines(include / "linux/futex.h")
    rows += [("futex", n, resolve(defs, n)) for n in FUTEX]
    return rows


def render(rows) -> str:
    return "".join(f"{kind} {name} {value}\n" for kind, name, value in rows)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--include", type=Path, default=Path("/usr/include"))
    ap.add_argument("-o", "--output", type=Path)
    args = ap.parse_args(argv)
    text = render(extract(args.include))
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
