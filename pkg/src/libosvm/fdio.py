"""File descriptor table for the two console devices, and the I/O syscalls."""
from __future__ import annotations

from typing import TYPE_CHECKING

from .abi import CONSOLE_MODE, EBADF, EFAULT, EINVAL, ENOTTY, STAT_MODE_OFFSET, STAT_SIZE, to_signed
from .memory import STDERR_DEVICE, STDOUT_DEVICE

if TYPE_CHECKING:
    from .kernel import KernelState

IOV_MAX = 1024
GETRANDOM_FILL = 0x5A


class FdTable:
    """fd 1 and fd 2 are wired to the console devices for the life of the system."""

    def __init__(self):
        self._slots = {1: STDOUT_DEVICE, 2: STDERR_DEVICE}

    def device_for(self, fd: int) -> int | None:
        return self._slots.get(fd)

    def __contains__(self, fd: int) -> bool:
        return fd in self._slots

    def items(self):
        return sorted(self._slots.items())


def stat_image(mode: int = CONSOLE_MODE) -> bytes:
    buf = bytearray(STAT_SIZE)
    buf[STAT_MODE_OFFSET:STAT_MODE_OFFSET + 4] = mode.to_bytes(4, "little")
    return bytes(buf)


def _device(kernel: KernelState, fd: int) -> int | None:
    return kernel.io_ops.device_for(to_signed(fd, 32))


def _write_one(kernel: KernelState, device: int, buf: int, length: int) -> int:
    if length == 0:
        return 0
    mem = kernel.memory
    if not mem.in_bounds(buf, length):
        return -EFAULT
    mem.mmio_append(device, mem.read_bytes(buf, length))
    return length


def sys_write(kernel: KernelState, fd: int, buf: int, count: int) -> int:
    device = _device(kernel, fd)
    if device is None:
        return -EBADF
    return _write_one(kernel, device, buf, to_signed(count))


def sys_writev(kernel: KernelState, fd: int, iov: int, iovcnt: int) -> int:
    device = _device(kernel, fd)
    if device is None:
        return -EBADF
    iovcnt = to_signed(iovcnt, 32)
    if not 0 <= iovcnt <= IOV_MAX:
        return -EINVAL
    mem = kernel.memory
    if not mem.in_bounds(iov, 16 * iovcnt):
        return -EFAULT
    total = 0
    # one iovec at a time: a bad buffer fails after earlier ones were emitted
    for i in range(iovcnt):
        record = mem.read_bytes(iov + 16 * i, 16)
        base = int.from_bytes(record[:8], "little")
        length = to_signed(int.from_bytes(record[8:], "little"))
        if length < 0:
            return -EINVAL
        written = _write_one(kernel, device, base, length)
        if written < 0:
            return written
        total += written
    return total


def sys_fstat(kernel: KernelState, fd: int, statbuf: int) -> int:
    if _device(kernel, fd) is None:
        return -EBADF
    if not kernel.memory.in_bounds(statbuf, STAT_SIZE):
        return -EFAULT
    kernel.memory.write_bytes(statbuf, stat_image())
    return 0


def sys_prlimit64(kernel: KernelState, pid: int, resource: int, new_limit: int, old_limit: int) -> int:
    return 0


def sys_getrandom(kernel: KernelState, buf: int, buflen: int, flags: int) -> int:
    length = to_signed(buflen)
    if length < 0 or not kernel.memory.in_bounds(buf, length):
        return -EFAULT
    kernel.memory.fill(buf, length, GETRANDOM_FILL)
    return length


def sys_clock_gettime(kernel: KernelState, clockid: int, tp: int) -> int:
    if not kernel.memory.in_bounds(tp, 16):
        return -EFAULT
    kernel.memory.fill(tp, 16, 0)
    return 0


def sys_ioctl(kernel: KernelState, fd: int, request: int, arg: int) -> int:
    return -ENOTTY
