import pytest

from conftest import trap
from libosvm.abi import CONSOLE_MODE, EBADF, EFAULT, EINVAL, ENOTTY, STAT_SIZE, to_signed
from libosvm.memory import STDERR_DEVICE, STDOUT_DEVICE

WRITE, WRITEV, FSTAT, PRLIMIT, GETRANDOM, CLOCK, IOCTL = 64, 66, 80, 261, 278, 113, 29


def rc(frame):
    return to_signed(frame.a0)


def test_write_routes_by_fd(kernel):
    mem = kernel.memory
    mem.write_bytes(0x20000, b"to out|to err")
    assert rc(trap(kernel, kernel.boot_frame, WRITE, 1, 0x20000, 6)) == 6
    assert rc(trap(kernel, kernel.boot_frame, WRITE, 2, 0x20007, 6)) == 6
    assert mem.capture(STDOUT_DEVICE) == b"to out"
    assert mem.capture(STDERR_DEVICE) == b"to err"


@pytest.mark.parametrize("fd", [0, 3, -1, 1 << 40])
def test_write_bad_fd(kernel, fd):
    assert rc(trap(kernel, kernel.boot_frame, WRITE, fd, 0x20000, 1)) == -EBADF


def test_write_zero_and_fault(kernel):
    assert rc(trap(kernel, kernel.boot_frame, WRITE, 1, 1 << 40, 0)) == 0
    assert rc(trap(kernel, kernel.boot_frame, WRITE, 1, kernel.memory.size - 2, 4)) == -EFAULT
    assert kernel.memory.capture(STDOUT_DEVICE) == b""


def _iov(mem, at, pieces):
    for i, (base, length) in enumerate(pieces):
        mem.store_word(at + 16 * i, base)
        mem.store_word(at + 16 * i + 8, length)


def test_writev_gathers(kernel):
    mem = kernel.memory
    mem.write_bytes(0x20000, b"abcdef")
    _iov(mem, 0x21000, [(0x20000, 2), (0x20004, 0), (0x20003, 3)])
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, 0x21000, 3)) == 5
    assert mem.capture(STDOUT_DEVICE) == b"abdef"


def test_writev_errors(kernel):
    mem = kernel.memory
    mem.write_bytes(0x20000, b"abc")
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 9, 0x21000, 1)) == -EBADF
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, 0x21000, -1)) == -EINVAL
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, 0x21000, 1025)) == -EINVAL
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, mem.size - 8, 1)) == -EFAULT
    # second iovec is bad: the first one is already out
    _iov(mem, 0x21000, [(0x20000, 3), (1 << 40, 1)])
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, 0x21000, 2)) == -EFAULT
    assert mem.capture(STDOUT_DEVICE) == b"abc"
    assert rc(trap(kernel, kernel.boot_frame, WRITEV, 1, 0x21000, 0)) == 0


def test_fstat(kernel):
    mem = kernel.memory
    mem.fill(0x30000, STAT_SIZE, 0xEE)
    assert rc(trap(kernel, kernel.boot_frame, FSTAT, 2, 0x30000)) == 0
    assert mem.load_word(0x30010, 4) == CONSOLE_MODE == 0o20620
    assert mem.read_bytes(0x30000, 16) == bytes(16)
    assert rc(trap(kernel, kernel.boot_frame, FSTAT, 0, 0x30000)) == -EBADF
    assert rc(trap(kernel, kernel.boot_frame, FSTAT, 1, mem.size - 64)) == -EFAULT


def test_dummy_services(kernel):
    mem = kernel.memory
    assert rc(trap(kernel, kernel.boot_frame, GETRANDOM, 0x30000, 5, 0)) == 5
    assert mem.read_bytes(0x30000, 6) == b"\x5a" * 5 + b"\x00"
    assert rc(trap(kernel, kernel.boot_frame, GETRANDOM, 1 << 40, 5, 0)) == -EFAULT
    mem.fill(0x31000, 16, 0xFF)
    assert rc(trap(kernel, kernel.boot_frame, CLOCK, 0, 0x31000)) == 0
    assert mem.read_bytes(0x31000, 16) == bytes(16)
    assert rc(trap(kernel, kernel.boot_frame, PRLIMIT, 0, 7, 0, 0x32000)) == 0
    assert rc(trap(kernel, kernel.boot_frame, IOCTL, 1, 0x5401, 0)) == -ENOTTY
