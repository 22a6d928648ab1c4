"""Flat guest physical memory with memory-mapped console devices."""
from __future__ import annotations

from dataclasses import dataclass, field

from .abi import PAGE_SIZE

DEFAULT_MEMORY_SIZE = 16 << 20
STDOUT_DEVICE = 0
STDERR_DEVICE = 1
DEVICE_NAMES = {STDOUT_DEVICE: "stdout", STDERR_DEVICE: "stderr"}

# Fixed low-memory layout for platform devices and the read-only name region.
MMIO_STDOUT_BASE = 0x10000
MMIO_STDERR_BASE = 0x11000
MMIO_LEN = 0x1000
RODATA_BASE = 0x12000
RODATA_LEN = 0x1000


class GuestMemoryError(Exception):
    """Base class for guest memory access faults."""


class OutOfBounds(GuestMemoryError):
    pass


class Misaligned(GuestMemoryError):
    pass


@dataclass
class MmioRegion:
    base: int
    len: int
    device_id: int
    write_cursor: int = 0
    capture: bytearray = field(default_factory=bytearray, repr=False)

    @property
    def end(self) -> int:
        return self.base + self.len

    @property
    def name(self) -> str:
        return DEVICE_NAMES.get(self.device_id, f"dev{self.device_id}")


@dataclass
class Region:
    """A reserved span of guest memory with no device behind it."""

    base: int
    len: int
    name: str

    @property
    def end(self) -> int:
        return self.base + self.len


def _overlaps(a0: int, a1: int, b0: int, b1: int) -> bool:
    return a0 < b1 and b0 < a1


class GuestMemory:
    """Single flat address space starting at 0.

    Writes that touch an MMIO region are stored like any other write and the
    overlapping bytes are additionally appended to that device's capture.
    """

    def __init__(
        self,
        size: int = DEFAULT_MEMORY_SIZE,
        heap_start: int | None = None,
        heap_end: int | None = None,
        stack_top: int | None = None,
    ):
        if size < (1 << 20) or size & (size - 1):
            raise ValueError(f"memory size must be a power of two >= 1 MiB, got {size:#x}")
        if heap_start is None:
            heap_start = size // 2
        if heap_end is None:
            heap_end = size
        if stack_top is None:
            stack_top = heap_start - 16
        if not 0 <= heap_start < heap_end <= size:
            raise ValueError(f"bad heap bounds [{heap_start:#x}, {heap_end:#x})")
        if heap_start % PAGE_SIZE or heap_end % PAGE_SIZE:
            raise ValueError("heap bounds must be page aligned")
        if stack_top % 16:
            raise ValueError(f"stack_top {stack_top:#x} is not 16-byte aligned")
        if heap_start <= stack_top < heap_end or not 0 < stack_top <= size:
            raise ValueError(f"stack_top {stack_top:#x} must lie outside the heap and inside memory")
        self.size = size
        self.bytes = bytearray(size)
        self.heap_start = heap_start
        self.heap_end = heap_end
        self.stack_top = stack_top
        self.mmio_regions: list[MmioRegion] = []
        self.reserved: list[Region] = []

    def __repr__(self) -> str:
        return (f"GuestMemory(size={self.size:#x}, heap=[{self.heap_start:#x}, {self.heap_end:#x}), "
                f"stack_top={self.stack_top:#x})")

    def _check_free_span(self, base: int, length: int) -> None:
        end = base + length
        if length <= 0 or base < 0 or end > self.size:
            raise ValueError(f"region [{base:#x}, {end:#x}) outside memory")
        if _overlaps(base, end, self.heap_start, self.heap_end):
            raise ValueError(f"region [{base:#x}, {end:#x}) overlaps the heap")
        for other in (*self.mmio_regions, *self.reserved):
            if _overlaps(base, end, other.base, other.end):
                raise ValueError(f"region [{base:#x}, {end:#x}) overlaps {other.base:#x}")

    def add_mmio(self, base: int, length: int, device_id: int) -> MmioRegion:
        self._check_free_span(base, length)
        region = MmioRegion(base, length, device_id)
        self.mmio_regions.append(region)
        self.mmio_regions.sort(key=lambda r: r.base)
        return region

    def reserve(self, base: int, length: int, name: str) -> Region:
        self._check_free_span(base, length)
        region = Region(base, length, name)
        self.reserved.append(region)
        return region

    def device(self, device_id: int) -> MmioRegion:
        for region in self.mmio_regions:
            if region.device_id == device_id:
                return region
        raise KeyError(device_id)

    def capture(self, device_id: int) -> bytes:
        return bytes(self.device(device_id).capture)

    def in_bounds(self, addr: int, length: int) -> bool:
        return 0 <= addr and length >= 0 and addr + length <= self.size

    def _check(self, addr: int, length: int) -> None:
        if not self.in_bounds(addr, length):
            raise OutOfBounds(f"[{addr:#x}, {addr + length:#x}) outside memory of size {self.size:#x}")

    def read_bytes(self, addr: int, length: int) -> bytes:
        self._check(addr, length)
        return bytes(self.bytes[addr:addr + length])

    def write_bytes(self, addr: int, data: bytes) -> None:
        n = len(data)
        self._check(addr, n)
        self.bytes[addr:addr + n] = data
        end = addr + n
        for region in self.mmio_regions:
            lo, hi = max(addr, region.base), min(end, region.end)
            if lo < hi:
                region.capture += data[lo - addr:hi - addr]
                region.write_cursor = (region.write_cursor + hi - lo) % region.len

    def fill(self, addr: int, length: int, value: int = 0) -> None:
        self.write_bytes(addr, bytes([value]) * length)

    def load_word(self, addr: int, width: int = 8) -> int:
        if width not in (4, 8):
            raise ValueError(f"width must be 4 or 8, got {width}")
        if addr % width:
            raise Misaligned(f"{addr:#x} not aligned to {width}")
        return int.from_bytes(self.read_bytes(addr, width), "little")

    def store_word(self, addr: int, value: int, width: int = 8) -> None:
        if width not in (4, 8):
            raise ValueError(f"width must be 4 or 8, got {width}")
        if addr % width:
            raise Misaligned(f"{addr:#x} not aligned to {width}")
        self.write_bytes(addr, (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little"))

    def mmio_append(self, device_id: int, data: bytes) -> None:
        """Emit bytes through a console region at its cursor, wrapping at the end."""
        region = self.device(device_id)
        view = memoryview(data)
        while view:
            room = region.len - region.write_cursor
            chunk = view[:room]
            self.write_bytes(region.base + region.write_cursor, bytes(chunk))
            view = view[len(chunk):]
