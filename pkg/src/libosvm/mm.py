"""Kernel page allocators and the memory-management syscalls.

Allocators hand out page runs inside ``[heap_start, heap_end)``. They never
touch guest memory themselves; the syscall wrappers scrub freed pages.
"""
from __future__ import annotations

import abc
from bisect import bisect_left
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .abi import EINVAL, ENOMEM, ENOSYS, PAGE_SIZE, to_signed

if TYPE_CHECKING:
    from .kernel import KernelState


class InvalidFree(ValueError):
    """dealloc() of a range that is not a live allocation."""


@dataclass(frozen=True)
class AllocatorStats:
    free_pages: int
    largest_free_run: int
    mapped_regions: int


class KernelAllocator(abc.ABC):
    name = "abstract"

    def __init__(self, heap_start: int, heap_end: int, page_size: int = PAGE_SIZE):
        if heap_start % page_size or heap_end % page_size or heap_start >= heap_end:
            raise ValueError(f"bad heap [{heap_start:#x}, {heap_end:#x})")
        self.heap_start = heap_start
        self.heap_end = heap_end
        self.page_size = page_size
        self.total_pages = (heap_end - heap_start) // page_size
        # base address -> pages, for every live allocation
        self.live: dict[int, int] = {}

    @abc.abstractmethod
    def alloc(self, pages: int) -> int | None:
        """Return the base address of ``pages`` fresh pages, or None when out of memory."""

    @abc.abstractmethod
    def dealloc(self, base: int, pages: int) -> None:
        """Release a live allocation; raise InvalidFree otherwise."""

    @abc.abstractmethod
    def stats(self) -> AllocatorStats: ...

    def _release(self, base: int, pages: int) -> None:
        if self.live.get(base) != pages:
            raise InvalidFree(f"no live allocation of {pages} pages at {base:#x}")
        del self.live[base]


class FreeListAllocator(KernelAllocator):
    """Coalescing free list, first fit at the lowest address.

    ``extents`` holds ``[start_page, pages]`` pairs sorted by start page, with
    no two extents touching.
    """

    name = "freelist"

    def __init__(self, heap_start: int, heap_end: int, page_size: int = PAGE_SIZE):
        super().__init__(heap_start, heap_end, page_size)
        self.extents: list[list[int]] = [[0, self.total_pages]]

    def alloc(self, pages: int) -> int | None:
        if pages <= 0:
            raise ValueError("pages must be positive")
        extents = self.extents
        for i, ext in enumerate(extents):
            if ext[1] >= pages:
                start = ext[0]
                if ext[1] == pages:
                    del extents[i]
                else:
                    ext[0] += pages
                    ext[1] -= pages
                base = self.heap_start + start * self.page_size
                self.live[base] = pages
                return base
        return None

    def dealloc(self, base: int, pages: int) -> None:
        self._release(base, pages)
        start = (base - self.heap_start) // self.page_size
        extents = self.extents
        i = bisect_left(extents, [start, 0])
        merge_prev = i > 0 and extents[i - 1][0] + extents[i - 1][1] == start
        merge_next = i < len(extents) and start + pages == extents[i][0]
        if merge_prev and merge_next:
            extents[i - 1][1] += pages + extents[i][1]
            del extents[i]
        elif merge_prev:
            extents[i - 1][1] += pages
        elif merge_next:
            extents[i][0] = start
            extents[i][1] += pages
        else:
            extents.insert(i, [start, pages])

    def free_extents(self) -> list[tuple[int, int]]:
        """Free extents as (base address, pages)."""
        return [(self.heap_start + s * self.page_size, n) for s, n in self.extents]

    def stats(self) -> AllocatorStats:
        runs = [n for _, n in self.extents]
        return AllocatorStats(sum(runs), max(runs, default=0), len(self.live))


class BumpAllocator(KernelAllocator):
    """Monotone watermark; dealloc is accepted but reclaims nothing."""

    name = "bump"

    def __init__(self, heap_start: int, heap_end: int, page_size: int = PAGE_SIZE):
        super().__init__(heap_start, heap_end, page_size)
        self.watermark = heap_start

    def alloc(self, pages: int) -> int | None:
        if pages <= 0:
            raise ValueError("pages must be positive")
        if self.watermark + pages * self.page_size > self.heap_end:
            return None
        base = self.watermark
        self.watermark += pages * self.page_size
        self.live[base] = pages
        return base

    def dealloc(self, base: int, pages: int) -> None:
        self._release(base, pages)

    def stats(self) -> AllocatorStats:
        free = (self.heap_end - self.watermark) // self.page_size
        return AllocatorStats(free, free, len(self.live))


ALLOCATORS: dict[str, type[KernelAllocator]] = {
    FreeListAllocator.name: FreeListAllocator,
    BumpAllocator.name: BumpAllocator,
}


def make_allocator(name: str, heap_start: int, heap_end: int) -> KernelAllocator:
    try:
        cls = ALLOCATORS[name]
    except KeyError:
        raise ValueError(f"unknown allocator {name!r} (choose from {sorted(ALLOCATORS)})") from None
    return cls(heap_start, heap_end)


def pages_for(length: int) -> int:
    return -(-length // PAGE_SIZE)


# -- syscall wrappers ---------------------------------------------------------

def sys_mmap(kernel: KernelState, addr: int, length: int, prot: int, flags: int, fd: int, offset: int) -> int:
    # addr hint and prot are ignored: one address space, no protection.
    length = to_signed(length)
    if length <= 0:
        return -EINVAL
    if to_signed(fd) != -1:
        return -EINVAL
    pages = pages_for(length)
    allocator = kernel.memory_ops
    if pages > allocator.total_pages:
        base = None
    else:
        base = allocator.alloc(pages)
    kernel.emit("alloc", pages=pages, base="none" if base is None else f"{base:#x}")
    if base is None:
        return -ENOMEM
    kernel.mappings[base] = pages
    return base


def sys_munmap(kernel: KernelState, addr: int, length: int) -> int:
    length = to_signed(length)
    if addr % PAGE_SIZE or length <= 0:
        return -EINVAL
    pages = pages_for(length)
    if kernel.mappings.get(addr) != pages:
        return -EINVAL
    kernel.memory_ops.dealloc(addr, pages)
    kernel.emit("dealloc", pages=pages, base=f"{addr:#x}")
    del kernel.mappings[addr]
    kernel.memory.fill(addr, pages * PAGE_SIZE, 0)
    return 0


def sys_brk(kernel: KernelState, addr: int) -> int:
    return -ENOMEM


def sys_mremap(kernel: KernelState, old_addr: int, old_len: int, new_len: int, flags: int, new_addr: int) -> int:
    return -ENOSYS


def sys_mprotect(kernel: KernelState, addr: int, length: int, prot: int) -> int:
    return 0
