import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from libosvm.mm import BumpAllocator, FreeListAllocator, InvalidFree, make_allocator
from oracles import BitmapAllocator

HEAP = 0x800000
PAGE = 4096


def fl(pages=16):
    return FreeListAllocator(HEAP, HEAP + pages * PAGE)


def test_first_fit_lowest_address():
    a = fl()
    x, y, z = a.alloc(2), a.alloc(3), a.alloc(1)
    assert (x, y, z) == (HEAP, HEAP + 2 * PAGE, HEAP + 5 * PAGE)
    a.dealloc(x, 2)
    assert a.alloc(1) == HEAP
    assert a.alloc(2) == HEAP + 6 * PAGE  # the 1-page hole is too small


def test_exhaustion_returns_none():
    a = fl(4)
    assert a.alloc(4) == HEAP
    assert a.alloc(1) is None
    assert a.stats().free_pages == 0


def test_coalesces_both_sides():
    a = fl(6)
    bases = [a.alloc(2) for _ in range(3)]
    a.dealloc(bases[0], 2)
    a.dealloc(bases[2], 2)
    assert a.free_extents() == [(HEAP, 2), (HEAP + 4 * PAGE, 2)]
    a.dealloc(bases[1], 2)
    assert a.free_extents() == [(HEAP, 6)]
    assert a.stats().largest_free_run == 6


@pytest.mark.parametrize("cls", [FreeListAllocator, BumpAllocator])
def test_invalid_free_rejected(cls):
    a = cls(HEAP, HEAP + 8 * PAGE)
    base = a.alloc(2)
    with pytest.raises(InvalidFree):
        a.dealloc(base, 1)
    with pytest.raises(InvalidFree):
        a.dealloc(base + PAGE, 1)
    a.dealloc(base, 2)
    with pytest.raises(InvalidFree):
        a.dealloc(base, 2)


def test_bump_never_reclaims():
    a = BumpAllocator(HEAP, HEAP + 4 * PAGE)
    base = a.alloc(2)
    a.dealloc(base, 2)
    assert a.alloc(2) == HEAP + 2 * PAGE
    assert a.alloc(1) is None
    assert a.stats().free_pages == 0 and a.stats().mapped_regions == 1


def test_make_allocator():
    assert isinstance(make_allocator("bump", HEAP, HEAP + PAGE), BumpAllocator)
    with pytest.raises(ValueError):
        make_allocator("slab", HEAP, HEAP + PAGE)
    with pytest.raises(ValueError):
        FreeListAllocator(HEAP + 1, HEAP + PAGE)


def run_against_oracle(seed: int, ops: int, pages: int = 64):
    rng = random.Random(seed)
    a, o = FreeListAllocator(HEAP, HEAP + pages * PAGE), BitmapAllocator(HEAP, pages)
    live = []
    for _ in range(ops):
        if live and rng.random() < 0.5:
            base, n = live.pop(rng.randrange(len(live)))
            a.dealloc(base, n)
            assert o.dealloc(base, n)
        else:
            n = rng.randint(1, 8)
            got, want = a.alloc(n), o.alloc(n)
            assert got == want
            if got is not None:
                live.append((got, n))
        assert a.stats().free_pages == o.free_pages
    return a, live


def test_matches_bitmap_oracle_small():
    for seed in range(5):
        run_against_oracle(seed, 2000)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(1, 12), st.integers(0, 1 << 16)), max_size=120))
def test_oracle_equivalence_property(script):
    a, o = fl(32), BitmapAllocator(HEAP, 32)
    live = []
    for do_free, n, pick in script:
        if do_free and live:
            base, m = live.pop(pick % len(live))
            a.dealloc(base, m)
            o.dealloc(base, m)
        else:
            got = a.alloc(n)
            assert got == o.alloc(n)
            if got is not None:
                live.append((got, n))
        assert a.stats().free_pages == o.free_pages
        ext = a.extents
        assert all(ext[i][0] + ext[i][1] < ext[i + 1][0] for i in range(len(ext) - 1))
    for base, m in live:
        a.dealloc(base, m)
    assert a.free_extents() == [(HEAP, 32)]


def test_checkerboard_fragmentation():
    # half the heap free, yet no two free pages touch
    a = fl(64)
    bases = [a.alloc(1) for _ in range(64)]
    for base in bases[::2]:
        a.dealloc(base, 1)
    stats = a.stats()
    assert (stats.free_pages, stats.largest_free_run) == (32, 1)
    assert a.alloc(2) is None
    assert len(a.free_extents()) == 32
