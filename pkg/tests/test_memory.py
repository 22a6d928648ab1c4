import pytest

from libosvm.memory import (
    STDOUT_DEVICE, GuestMemory, Misaligned, OutOfBounds,
)


def test_defaults():
    mem = GuestMemory()
    assert mem.size == 16 << 20
    assert (mem.heap_start, mem.heap_end, mem.stack_top) == (0x800000, 0x1000000, 0x7FFFF0)


@pytest.mark.parametrize("kwargs", [
    dict(size=3 << 20),
    dict(size=1 << 19),
    dict(heap_start=0x800800),
    dict(heap_start=0x900000, heap_end=0x800000),
    dict(heap_end=0x2000000),
    dict(stack_top=0x7FFFF8),
    dict(stack_top=0x900000),
])
def test_rejects_bad_layout(kwargs):
    with pytest.raises(ValueError):
        GuestMemory(**kwargs)


def test_word_roundtrip_little_endian():
    mem = GuestMemory()
    mem.store_word(0x1000, 0x1122334455667788)
    assert mem.read_bytes(0x1000, 8) == bytes.fromhex("8877665544332211")
    assert mem.load_word(0x1000, 4) == 0x55667788
    mem.store_word(0x2000, -1, 4)
    assert mem.load_word(0x2000, 4) == 0xFFFFFFFF
    assert mem.load_word(0x2004, 4) == 0


def test_bounds_and_alignment():
    mem = GuestMemory()
    with pytest.raises(OutOfBounds):
        mem.read_bytes(mem.size - 4, 8)
    with pytest.raises(OutOfBounds):
        mem.write_bytes(-1, b"x")
    with pytest.raises(Misaligned):
        mem.store_word(0x1004, 1, 8)
    assert mem.load_word(0x1004, 4) == 0  # failed store left memory alone
    with pytest.raises(ValueError):
        mem.load_word(0x1000, 2)


def test_mmio_capture_and_wrap():
    mem = GuestMemory()
    region = mem.add_mmio(0x10000, 0x10, STDOUT_DEVICE)
    mem.mmio_append(STDOUT_DEVICE, b"0123456789")
    mem.mmio_append(STDOUT_DEVICE, b"abcdefghij")
    assert mem.capture(STDOUT_DEVICE) == b"0123456789abcdefghij"
    assert region.write_cursor == 4
    assert mem.read_bytes(0x10000, 4) == b"ghij"


def test_plain_store_into_mmio_is_captured():
    mem = GuestMemory()
    mem.add_mmio(0x10000, 0x1000, STDOUT_DEVICE)
    mem.write_bytes(0xFFFE, b"xyz!")
    assert mem.capture(STDOUT_DEVICE) == b"z!"


@pytest.mark.parametrize("base,length", [(0x10800, 0x1000), (0x7FF000, 0x2000), (0xFFF000, 0x2000)])
def test_regions_must_be_disjoint(base, length):
    mem = GuestMemory()
    mem.add_mmio(0x10000, 0x1000, STDOUT_DEVICE)
    with pytest.raises(ValueError):
        mem.reserve(base, length, "x")
