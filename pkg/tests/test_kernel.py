import pytest

from conftest import trap
from libosvm.abi import EINVAL, ENOMEM, ENOSYS, SYSCALLS, to_signed
from libosvm.boot import BootSequence
from libosvm.kernel import Event, HardFault, KernelState, handle_sys
from libosvm.memory import GuestMemory
from libosvm.trapframe import A0, TrapFrame, decode_pc, script_entry_pc


def test_trap_before_bootstrap_is_hard_fault():
    k = KernelState(GuestMemory())
    with pytest.raises(HardFault):
        handle_sys(TrapFrame(pc=0x40000000), k)


def test_registries_install_once(kernel):
    with pytest.raises(HardFault):
        kernel.install(kernel.registries)


def test_unknown_syscall_is_enosys_and_advances_pc(kernel):
    f = trap(kernel, kernel.boot_frame, 56, 0, 0)  # openat is not served
    assert to_signed(f.a0) == -ENOSYS
    assert f.pc == kernel.boot_frame.pc + 4
    assert [e.kind for e in kernel.events[-2:]] == ["trap", "ret"]
    assert "name=unknown" in kernel.events[-2].render()


def test_caller_frame_is_not_mutated(kernel):
    before = kernel.boot_frame.copy()
    trap(kernel, kernel.boot_frame, SYSCALLS["mmap"], 0, 4096, 3, 0x22, -1, 0)
    assert kernel.boot_frame.regs == before.regs


def test_event_order_for_mmap(kernel):
    kernel.events.clear()
    f = trap(kernel, kernel.boot_frame, SYSCALLS["mmap"], 0, 4096, 3, 0x22, -1, 0)
    assert [e.kind for e in kernel.events] == ["trap", "wrapper", "alloc", "ret"]
    assert f.a0 == 0x800000
    ret = kernel.events[-1].render()
    assert "free_pages=2047" in ret and "mapped_regions=1" in ret


def test_mmap_errors(kernel):
    assert to_signed(trap(kernel, kernel.boot_frame, 222, 0, 0, 3, 0x22, -1, 0).a0) == -EINVAL
    assert to_signed(trap(kernel, kernel.boot_frame, 222, 0, 4096, 3, 0x22, 4, 0).a0) == -EINVAL
    assert to_signed(trap(kernel, kernel.boot_frame, 222, 0, 1 << 40, 3, 0x22, -1, 0).a0) == -ENOMEM


def test_munmap_scrubs_and_allows_reuse(kernel):
    f = trap(kernel, kernel.boot_frame, 222, 0, 8192, 3, 0x22, -1, 0)
    base = f.a0
    kernel.memory.write_bytes(base + 100, b"secret")
    assert trap(kernel, f, 215, base, 8192).a0 == 0
    assert kernel.memory.read_bytes(base + 100, 6) == bytes(6)
    assert trap(kernel, f, 222, 0, 4096, 3, 0x22, -1, 0).a0 == base


def test_event_render():
    assert Event("sched", ("switch",), (("from", None), ("to", 2))).render() == "sched switch from=none to=2"


def test_pc_layout():
    assert script_entry_pc(3) == 0x40300000
    assert decode_pc(0x40300010) == (3, 4)
    with pytest.raises(ValueError):
        decode_pc(0x40300002)
    with pytest.raises(ValueError):
        decode_pc(0x1000)


def test_boot_stage_order_enforced():
    from libosvm.boot import BootFault
    k = KernelState(GuestMemory())
    seq = BootSequence(k)
    with pytest.raises(BootFault):
        seq.runtime_bootstrap()
    seq.platform_bootstrap()
    with pytest.raises(BootFault):
        seq.libc_handoff(script_entry_pc(0))
    with pytest.raises(HardFault):
        seq.platform_bootstrap()


def test_frame_x0_pinned():
    f = TrapFrame()
    f[0] = 5
    f["zero"] = 7
    assert f[0] == 0
    f[A0] = -1
    assert f.a0 == (1 << 64) - 1
