import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def kernel():
    """A booted kernel with the default freelist allocator, tid 1 running."""
    from libosvm.boot import BootSequence
    from libosvm.kernel import KernelState
    from libosvm.memory import GuestMemory
    from libosvm.trapframe import script_entry_pc

    k = KernelState(GuestMemory())
    frame = BootSequence(k).boot(script_entry_pc(0))
    k.boot_frame = frame
    return k


def trap(kernel, frame, nr, *args):
    """Issue one ecall from ``frame`` and return the frame handle_sys resumes."""
    from libosvm.trapframe import A0, A7
    f = frame.copy()
    f[A7] = nr
    for i, value in enumerate(args):
        f[A0 + i] = value
    return kernel.handle_sys(f)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
