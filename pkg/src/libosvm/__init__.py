"""Library-OS kernel model with a scripted RISC-V micro-VM harness."""
from .abi import ABI_MATRIX, SYSCALLS
from .boot import BootConfig, BootSequence, build_musl_stack
from .harness import ExecutionTrace, Outcome, Scenario, run_scenario
from .kernel import KernelState, handle_sys
from .memory import GuestMemory
from .mm import BumpAllocator, FreeListAllocator
from .scenario import ScenarioError, load_scenario, parse_scenario
from .sched import Scheduler

__version__ = "0.1.0"

__all__ = [
    "ABI_MATRIX", "SYSCALLS", "BootConfig", "BootSequence", "build_musl_stack",
    "ExecutionTrace", "Outcome", "Scenario", "run_scenario", "KernelState", "handle_sys",
    "GuestMemory", "BumpAllocator", "FreeListAllocator", "ScenarioError", "load_scenario",
    "parse_scenario", "Scheduler",
]
