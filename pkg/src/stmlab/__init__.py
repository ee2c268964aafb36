"""stmlab: software transactional memory algorithms over an instrumented
base-object memory, with checkers for opacity, progress and
synchronization-pattern costs."""

from .core import History, HistoryBuilder, Outcome, Status, TmEvent, Verdict, validate_history
from .memory import BaseWord, ExecutionTrace, MemoryFault, SharedMemory
from .sched import DeterministicRunner, Explorer, drive, run_deterministic, run_native
from .stm import VARIANTS, make_stm
from .trylocks import BakeryTrylock, WaitFreeTrylock

__version__ = "0.1.0"

__all__ = [
    "History",
    "HistoryBuilder",
    "Outcome",
    "Status",
    "TmEvent",
    "Verdict",
    "validate_history",
    "BaseWord",
    "ExecutionTrace",
    "MemoryFault",
    "SharedMemory",
    "DeterministicRunner",
    "Explorer",
    "drive",
    "run_deterministic",
    "run_native",
    "VARIANTS",
    "make_stm",
    "BakeryTrylock",
    "WaitFreeTrylock",
]
