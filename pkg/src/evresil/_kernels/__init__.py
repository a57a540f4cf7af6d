"""Backlog-recursion kernel, compiled when available.

The Cython extension and the pure-Python fallback implement the same
operation sequence and return bit-identical trajectories; selection happens
once at import. ``KERNEL_BACKEND`` records which one is active.
"""

try:
    from ._backlog_cy import simulate_backlog

    KERNEL_BACKEND = "cython"
except ImportError:
    from .backlog_py import simulate_backlog

    KERNEL_BACKEND = "python"

from .backlog_py import simulate_backlog as simulate_backlog_py

__all__ = ["simulate_backlog", "simulate_backlog_py", "KERNEL_BACKEND"]
