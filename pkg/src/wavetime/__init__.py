"""Gate-level timing optimization toolkit.

Removes flip-flops from critical circuit regions, re-synchronizes fast
signals with minimally inserted buffers/flip-flops/latches via MILP,
verifies the result with an independent wave simulator, and emits
wave-pipelining timing constraints in SDC-style text.
"""

__version__ = "0.1.0"
