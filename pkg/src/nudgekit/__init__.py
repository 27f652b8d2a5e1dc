"""nudgekit: sensor aggregation, sleep detection, correlation profiling,
recurring-route mining and context-gated nudging, plus a deterministic
life simulator to drive all of it offline."""

__version__ = "0.1.0"
