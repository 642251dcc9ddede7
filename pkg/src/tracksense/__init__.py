"""Tracking-simulation soft sensor for a binary distillation column.

A dynamic tray-by-tray simulator of a methanol-water column is run in
lockstep with a target plant; an adjuster (reinforcement-learned policy,
PID bank, or supervised regressor) manipulates unmeasured simulator
parameters until simulator outputs track the plant's, at which point the
simulator's internal state doubles as a soft sensor for feed purity,
heat-loss coefficients, and per-stage compositions.
"""

__version__ = "0.1.0"
