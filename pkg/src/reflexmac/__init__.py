"""Slotted-channel simulator for heterogeneous random access with
age-of-information accounting, a reflective-agent MAC protocol (RMA),
steady-state oracles, and training-data export."""

__version__ = "0.1.0"
