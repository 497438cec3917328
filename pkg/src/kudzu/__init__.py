"""Kudzu BFT atomic broadcast: replica state machine, simulator and audit harness."""

__version__ = "0.1.0"
