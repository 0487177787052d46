"""Simulation and analysis of phase de-randomization in injection-locked
gain-switched lasers."""

__version__ = "0.1.0"
