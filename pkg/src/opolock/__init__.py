"""Threshold and locking-zone simulation of a type-II OPO with an intracavity waveplate."""

__version__ = "0.1.0"

__all__ = [
    "polarization",
    "crystal",
    "cavity",
    "solver",
    "sweep",
    "config",
    "output",
    "workflow",
]
