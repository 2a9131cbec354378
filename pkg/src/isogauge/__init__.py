"""Isometry diagnostics for normalized random networks.

Submodules: ``linalg`` (Gram matrices and isometry), ``hermite`` (Hermite
expansions and non-linearity strength), ``meanfield`` (infinite-width Gram
recursion), ``network`` (finite-width simulator) and ``experiments`` (suites,
verification batteries, CLI).
"""
from .errors import IsogaugeError
from .hermite import activation, beta0, expand
from .linalg import iso, iso_gap
from .meanfield import run_meanfield

__all__ = ["IsogaugeError", "activation", "beta0", "expand", "iso", "iso_gap", "run_meanfield"]
__version__ = "0.1.0"
