"""Infinite-width Gram dynamics of centered, normalized MLP layers.

For a unit-diagonal correlation matrix the layer map acts entrywise,
``G_ij -> reduced_dual(G_ij) / reduced_dual(1)``. The potential
``gamma(G) = max_{i != j} |G_ij| / (1 - |G_ij|)`` contracts by at least the
non-linearity strength per layer, which yields the isometry-gap bound
implemented in ``isogap_bound``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import BoundInapplicable, DegenerateActivation, DegenerateInput, InvalidInput
from .hermite import HermiteExpansion, beta0, reduced_dual

GAMMA_UNDERFLOW = 1e-300


def as_correlation(G) -> np.ndarray:
    G = linalg.as_gram(G)
    if np.any(np.abs(np.diag(G) - 1.0) > linalg.UNIT_DIAG_ATOL):
        raise InvalidInput("correlation matrix needs a unit diagonal")
    if np.any(np.abs(G) > 1.0 + 1e-12):
        raise InvalidInput("correlation entries must lie in [-1, 1]")
    return G


def mf_step(G, exp: HermiteExpansion) -> np.ndarray:
    G = as_correlation(G)
    s1 = reduced_dual(exp, np.ones(1))[0]
    if s1 <= 0:
        raise DegenerateActivation("reduced dual vanishes at 1")
    out = np.clip(reduced_dual(exp, np.clip(G, -1.0, 1.0)) / s1, -1.0, 1.0)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def lyapunov_gamma(G) -> float:
    G = linalg.as_gram(G)
    n = G.shape[0]
    if n < 2:
        raise InvalidInput("gamma needs at least two samples")
    d = np.sqrt(np.diag(G))
    if np.any(d == 0):
        raise DegenerateInput("zero diagonal entry")
    m = linalg.max_off_diagonal(G / np.outer(d, d))
    if m >= 1.0:
        return math.inf
    return m / (1.0 - m)


def gamma_bound(gamma0: float, beta0_: float, layer: int) -> float:
    if beta0_ < 1 or gamma0 < 0:
        raise InvalidInput("need beta0 >= 1 and gamma0 >= 0")
    if gamma0 == 0:
        return 0.0
    if math.isinf(gamma0):
        return math.inf
    return gamma0 * math.exp(-layer * math.log(beta0_))


def _isogap_exponent(iso0: float, beta0_: float, n: int):
    if beta0_ <= 1.0:
        raise BoundInapplicable("no isometry decay without non-linearity (beta0 <= 1)")
    if not 0.0 < iso0 <= 1.0:
        raise InvalidInput("iso0 must lie in (0, 1]")
    return -n * math.log(iso0) + math.log(4 * n)


def isogap_bound(iso0: float, beta0_: float, n: int, layer: int):
    """Isometry-gap bound at ``layer`` and the depth from which it is asserted.

    Returns ``(bound, valid_from)`` with
    ``bound = exp(-layer log beta0 - n log iso0 + log 4n)`` and
    ``valid_from = ceil((-n log iso0 + log 4n) / beta0)``.
    """
    c = _isogap_exponent(iso0, beta0_, n)
    exponent = c - layer * math.log(beta0_)
    bound = math.exp(exponent) if exponent < 709 else math.inf
    return bound, int(math.ceil(c / beta0_))


@dataclass(frozen=True)
class MeanFieldRecord:
    layer: int
    gamma: float
    iso_gap: float
    gamma_bound: float
    iso_gap_bound: float
    bound_valid: bool


@dataclass
class MeanFieldTrace:
    records: list = field(default_factory=list)
    beta0: float = 1.0
    valid_from: int | None = None
    stopped_early: bool = False
    grams: list = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    CSV_HEADER = ("layer", "gamma", "iso_gap", "gamma_bound", "iso_gap_bound", "bound_valid")

    def rows(self):
        for r in self.records:
            yield (r.layer, r.gamma, r.iso_gap, r.gamma_bound, r.iso_gap_bound, int(r.bound_valid))


def run_meanfield(G0, exp: HermiteExpansion, depth: int, keep_grams: bool = False) -> MeanFieldTrace:
    G = as_correlation(G0)
    n = G.shape[0]
    if depth < 0:
        raise InvalidInput("depth must be non-negative")
    s0 = linalg.spectral_summary(G)
    if s0.iso <= 0:
        raise DegenerateInput("input Gram matrix is degenerate")
    b = beta0(exp)
    gamma0 = lyapunov_gamma(G)
    try:
        valid_from = isogap_bound(s0.iso, b, n, 0)[1]
    except BoundInapplicable:
        valid_from = None
    trace = MeanFieldTrace(beta0=b, valid_from=valid_from)
    for layer in range(depth + 1):
        if layer:
            G = mf_step(G, exp)
        g = lyapunov_gamma(G)
        if valid_from is None:
            bound, valid = math.inf, False
        else:
            bound = isogap_bound(s0.iso, b, n, layer)[0]
            valid = layer >= valid_from
        trace.records.append(MeanFieldRecord(
            layer, g, linalg.iso_gap(G), gamma_bound(gamma0, b, layer), bound, valid))
        if keep_grams:
            trace.grams.append(G)
        if g < GAMMA_UNDERFLOW and layer < depth:
            trace.stopped_early = True
            break
    return trace
