"""Normalized Hermite expansions of scalar activations.

Coefficients use the expectation convention ``c_k = E[sigma(x) he_k(x)]`` with
``x ~ N(0, 1)`` and ``he_k`` the probabilists' Hermite polynomial scaled to unit
norm. Under this convention ``sum_k c_k^2 = E[sigma(x)^2]`` (Parseval), the dual
activation is ``sum_k c_k^2 rho^k`` and the non-linearity strength is
``beta0 = 2 - c_1^2 / sum_{k>=1} c_k^2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateActivation, InvalidInput, NotSquareIntegrable

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 40
DEFAULT_QUAD_ORDER = 128
MAX_QUAD_ORDER = 190  # the asymptotic root guesses stop separating near 199
TAIL_TOLERANCE = 1e-8
# Parseval residue below this relative size is summation round-off
_ROUNDOFF_TAIL = 64 * np.finfo(float).eps

# composite Gauss-Legendre rule used for activations with kinks
_PANEL_WIDTH = 0.5
_PANEL_NODES = 20
_PANEL_RANGE = 40.0

_SELU_ALPHA = 1.6732632423543772848170429916717
_SELU_SCALE = 1.0507009873554804934193349852946


def hermite_eval(k: int, x):
    """Normalized probabilists' Hermite polynomial ``he_k`` at ``x``."""
    if k < 0:
        raise InvalidInput("degree must be non-negative")
    return hermite_table(k, x)[k]


def hermite_table(K: int, x) -> np.ndarray:
    """Rows ``he_0(x) .. he_K(x)`` by the stable three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((K + 1,) + x.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = x
    for k in range(1, K):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


@lru_cache(maxsize=None)
def _gauss_hermite_physicists(order: int):
    # Newton iteration on the orthonormal physicists' recurrence, roots from
    # the largest downward with the classical asymptotic initial guesses
    n = order
    x = np.zeros(n)
    w = np.zeros(n)
    pim4 = math.pi ** -0.25
    m = (n + 1) // 2
    z = 0.0
    for i in range(m):
        if i == 0:
            z = math.sqrt(2 * n + 1) - 1.85575 * (2 * n + 1) ** (-1 / 6)
        elif i == 1:
            z -= 1.14 * n ** 0.426 / z
        elif i == 2:
            z = 1.86 * z - 0.86 * x[0]
        elif i == 3:
            z = 1.91 * z - 0.91 * x[1]
        else:
            z = 2.0 * z - x[i - 2]
        for _ in range(100):
            p1, p2 = pim4, 0.0
            for j in range(1, n + 1):
                p3 = p2
                p2 = p1
                p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1) / j) * p3
            pp = math.sqrt(2 * n) * p2
            z1 = z
            z = z1 - p1 / pp
            if abs(z - z1) <= 1e-15 * max(1.0, abs(z)):
                break
        else:
            raise ArithmeticError(f"Gauss-Hermite Newton iteration did not converge (order {n})")
        x[i], x[n - 1 - i] = z, -z
        w[i] = w[n - 1 - i] = (2.0 / pp) / pp  # underflows to 0 for far nodes
    if np.any(np.diff(x[:m]) >= 0):
        raise ArithmeticError(f"Gauss-Hermite roots failed to separate (order {n})")
    return x, w


@lru_cache(maxsize=None)
def gauss_hermite(order: int):
    """Nodes and weights with ``sum w f(x) ~= E f(X)``, ``X ~ N(0, 1)``."""
    if not 1 <= order <= MAX_QUAD_ORDER:
        raise InvalidInput(f"quadrature order must lie in 1..{MAX_QUAD_ORDER}")
    t, w = _gauss_hermite_physicists(order)
    nodes = math.sqrt(2.0) * t[::-1]
    weights = w[::-1] / math.sqrt(math.pi)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


@lru_cache(maxsize=None)
def gaussian_panel_rule(breakpoints: tuple = ()):
    """Composite Gauss-Legendre rule for ``E f(X)`` with panels split at ``breakpoints``.

    Used for activations that are only piecewise smooth, where a single
    Gauss-Hermite rule converges algebraically.
    """
    edges = np.arange(-_PANEL_RANGE, _PANEL_RANGE + _PANEL_WIDTH / 2, _PANEL_WIDTH)
    edges = np.unique(np.concatenate([edges, np.asarray(breakpoints, dtype=float)]))
    t, wt = np.polynomial.legendre.leggauss(_PANEL_NODES)
    a, b = edges[:-1, None], edges[1:, None]
    half = (b - a) / 2
    nodes = (a + b) / 2 + half * t[None, :]
    weights = half * wt[None, :] * np.exp(-nodes ** 2 / 2) / math.sqrt(2 * math.pi)
    nodes, weights = nodes.ravel(), weights.ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _step(x):
    return (x > 0).astype(float)


def _selu(x):
    return _SELU_SCALE * np.where(x > 0, x, _SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _hermite_basis(k):
    # unnormalized probabilists' He_k, i.e. sqrt(k!) * he_k
    scale = math.sqrt(math.factorial(k))
    return lambda x: scale * hermite_table(k, x)[k]


_KINKED = {"relu", "leaky_relu", "step", "selu"}
# smooth, but poles near the real axis slow Gauss-Hermite convergence at high gain
_NEAR_POLES = {"tanh", "sigmoid"}


@dataclass(frozen=True)
class ActivationSpec:
    """A scalar activation evaluated as ``sigma(gain * x)``.

    ``param`` carries the Hermite degree for ``hermite_basis`` and the negative
    slope for ``leaky_relu``; ``fn`` is the callable of a ``custom`` activation.
    """

    kind: str
    gain: float = 1.0
    param: Optional[float] = None
    fn: Optional[Callable] = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown activation kind {self.kind!r}")
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise InvalidInput("gain must be a positive finite number")
        if self.kind == "hermite_basis" and (self.param is None or int(self.param) != self.param
                                             or self.param < 0):
            raise InvalidInput("hermite_basis needs a non-negative integer degree")
        if self.kind == "custom" and self.fn is None:
            raise InvalidInput("custom activation needs a callable")

    @property
    def name(self) -> str:
        if self.kind == "hermite_basis":
            return f"he{int(self.param)}"
        if self.kind == "leaky_relu" and self.param is not None:
            return f"leaky_relu:{self.param:g}"
        if self.kind == "custom":
            return getattr(self.fn, "__name__", "custom")
        return self.kind

    @property
    def breakpoints(self) -> tuple:
        return (0.0,) if self.kind in _KINKED else ()

    def base(self) -> Callable:
        kind = self.kind
        if kind == "identity":
            return lambda x: np.asarray(x, dtype=float) * 1.0
        if kind == "hermite_basis":
            return _hermite_basis(int(self.param))
        if kind == "relu":
            return lambda x: np.maximum(x, 0.0)
        if kind == "leaky_relu":
            slope = 0.01 if self.param is None else float(self.param)
            return lambda x: np.where(x > 0, x, slope * x)
        if kind == "step":
            return _step
        if kind == "sin":
            return np.sin
        if kind == "exp":
            return np.exp
        if kind == "tanh":
            return np.tanh
        if kind == "sigmoid":
            return _sigmoid
        if kind == "selu":
            return _selu
        fn = self.fn
        return lambda x: np.asarray(fn(x), dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return self.base()(self.gain * x)


KINDS = ("identity", "hermite_basis", "relu", "leaky_relu", "step", "sin", "exp",
         "tanh", "sigmoid", "selu", "custom")

# activations whose non-linearity strength has a closed form at unit gain
CATALOG = ("identity", "he2", "sin", "exp", "step", "relu")


def activation(name: str, gain: float = 1.0) -> ActivationSpec:
    """Parse an activation name such as ``relu``, ``he3`` or ``leaky_relu:0.2``."""
    name = name.strip().lower()
    if name.startswith("he") and name[2:].isdigit():
        return ActivationSpec("hermite_basis", gain, int(name[2:]))
    if name.startswith("leaky_relu"):
        _, _, slope = name.partition(":")
        return ActivationSpec("leaky_relu", gain, float(slope) if slope else None)
    if name in ("linear", "id"):
        name = "identity"
    if name not in KINDS or name in ("hermite_basis", "custom"):
        raise InvalidInput(f"unknown activation {name!r}")
    return ActivationSpec(name, gain)


@dataclass(frozen=True)
class HermiteExpansion:
    coeffs: np.ndarray
    tail_mass: float
    second_moment: float
    activation: Optional[ActivationSpec] = None

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    @property
    def total_power(self) -> float:
        return float(np.sum(self.coeffs ** 2))

    @property
    def c0(self) -> float:
        return float(self.coeffs[0])

    @property
    def centered_power(self) -> float:
        """``sum_{k>=1} c_k^2`` including the tail; equals ``Var sigma(x)``."""
        return float(np.sum(self.coeffs[1:] ** 2)) + self.tail_mass

    @property
    def tail_fraction(self) -> float:
        cp = self.centered_power
        return self.tail_mass / cp if cp > 0 else 0.0

    @property
    def converged(self) -> bool:
        return self.tail_fraction <= TAIL_TOLERANCE


def quadrature_rule(act: ActivationSpec, quad_order: int = DEFAULT_QUAD_ORDER):
    if act.breakpoints or act.kind in _NEAR_POLES:
        return gaussian_panel_rule(act.breakpoints)
    return gauss_hermite(quad_order)


def _probe_second_moment(act, x, second, quad_order):
    # a divergent E sigma^2 still gives a finite sum on any fixed rule, but the
    # sum then jumps when the outermost nodes move
    if act.breakpoints or act.kind in _NEAR_POLES:
        return
    other = quad_order + 42 if quad_order + 42 <= MAX_QUAD_ORDER else quad_order - 42
    z, w = gauss_hermite(other)
    with np.errstate(over="ignore", invalid="ignore"):
        s2 = act(z)
        alt = float(np.sum(w * s2 * s2))
    rel = abs(alt - second) / max(abs(second), 1e-300)
    if not math.isfinite(alt) or rel > 0.1:
        raise NotSquareIntegrable(f"{act.name}: Gaussian second moment does not converge")
    if rel > 1e-6:
        log.warning("%s: second moment converges slowly (relative change %.2g)", act.name, rel)


@lru_cache(maxsize=256)
def expand(act: ActivationSpec, K: int = DEFAULT_DEGREE,
           quad_order: int = DEFAULT_QUAD_ORDER) -> HermiteExpansion:
    """Hermite coefficients ``c_0..c_K`` of ``act`` plus the Parseval tail mass."""
    if K < 1:
        raise InvalidInput("truncation degree must be at least 1")
    if quad_order < 2 * K + 2:
        raise InvalidInput(f"quad_order must be >= 2K+2 = {2 * K + 2}")
    x, w = quadrature_rule(act, quad_order)
    s = act(x)
    with np.errstate(over="ignore", invalid="ignore"):
        second = float(np.sum(w * s * s))
    if not (np.all(np.isfinite(s)) and math.isfinite(second)):
        raise NotSquareIntegrable(f"{act.name}: Gaussian second moment is not finite")
    _probe_second_moment(act, x, second, quad_order)
    coeffs = hermite_table(K, x) @ (w * s)
    tail = second - float(np.sum(coeffs ** 2))
    if tail <= _ROUNDOFF_TAIL * abs(second):
        tail = 0.0
    coeffs.flags.writeable = False
    return HermiteExpansion(coeffs=coeffs, tail_mass=tail, second_moment=second, activation=act)


def beta0(exp: HermiteExpansion) -> float:
    """Non-linearity strength, in ``[1, 2]``."""
    cp = exp.centered_power
    if cp <= 1e-14 * max(exp.second_moment, 1e-300):
        raise DegenerateActivation("activation is constant almost everywhere")
    return 2.0 - exp.coeffs[1] ** 2 / cp


def beta0_closed_form(act: ActivationSpec) -> Optional[float]:
    """Exact non-linearity strength where a closed form is known, else ``None``."""
    a2 = act.gain ** 2
    kind = act.kind
    if kind == "identity":
        return 1.0
    if kind == "relu" or kind == "step":
        # both are positively homogeneous in the gain
        if kind == "relu":
            return (3 * math.pi - 4) / (2 * math.pi - 2)
        return 2.0 - 2.0 / math.pi
    if kind == "sin":
        return 2.0 - 2.0 * a2 / (2.0 * math.sinh(a2))
    if kind == "exp":
        return 2.0 - a2 / math.expm1(a2)
    if kind == "hermite_basis":
        k = int(act.param)
        if k == 1:
            return 1.0
        if k == 2 or (k >= 2 and act.gain == 1.0):
            return 2.0
    return None


def _horner(coeffs: np.ndarray, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for c in coeffs[::-1]:
        out = out * rho + c
    return out


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise InvalidInput("correlation must lie in [-1, 1]")
    return rho


def dual(exp: HermiteExpansion, rho):
    """Dual activation ``E sigma(X) sigma(Y)`` for unit Gaussians with correlation ``rho``."""
    rho = _check_rho(rho)
    out = _horner(exp.coeffs ** 2, rho) + np.where(rho == 1.0, exp.tail_mass, 0.0)
    return out if out.ndim else float(out)


def reduced_dual(exp: HermiteExpansion, rho):
    """Mean-reduced dual activation (covariance of ``sigma(X)`` and ``sigma(Y)``)."""
    rho = _check_rho(rho)
    sq = exp.coeffs ** 2
    sq[0] = 0.0
    out = _horner(sq, rho) + np.where(rho == 1.0, exp.tail_mass, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ContractionReport:
    rho: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ok: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ok))


def contraction_check(exp: HermiteExpansion, rho_grid) -> ContractionReport:
    """Check ``r/(1-r) <= |rho|/(1-|rho|) / beta0`` with ``r = |reduced_dual(rho)|/reduced_dual(1)``."""
    rho = np.asarray(rho_grid, dtype=float)
    if np.any((rho <= 0) | (rho >= 1)):
        raise InvalidInput("grid values must lie in the open interval (0, 1)")
    b = beta0(exp)
    r = np.abs(reduced_dual(exp, rho)) / reduced_dual(exp, 1.0)
    lhs = r / (1.0 - r)
    rhs = rho / (1.0 - rho) / b
    ok = lhs <= rhs * (1.0 + 1e-9)
    return ContractionReport(rho=rho, lhs=lhs, rhs=rhs, ok=ok)


def mehler_check(j: int, k: int, rho: float, quad_order: int = 120):
    """``E he_j(X) he_k(Y)`` for correlation ``rho`` by tensor Gauss-Hermite; returns (measured, expected)."""
    if max(j, k) > 20 or min(j, k) < 0:
        raise InvalidInput("degrees must lie in 0..20")
    if quad_order < 100:
        raise InvalidInput("quad_order must be at least 100")
    if not -1.0 < rho < 1.0:
        raise InvalidInput("rho must lie in (-1, 1)")
    z, w = gauss_hermite(quad_order)
    x = z[:, None]
    y = rho * z[:, None] + math.sqrt(1.0 - rho * rho) * z[None, :]
    vals = hermite_eval(j, x) * hermite_eval(k, y)
    measured = float(w @ vals @ w)
    expected = rho ** j if j == k else 0.0
    return measured, expected
