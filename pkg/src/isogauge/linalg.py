"""Dense symmetric-matrix machinery: Gram matrices, log-determinants and isometry.

Matrices are plain 2-D ``numpy`` arrays. Samples are stored as columns
(``X`` is ``d x n``), so ``gram_from_columns`` gives the ``n x n`` sample Gram
and ``gram_from_rows`` the ``d x d`` feature covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, InvalidInput, NotPSD, ParseError, ZeroVector

SYMMETRY_ATOL = 1e-10
PSD_RTOL = 1e-9
PIVOT_FLOOR = 1e-300
# pivots below this fraction of the mean diagonal are numerically zero; exact
# rank deficiency (duplicated samples) otherwise leaves a few ulps behind
PIVOT_RFLOOR = 1e-13
UNIT_DIAG_ATOL = 1e-9


@dataclass(frozen=True)
class SpectralSummary:
    log_det: float
    trace: float
    n: int
    iso: float
    iso_gap: float


@dataclass(frozen=True)
class NormStats:
    norms: np.ndarray
    mean: float
    variance: float

    @classmethod
    def from_norms(cls, norms) -> "NormStats":
        a = np.asarray(norms, dtype=float)
        mean = float(a.mean())
        return cls(norms=a, mean=mean, variance=float(np.mean((a - mean) ** 2)))


class DetBounds(NamedTuple):
    lower: float
    upper: float
    lower_valid: bool


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("matrix contains non-finite entries")
    return X


def as_gram(G) -> np.ndarray:
    """Validate a symmetric matrix with a non-negative diagonal."""
    G = as_matrix(G)
    if G.shape[0] != G.shape[1]:
        raise InvalidInput(f"Gram matrix must be square, got {G.shape}")
    if not np.allclose(G, G.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise InvalidInput("Gram matrix is not symmetric")
    if np.any(np.diag(G) < 0):
        raise InvalidInput("Gram matrix has a negative diagonal entry")
    return G


def gram_from_columns(X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] < 1:
        raise InvalidInput("need at least one column")
    G = X.T @ X
    return 0.5 * (G + G.T)


def gram_from_rows(X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[0] < 1:
        raise InvalidInput("need at least one row")
    G = X @ X.T
    return 0.5 * (G + G.T)


def _cholesky_pivots(G: np.ndarray) -> np.ndarray:
    """Squared Cholesky pivots of ``G``; stops at the first numerically zero pivot.

    Raises NotPSD when a pivot is more negative than the PSD tolerance.
    """
    n = G.shape[0]
    scale = np.trace(G) / n
    tol = PSD_RTOL * scale
    floor = max(PIVOT_FLOOR, PIVOT_RFLOOR * scale)
    A = G.copy()
    pivots = np.empty(n)
    for k in range(n):
        p = A[k, k]
        if p < -tol:
            raise NotPSD(f"pivot {k} equals {p:.3e} < -{tol:.3e}")
        if p <= floor:
            pivots[k] = 0.0
            return pivots[: k + 1]
        pivots[k] = p
        col = A[k + 1:, k] / math.sqrt(p)
        A[k + 1:, k + 1:] -= np.outer(col, col)
    return pivots


def log_det_psd(G) -> float:
    """Natural log of ``det(G)`` via Cholesky; ``-inf`` for a degenerate matrix."""
    G = as_gram(G)
    if G.shape[0] == 0:
        return 0.0
    scale = np.trace(G) / G.shape[0]
    if scale <= 0:
        return -math.inf
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        d2 = np.diag(L) ** 2
        if d2.min() > max(PIVOT_FLOOR, PIVOT_RFLOOR * scale):
            return float(2.0 * np.sum(np.log(np.diag(L))))
    pivots = _cholesky_pivots(G)
    if pivots[-1] == 0.0:
        return -math.inf
    return float(np.sum(np.log(pivots)))


def spectral_summary(G) -> SpectralSummary:
    G = as_gram(G)
    n = G.shape[0]
    trace = float(np.trace(G))
    if trace <= 0:
        raise DegenerateInput("Gram matrix has zero trace")
    log_det = log_det_psd(G)
    if log_det == -math.inf:
        return SpectralSummary(log_det, trace, n, 0.0, math.inf)
    gap = math.log(trace / n) - log_det / n
    if gap < 0:
        if gap < -1e-12:
            raise ArithmeticError(f"isometry gap {gap:.3e} is negative beyond round-off")
        gap = 0.0
    return SpectralSummary(log_det, trace, n, math.exp(-gap), gap)


def iso(G) -> float:
    return spectral_summary(G).iso


def iso_gap(G) -> float:
    return spectral_summary(G).iso_gap


def max_off_diagonal(G: np.ndarray) -> float:
    n = G.shape[0]
    if n < 2:
        return 0.0
    off = np.abs(G[~np.eye(n, dtype=bool)])
    return float(off.max())


def det_bounds(G) -> DetBounds:
    """Gershgorin lower bound and angle-based upper bound on ``det(G)``.

    ``G`` must have a unit diagonal. The lower bound is only meaningful when
    ``(n-1) * max|G_ij| <= 1``; ``lower_valid`` reports that condition.
    """
    G = as_gram(G)
    if np.any(np.abs(np.diag(G) - 1.0) > UNIT_DIAG_ATOL):
        raise InvalidInput("det_bounds requires a unit diagonal")
    n = G.shape[0]
    m = max_off_diagonal(G)
    valid = (n - 1) * m <= 1.0
    lower = max(0.0, 1.0 - (n - 1) * m) ** n
    return DetBounds(lower=lower, upper=1.0 - m * m, lower_valid=valid)


def _normalize(X: np.ndarray, axis: int, target_norm: float, name: str):
    X = as_matrix(X)
    norms = np.linalg.norm(X, axis=axis)
    bad = np.flatnonzero(norms <= PIVOT_FLOOR)
    if bad.size:
        raise ZeroVector(int(bad[0]), axis=name)
    stats = NormStats.from_norms(norms)
    scale = target_norm / norms
    Y = X * (scale[:, None] if axis == 1 else scale[None, :])
    return Y, stats


def normalize_rows(X, target_norm: float = 1.0):
    """Rescale every row to ``target_norm``; returns the output and the input row norms."""
    return _normalize(X, 1, target_norm, "row")


def normalize_columns(X, target_norm: float = 1.0):
    """Column counterpart of ``normalize_rows`` (per-sample projection)."""
    return _normalize(X, 0, target_norm, "column")


def center_columns(X) -> np.ndarray:
    X = as_matrix(X)
    return X - X.mean(axis=0, keepdims=True)


def center_rows(X) -> np.ndarray:
    X = as_matrix(X)
    return X - X.mean(axis=1, keepdims=True)


def isometry_ratio_identity(norms: NormStats) -> float:
    """``1 + var(a)/mean(a)^2``: guaranteed multiplicative isometry gain of normalization."""
    if norms.mean <= 0 or np.any(norms.norms <= 0):
        raise InvalidInput("norms must be strictly positive")
    return 1.0 + norms.variance / norms.mean ** 2


def exact_isometry_ratio(norms: NormStats) -> float:
    """``Iso(G_normalized) / Iso(G)`` exactly: ``mean(a^2) / geomean(a)^2``.

    Dominates ``isometry_ratio_identity`` by the AM-GM inequality, with
    equality iff all norms agree.
    """
    a = norms.norms
    if np.any(a <= 0):
        raise InvalidInput("norms must be strictly positive")
    log_gm = float(np.mean(np.log(a)))
    return float(np.mean(a ** 2)) / math.exp(2.0 * log_gm)


def equicorrelation(n: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(n) + rho * np.ones((n, n))


def load_matrix_csv(path, symmetric: bool = False) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if len(rows[-1]) != len(rows[0]):
            raise ParseError("ragged row", line=lineno)
    if not rows:
        raise ParseError("empty matrix file")
    try:
        M = as_matrix(np.array(rows))
        return as_gram(M) if symmetric else M
    except InvalidInput as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_matrix_csv(path, M) -> None:
    M = as_matrix(M)
    lines = [",".join(f"{v:.17g}" for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")
