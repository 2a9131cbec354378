"""Randomized invariant batteries for every claim the library implements.

Each battery draws its own substream from ``(seed, battery id)`` so adding or
reordering batteries never changes another battery's draws. ``MANIFEST`` is
the authoritative list; ``verify_all`` refuses to report if a battery went
missing.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import linalg
from ..errors import InvalidInput
from ..hermite import (activation, beta0, beta0_closed_form, contraction_check, dual,
                       expand, gauss_hermite, mehler_check, CATALOG)
from ..meanfield import lyapunov_gamma, mf_step, run_meanfield, isogap_bound
from ..network import NetworkConfig, preprocess_input, run_network


@dataclass(frozen=True)
class VerificationReport:
    name: str
    trials: int
    failures: int
    worst: float

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name} trials={self.trials} failures={self.failures} "
                f"worst={self.worst:.17g}")


class _Tally:
    def __init__(self, name):
        self.name, self.trials, self.failures, self.worst = name, 0, 0, -math.inf

    def add(self, violation: float):
        """Record one trial; ``violation > 0`` is a failure (NaN also fails).

        ``worst`` keeps the largest violation, so a negative value is the
        smallest slack seen.
        """
        self.trials += 1
        if not violation <= 0:
            self.failures += 1
        if math.isnan(violation):
            self.worst = math.inf
        else:
            self.worst = max(self.worst, violation)

    def report(self):
        return VerificationReport(self.name, self.trials, self.failures, self.worst)


def _rng(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.Philox(ss))


def random_samples(rng, n_range=(2, 10), width_factor=(1, 3), spread=1.0):
    """A ``d x n`` Gaussian sample matrix with log-normal column scales."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    d = int(rng.integers(width_factor[0] * n, width_factor[1] * n + 1))
    X = rng.standard_normal((d, n)) * np.exp(spread * rng.standard_normal(n))[None, :]
    return X


def random_correlation(rng, n_range=(2, 10)) -> np.ndarray:
    """Unit-diagonal PSD matrix, shrunk toward the identity by a random amount."""
    X = random_samples(rng, n_range, width_factor=(1, 2), spread=0.0)
    X = X + rng.uniform(0, 3) * rng.standard_normal((X.shape[0], 1))  # shared direction
    Y, _ = linalg.normalize_columns(X)
    C = linalg.gram_from_columns(Y)
    t = rng.uniform()
    G = (1 - t) * np.eye(C.shape[0]) + t * C
    np.fill_diagonal(G, 1.0)
    return G


SMOOTH = ("identity", "he2", "he3", "sin", "exp", "tanh", "sigmoid")
CONTRACTION_ACTS = ("identity", "he2", "sin", "exp", "step", "relu", "tanh", "sigmoid", "selu",
                    "leaky_relu:0.2")
GAIN_CHOICES = (0.5, 1.0, 2.0)


# --------------------------------------------------------------------- isometry

def battery_isometry_basic_properties(rng, trials):
    t = _Tally("isometry_basic_properties")
    for _ in range(trials):
        X = random_samples(rng, width_factor=(1, 3))
        G = linalg.gram_from_columns(X)
        v = linalg.iso(G)
        c = math.exp(rng.uniform(-5, 5))
        scale_err = abs(linalg.iso(c * G) - v) - 1e-10
        range_err = max(-v, v - 1.0)
        n = G.shape[0]
        ident_err = abs(linalg.iso(c * np.eye(n)) - 1.0) - 1e-12
        D = np.diag(np.exp(rng.uniform(0.1, 1.0, n)))
        D[0, 0] = 1.0
        nonmult_err = linalg.iso(D) - (1.0 - 1e-12)
        t.add(max(scale_err, range_err, ident_err, nonmult_err))
    return t.report()


def _normalization_trial(X, axis, target):
    if axis == "column":
        G = linalg.gram_from_columns(X)
        Y, stats = linalg.normalize_columns(X, target)
        Gh = linalg.gram_from_columns(Y)
    else:
        G = linalg.gram_from_rows(X)
        Y, stats = linalg.normalize_rows(X, target)
        Gh = linalg.gram_from_rows(Y)
    ratio = math.exp(linalg.iso_gap(G) - linalg.iso_gap(Gh))
    lower = linalg.isometry_ratio_identity(stats)
    exact = linalg.exact_isometry_ratio(stats)
    return max(lower - ratio - 1e-10 * lower, abs(ratio / exact - 1.0) - 1e-8)


def battery_normalization_isometry_gain(rng, trials):
    t = _Tally("normalization_isometry_gain")
    for _ in range(trials):
        t.add(_normalization_trial(random_samples(rng), "column", 1.0))
    return t.report()


def battery_layer_norm_isometry_gain(rng, trials):
    t = _Tally("layer_norm_isometry_gain")
    for _ in range(trials):
        X = random_samples(rng)
        t.add(_normalization_trial(X, "column", math.sqrt(X.shape[0])))
    return t.report()


def battery_batch_norm_isometry_gain(rng, trials):
    t = _Tally("batch_norm_isometry_gain")
    for _ in range(trials):
        # features are rows; need n >= d for a non-degenerate d x d covariance
        X = random_samples(rng).T
        t.add(_normalization_trial(X, "row", math.sqrt(X.shape[1])))
    return t.report()


def battery_determinant_bounds(rng, trials):
    t = _Tally("determinant_bounds")
    for _ in range(trials):
        G = random_correlation(rng)
        b = linalg.det_bounds(G)
        det = math.exp(linalg.log_det_psd(G))
        viol = det - b.upper - 1e-12
        if b.lower_valid:
            viol = max(viol, b.lower - det - 1e-12)
        t.add(viol)
    return t.report()


# ---------------------------------------------------------------------- hermite

def _dual_oracle(act, rho, order=160):
    """``E sigma(X) sigma(Y)`` by tensor Gauss-Hermite, independent of the expansion."""
    z, w = gauss_hermite(order)
    x = z[:, None]
    y = rho * z[:, None] + math.sqrt(1.0 - rho * rho) * z[None, :]
    return float(w @ (act(x) * act(y)) @ w)


def relu_dual(rho, gain=1.0):
    """Arc-cosine kernel: ``E relu(aX) relu(aY)`` for unit Gaussians with correlation ``rho``."""
    rho = np.clip(rho, -1.0, 1.0)
    return gain ** 2 * (np.sqrt(1 - rho ** 2) + (math.pi - np.arccos(rho)) * rho) / (2 * math.pi)


def battery_dual_kernel_series(rng, trials):
    t = _Tally("dual_kernel_series")
    names = SMOOTH + ("relu",)
    for _ in range(trials):
        name = names[int(rng.integers(len(names)))]
        act = activation(name, GAIN_CHOICES[int(rng.integers(len(GAIN_CHOICES)))])
        if name in ("exp", "tanh", "sigmoid") and act.gain > 1:
            # the tensor Gauss-Hermite oracle itself loses accuracy here
            act = activation(name, 1.0)
        e = expand(act)
        rho = float(rng.uniform(-0.99, 0.99))
        if name == "relu":
            ref = float(relu_dual(rho, act.gain))
        else:
            ref = _dual_oracle(act, rho)
        tol = e.tail_mass * abs(rho) ** (e.K + 1) + 1e-9 * max(1.0, abs(ref))
        t.add(abs(dual(e, rho) - ref) - tol)
    return t.report()


def battery_reduced_dual_contraction(rng, trials):
    t = _Tally("reduced_dual_contraction")
    for _ in range(trials):
        name = CONTRACTION_ACTS[int(rng.integers(len(CONTRACTION_ACTS)))]
        e = expand(activation(name, GAIN_CHOICES[int(rng.integers(len(GAIN_CHOICES)))]))
        grid = rng.uniform(1e-3, 1 - 1e-3, 16)
        rep = contraction_check(e, grid)
        t.add(float(np.max((rep.lhs - rep.rhs) / rep.rhs)) - 1e-9)
    return t.report()


def battery_mehler_orthogonality(rng, trials):
    t = _Tally("mehler_orthogonality")
    for _ in range(trials):
        j, k = (int(v) for v in rng.integers(0, 9, 2))
        rho = float(rng.uniform(-0.95, 0.95))
        measured, expected = mehler_check(j, k, rho)
        t.add(abs(measured - expected) - 1e-8)
    return t.report()


def battery_beta0_closed_forms(rng, trials):
    t = _Tally("beta0_closed_forms")
    for _ in range(max(1, trials // len(CATALOG))):
        for name in CATALOG:
            act = activation(name)
            t.add(abs(beta0(expand(act)) - beta0_closed_form(act)) - 1e-6)
    return t.report()


def battery_beta0_gain_closed_forms(rng, trials):
    t = _Tally("beta0_gain_closed_forms")
    names = ("relu", "step", "sin", "exp", "he2", "identity")
    for _ in range(trials):
        name = names[int(rng.integers(len(names)))]
        # a coarse gain lattice keeps the expansion cache useful
        gain = float(np.round(rng.uniform(0.25, 2.0), 2))
        act = activation(name, gain)
        t.add(abs(beta0(expand(act)) - beta0_closed_form(act)) - 1e-6)
    return t.report()


# ------------------------------------------------------------------- mean field

def battery_one_step_contraction(rng, trials, gamma_fn: Callable = lyapunov_gamma):
    t = _Tally("one_step_contraction")
    for _ in range(trials):
        name = CONTRACTION_ACTS[int(rng.integers(len(CONTRACTION_ACTS)))]
        e = expand(activation(name, GAIN_CHOICES[int(rng.integers(len(GAIN_CHOICES)))]))
        G = random_correlation(rng)
        g0 = gamma_fn(G)
        if math.isinf(g0):
            continue
        t.add(gamma_fn(mf_step(G, e)) - g0 / beta0(e) - 1e-9)
    return t.report()


def battery_potential_decay(rng, trials):
    t = _Tally("potential_decay")
    for _ in range(trials):
        name = CONTRACTION_ACTS[int(rng.integers(len(CONTRACTION_ACTS)))]
        e = expand(activation(name, GAIN_CHOICES[int(rng.integers(len(GAIN_CHOICES)))]))
        G = random_correlation(rng)
        tr = run_meanfield(G, e, int(rng.integers(1, 25)))
        g, gb = tr.column("gamma"), tr.column("gamma_bound")
        t.add(float(np.max(g - gb * (1 + 1e-9) - 1e-12)))
    return t.report()


def battery_isometry_gap_bound(rng, trials):
    t = _Tally("isometry_gap_bound")
    names = tuple(a for a in CONTRACTION_ACTS if a != "identity")
    for _ in range(trials):
        e = expand(activation(names[int(rng.integers(len(names)))]))
        G = random_correlation(rng, n_range=(2, 6))
        iso0 = linalg.iso(G)
        _, valid_from = isogap_bound(iso0, beta0(e), G.shape[0], 0)
        depth = min(valid_from + 10, 400)
        tr = run_meanfield(G, e, depth)
        viol = [r.iso_gap - r.iso_gap_bound * (1 + 1e-9) for r in tr.records if r.bound_valid]
        t.add(max(viol, default=0.0))
    return t.report()


# ------------------------------------------------------------ width convergence

def finite_width_error(width, batch=4, depth=5, runs=20, seed=0, rho0=0.5, act="relu"):
    """Max-entry error between the run-averaged LN-MLP Gram and the mean-field Gram."""
    cfg = NetworkConfig(width=width, batch=batch, depth=depth, activation=activation(act),
                        seed=seed, runs=runs, input_mode="equicorrelated", rho0=rho0)
    _, grams = run_network(cfg, keep_grams=True)
    mean = np.mean([g[-1] for g in grams], axis=0)
    from ..network import config_input
    X, _ = preprocess_input(config_input(cfg))
    G0 = linalg.gram_from_columns(X) / width
    np.fill_diagonal(G0, 1.0)
    tr = run_meanfield(G0, expand(cfg.activation), depth, keep_grams=True)
    return float(np.max(np.abs(mean - tr.grams[-1])))


WIDTH_TRIAL_CAP = 3


def battery_width_convergence(rng, trials):
    """Finite-width averages approach the mean-field Gram; capped because each trial simulates."""
    t = _Tally("width_convergence")
    for _ in range(min(trials, WIDTH_TRIAL_CAP)):
        seed = int(rng.integers(2 ** 31))
        err = finite_width_error(400, depth=3, runs=10, seed=seed)
        t.add(err - 0.15)
    return t.report()


MANIFEST = {
    "isometry_basic_properties": "Iso is scale invariant, lies in [0, 1], equals 1 exactly on multiples of I",
    "normalization_isometry_gain": "unit-sphere projection raises Iso by at least 1 + var/mean^2 of the norms",
    "layer_norm_isometry_gain": "same gain for projection onto the sqrt(d) sphere",
    "batch_norm_isometry_gain": "same gain for the feature covariance under row normalization",
    "determinant_bounds": "(1-(n-1)m)^n <= det G <= 1 - m^2 for unit-diagonal G",
    "dual_kernel_series": "E sigma(X)sigma(Y) = sum_k c_k^2 rho^k",
    "reduced_dual_contraction": "normalized reduced dual contracts the potential by beta0",
    "mehler_orthogonality": "E he_j(X) he_k(Y) = rho^j delta_jk",
    "beta0_closed_forms": "quadrature beta0 matches closed forms at unit gain",
    "beta0_gain_closed_forms": "quadrature beta0 matches closed forms across gains",
    "one_step_contraction": "gamma(mf_step(G)) <= gamma(G) / beta0",
    "potential_decay": "gamma_l <= gamma_0 beta0^-l",
    "isometry_gap_bound": "mean-field isometry gap below exp(-l log beta0 - n log Iso0 + log 4n)",
    "width_convergence": "finite-width LN-MLP Gram approaches the mean-field Gram",
}

BATTERIES = {name: globals()[f"battery_{name}"] for name in MANIFEST}


def verify_all(trials: int = 1000, seed: int = 7, only=None) -> list[VerificationReport]:
    if trials < 1:
        raise InvalidInput("trials must be at least 1")
    names = list(MANIFEST) if only is None else list(only)
    reports = [BATTERIES[n](_rng(seed, n), trials) for n in names]
    if only is None:
        missing = set(MANIFEST) - {r.name for r in reports}
        if missing:
            raise RuntimeError(f"batteries missing from the run: {sorted(missing)}")
    return reports
