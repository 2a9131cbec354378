"""Finite-width random MLPs with configurable centering and projection.

Representations are stored per coordinate at unit scale: ``X`` is ``d x n``
with samples as columns, a layer computes ``A = sigma(W X / sqrt(d))`` with
``W ~ N(0, 1)``, and layer-norm projection rescales each sample onto the
``sqrt(d)``-sphere. Diagnostics use the Gram ``X^T X / d``, i.e. the Gram of
unit-norm samples after layer norm. Isometry and the potential are
scale-invariant, so this bookkeeping does not change them.

Batch-norm (``norm_axis="per_feature"``) centers and projects each row across
the batch, dividing row ``i`` by ``sqrt(mean_j X_ij^2)``.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import ConfigError, InvalidInput, NonFiniteActivation, ZeroVector
from .hermite import ActivationSpec, HermiteExpansion, activation, dual, expand, reduced_dual
from .meanfield import lyapunov_gamma

CENTERINGS = ("none", "layer_mean", "mean_field_c0")
PROJECTIONS = ("none", "sphere_ln", "mean_field_scale", "xavier_scale")
NORM_AXES = ("per_sample", "per_feature")
INPUT_MODES = ("gaussian", "duplicated_pair", "equicorrelated")


@dataclass(frozen=True)
class RNGStream:
    """Counter-addressed random stream: ``(seed, counter)`` fixes every draw.

    Backed by numpy's Philox counter-based generator; distinct counters give
    statistically independent substreams.
    """

    seed: int
    counter: tuple = ()

    def child(self, *ids: int) -> "RNGStream":
        return RNGStream(self.seed, self.counter + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2 ** 64 - 1), spawn_key=self.counter)
        return np.random.Generator(np.random.Philox(ss))


# substream labels; runs use their index as the first counter entry
_INPUT_STREAM = 2 ** 32


def sample_weights(rng: RNGStream, d: int) -> np.ndarray:
    if d < 1:
        raise InvalidInput("width must be positive")
    return rng.generator().standard_normal((d, d))


@dataclass(frozen=True)
class NetworkConfig:
    width: int
    batch: int
    depth: int
    activation: ActivationSpec
    centering: str = "layer_mean"
    projection: str = "sphere_ln"
    norm_axis: str = "per_sample"
    seed: int = 0
    runs: int = 1
    input_mode: str = "gaussian"
    rho0: float = 0.5

    def __post_init__(self):
        if self.width < 2 or self.batch < 2 or self.depth < 0 or self.runs < 1:
            raise ConfigError("need width >= 2, batch >= 2, depth >= 0, runs >= 1")
        for value, allowed, key in ((self.centering, CENTERINGS, "centering"),
                                    (self.projection, PROJECTIONS, "projection"),
                                    (self.norm_axis, NORM_AXES, "norm_axis"),
                                    (self.input_mode, INPUT_MODES, "input_mode")):
            if value not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {value!r}")
        if self.input_mode == "equicorrelated" and not -1.0 / (self.batch - 1) < self.rho0 < 1.0:
            raise ConfigError(f"rho0 must lie in (-1/(n-1), 1), got {self.rho0}")

    def needs_expansion(self) -> bool:
        return self.centering == "mean_field_c0" or self.projection in ("mean_field_scale",
                                                                        "xavier_scale")


@dataclass(frozen=True)
class LayerConstants:
    c0: float = 0.0
    scale: float = 1.0

    @classmethod
    def resolve(cls, cfg: NetworkConfig, exp: HermiteExpansion | None = None) -> "LayerConstants":
        if not cfg.needs_expansion():
            return cls()
        if exp is None:
            exp = expand(cfg.activation)
        c0 = exp.c0 if cfg.centering == "mean_field_c0" else 0.0
        scale = 1.0
        if cfg.projection == "mean_field_scale":
            scale = math.sqrt(reduced_dual(exp, 1.0))
        elif cfg.projection == "xavier_scale":
            scale = math.sqrt(dual(exp, 1.0))
        return cls(c0, scale)


def norm_bias(values) -> float:
    """Population variance of ``values`` over their squared mean."""
    v = np.asarray(values, dtype=float)
    m = v.mean()
    if m <= 0:
        raise InvalidInput("norm bias needs a positive mean")
    return float(np.mean((v - m) ** 2) / m ** 2)


def _apply_layer(X, W, cfg: NetworkConfig, consts: LayerConstants):
    d = X.shape[0]
    A = cfg.activation(W @ X / math.sqrt(d))
    if not np.all(np.isfinite(A)):
        raise NonFiniteActivation("activation produced non-finite values")
    per_sample = cfg.norm_axis == "per_sample"
    axis = 0 if per_sample else 1
    if cfg.centering == "layer_mean":
        A = A - A.mean(axis=axis, keepdims=True)
    elif cfg.centering == "mean_field_c0":
        A = A - consts.c0
    norms = np.linalg.norm(A, axis=axis)
    if cfg.projection == "sphere_ln":
        if per_sample:
            A, _ = linalg.normalize_columns(A, math.sqrt(d))
        else:
            A, _ = linalg.normalize_rows(A, math.sqrt(X.shape[1]))
    elif cfg.projection in ("mean_field_scale", "xavier_scale"):
        A = A / consts.scale
    return A, norms


def forward_layer(X, W, cfg: NetworkConfig, exp: HermiteExpansion | None = None) -> np.ndarray:
    X = linalg.as_matrix(X)
    W = linalg.as_matrix(W)
    if W.shape != (X.shape[0], X.shape[0]):
        raise InvalidInput(f"weight shape {W.shape} does not match width {X.shape[0]}")
    return _apply_layer(X, W, cfg, LayerConstants.resolve(cfg, exp))[0]


def preprocess_input(X0) -> tuple[np.ndarray, np.ndarray]:
    """Project every input sample onto the ``sqrt(d)``-sphere; returns (X, raw norms)."""
    X0 = linalg.as_matrix(X0)
    norms = np.linalg.norm(X0, axis=0)
    X, _ = linalg.normalize_columns(X0, math.sqrt(X0.shape[0]))
    return X, norms


def make_input(n: int, d: int, rng: RNGStream, mode: str = "gaussian", rho: float = 0.5):
    if mode not in INPUT_MODES:
        raise InvalidInput(f"unknown input mode {mode!r}")
    gen = rng.generator()
    if mode == "equicorrelated":
        if not -1.0 / (n - 1) < rho < 1.0:
            raise InvalidInput(f"equicorrelation {rho} is not positive definite for n={n}")
        if d < n:
            raise InvalidInput("equicorrelated input needs d >= n")
        # closed-form symmetric square root of (1-rho) I + rho 11^T
        a = math.sqrt(1.0 - rho)
        b = (math.sqrt(1.0 + (n - 1) * rho) - a) / n
        root = a * np.eye(n) + b * np.ones((n, n))
        Q, _ = np.linalg.qr(gen.standard_normal((d, n)))
        return Q @ root
    X = gen.standard_normal((d, n))
    if mode == "duplicated_pair":
        X[:, 1] = X[:, 0]
    return X


def config_input(cfg: NetworkConfig) -> np.ndarray:
    rng = RNGStream(cfg.seed).child(_INPUT_STREAM)
    return make_input(cfg.batch, cfg.width, rng, cfg.input_mode, cfg.rho0)


@dataclass(frozen=True)
class LayerTrace:
    run: int
    layer: int
    iso_gap: float
    gamma: float
    norm_bias: float
    wall_time: float


def _diagnostics(X):
    G = linalg.gram_from_columns(X) / X.shape[0]
    return G, linalg.iso_gap(G), lyapunov_gamma(G)


def simulate_run(cfg: NetworkConfig, X0, run: int, consts: LayerConstants | None = None,
                 keep_grams: bool = False, stop_on_overflow: bool = False):
    """One network draw; returns ``(traces, grams)`` with ``grams`` empty unless requested.

    With ``stop_on_overflow`` a non-finite representation ends the run early
    instead of raising, and the traces computed so far are returned.
    """
    if consts is None:
        consts = LayerConstants.resolve(cfg)
    stream = RNGStream(cfg.seed).child(run)
    t0 = time.perf_counter()
    X, raw_norms = preprocess_input(X0)
    G, gap, gam = _diagnostics(X)
    traces = [LayerTrace(run, 0, gap, gam, norm_bias(raw_norms), time.perf_counter() - t0)]
    grams = [G] if keep_grams else []
    for layer in range(1, cfg.depth + 1):
        W = sample_weights(stream.child(layer), cfg.width)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                X, norms = _apply_layer(X, W, cfg, consts)
                finite = np.all(np.isfinite(X)) and np.isfinite(np.sum(X * X))
        except ZeroVector as exc:
            raise ZeroVector(exc.index, exc.axis, context=f"run {run}, layer {layer}") from exc
        except NonFiniteActivation as exc:
            if stop_on_overflow:
                break
            raise NonFiniteActivation(f"run {run}, layer {layer}: {exc}") from exc
        if not finite:
            if stop_on_overflow:
                break
            raise NonFiniteActivation(f"run {run}, layer {layer}: representation overflowed")
        G, gap, gam = _diagnostics(X)
        traces.append(LayerTrace(run, layer, gap, gam, norm_bias(norms),
                                 time.perf_counter() - t0))
        if keep_grams:
            grams.append(G)
    return traces, grams


def worker_count() -> int:
    env = os.environ.get("ISOGAUGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ISOGAUGE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_network(cfg: NetworkConfig, X0=None, keep_grams: bool = False):
    """All runs of ``cfg``; traces are ordered by (run, layer) whatever the worker count.

    With ``keep_grams`` the per-run Gram lists are returned alongside the traces.
    """
    if X0 is None:
        X0 = config_input(cfg)
    X0 = linalg.as_matrix(X0)
    if X0.shape != (cfg.width, cfg.batch):
        raise InvalidInput(f"input shape {X0.shape} != (width, batch) = "
                           f"{(cfg.width, cfg.batch)}")
    consts = LayerConstants.resolve(cfg)
    workers = min(worker_count(), cfg.runs)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda r: simulate_run(cfg, X0, r, consts, keep_grams),
                                    range(cfg.runs)))
    else:
        results = [simulate_run(cfg, X0, r, consts, keep_grams) for r in range(cfg.runs)]
    traces = [t for res in results for t in res[0]]
    if keep_grams:
        return traces, [res[1] for res in results]
    return traces


def with_overrides(cfg: NetworkConfig, **kw) -> NetworkConfig:
    return replace(cfg, **kw)


CONFIG_KEYS = ("width", "batch", "depth", "activation", "gain", "centering", "projection",
               "norm_axis", "seed", "runs", "input_mode", "rho0")


def parse_config(text: str) -> NetworkConfig:
    """Parse the flat ``key = value`` config format; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    missing = [k for k in ("width", "batch", "depth", "activation") if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        act = activation(values.pop("activation"), float(values.pop("gain", 1.0)))
        kw = {k: int(values[k]) for k in ("width", "batch", "depth", "seed", "runs")
              if k in values}
        if "rho0" in values:
            kw["rho0"] = float(values["rho0"])
        for k in ("centering", "projection", "norm_axis", "input_mode"):
            if k in values:
                kw[k] = values[k]
    except (ValueError, InvalidInput) as exc:
        raise ConfigError(str(exc)) from None
    return NetworkConfig(activation=act, **kw)
