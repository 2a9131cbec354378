"""Experiment suites reproducing the depth-vs-isometry figures at desk scale.

Every suite validates its whole grid before running anything, derives all
randomness from ``(seed, run, layer)`` substreams, and writes CSVs whose bytes
depend only on the options. Each suite also renders a matplotlib figure next
to its CSVs unless figures are disabled.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import linalg
from ..errors import BoundInapplicable, ConfigError
from ..hermite import activation, beta0, beta0_closed_form, expand
from ..meanfield import isogap_bound, run_meanfield
from ..network import (NetworkConfig, config_input, preprocess_input, simulate_run,
                       worker_count, LayerConstants)
from .io import write_csv

log = logging.getLogger(__name__)


@dataclass
class SuiteOptions:
    seed: int = 0
    width: int | None = None
    runs: int | None = None
    depth: int | None = None
    batch: int | None = None
    out_dir: Path = Path("results")
    figures: bool = True


@dataclass
class SuiteResult:
    name: str
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def column(self, table: str, col: str, **where) -> np.ndarray:
        header, rows = self.tables[table]
        i = header.index(col)
        keep = [r for r in rows if all(r[header.index(k)] == v for k, v in where.items())]
        return np.array([float(r[i]) for r in keep])


def _grid_map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _opt(value, default):
    return default if value is None else value


@dataclass
class RunStats:
    """Per-layer mean and standard error over runs; NaN where a run overflowed."""

    iso_gap: np.ndarray
    gamma: np.ndarray
    norm_bias: np.ndarray
    runs: int

    @staticmethod
    def _mean_se(a):
        with np.errstate(invalid="ignore"):
            mean = a.mean(axis=0)
            if a.shape[0] > 1:
                se = a.std(axis=0, ddof=1) / math.sqrt(a.shape[0])
            else:
                se = np.zeros(a.shape[1])
        return mean, se

    def mean_se(self, what="iso_gap"):
        return self._mean_se(getattr(self, what))


def run_stats(cfg: NetworkConfig, X0=None, stop_on_overflow=False) -> RunStats:
    if X0 is None:
        X0 = config_input(cfg)
    consts = LayerConstants.resolve(cfg)
    shape = (cfg.runs, cfg.depth + 1)
    out = {k: np.full(shape, np.nan) for k in ("iso_gap", "gamma", "norm_bias")}
    for r in range(cfg.runs):
        traces, _ = simulate_run(cfg, X0, r, consts, stop_on_overflow=stop_on_overflow)
        for t in traces:
            out["iso_gap"][r, t.layer] = t.iso_gap
            out["gamma"][r, t.layer] = t.gamma
            out["norm_bias"][r, t.layer] = t.norm_bias
    return RunStats(runs=cfg.runs, **out)


def _input_iso(cfg: NetworkConfig) -> float:
    X, _ = preprocess_input(config_input(cfg))
    return linalg.iso(linalg.gram_from_columns(X))


def _bound_columns(iso0, b, n, depth):
    try:
        valid_from = isogap_bound(iso0, b, n, 0)[1]
    except BoundInapplicable:
        return [math.inf] * (depth + 1), [0] * (depth + 1), None
    bounds = [isogap_bound(iso0, b, n, ell)[0] for ell in range(depth + 1)]
    return bounds, [int(ell >= valid_from) for ell in range(depth + 1)], valid_from


def _jsonable(obj):
    """Plain JSON: NumPy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _finish(result: SuiteResult, opts: SuiteOptions, figure=None):
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tname, (header, rows) in result.tables.items():
        path = out / f"{tname}.csv"
        write_csv(path, header, rows)
        result.files.append(path)
    meta_path = out / f"{result.name}.meta.json"
    meta_path.write_text(json.dumps(_jsonable(result.meta), indent=2, sort_keys=True) + "\n")
    result.files.append(meta_path)
    if opts.figures and figure is not None:
        path = out / f"{result.name}.png"
        figure(path)
        result.files.append(path)
    return result


# ---------------------------------------------------------------------------

ISO_GAP_ACTIVATIONS = ("relu", "tanh", "sigmoid")


def suite_iso_gap_activation(opts: SuiteOptions | None = None, rho0: float = 0.9) -> SuiteResult:
    """Finite-width LN-MLP isometry gap per layer against the mean-field bound."""
    opts = opts or SuiteOptions()
    n, d = _opt(opts.batch, 10), _opt(opts.width, 1000)
    L, runs = _opt(opts.depth, 50), _opt(opts.runs, 10)
    cfgs = [NetworkConfig(width=d, batch=n, depth=L, activation=activation(a), seed=opts.seed,
                          runs=runs, input_mode="equicorrelated", rho0=rho0)
            for a in ISO_GAP_ACTIVATIONS]
    betas = [beta0(expand(c.activation)) for c in cfgs]
    iso0 = _input_iso(cfgs[0])

    stats = _grid_map(run_stats, cfgs)
    header = ["activation", "layer", "mean_iso_gap", "se_iso_gap", "mean_gamma", "bound",
              "bound_valid", "beta0"]
    rows, meta = [], {"batch": n, "width": d, "depth": L, "runs": runs, "seed": opts.seed,
                      "input": f"equicorrelated({rho0})", "iso0": iso0, "activations": {}}
    curves = {}
    for cfg, st, b in zip(cfgs, stats, betas):
        name = cfg.activation.name
        mean, se = st.mean_se()
        gmean, _ = st.mean_se("gamma")
        bounds, valid, valid_from = _bound_columns(iso0, b, n, L)
        for ell in range(L + 1):
            rows.append([name, ell, mean[ell], se[ell], gmean[ell], bounds[ell], valid[ell], b])
        meta["activations"][name] = {"beta0": b, "valid_from": valid_from}
        layers = list(range(L + 1))
        curves[name] = [(f"{name} (mean of {runs})", layers, list(mean), list(se), "-"),
                        ("bound", layers, bounds, None, "--")]
    result = SuiteResult("iso_gap_activation", {"iso_gap_activation": (header, rows)}, meta)

    def figure(path):
        from .plotting import figure_traces
        figure_traces(path, curves)

    return _finish(result, opts, figure)


HERMITE_BASIS = ("he1", "he2", "he3")
FIT_FLOOR = 1e-12


def _log_slope(values, window):
    idx = [i for i in window if values[i] > FIT_FLOOR and math.isfinite(values[i])]
    if len(idx) < 2:
        return math.nan, idx
    slope = np.polyfit(np.array(idx, dtype=float), np.log(np.array([values[i] for i in idx])), 1)[0]
    return float(slope), idx


def suite_hermite_basis(opts: SuiteOptions | None = None, rho0: float = 0.99) -> SuiteResult:
    """Hermite-basis activations: mean-field traces with fitted rates, plus finite-width runs.

    Two rates are fitted per activation. ``iso_gap_rate`` is the least-squares
    slope of ``log iso_gap`` over layers where the isometry-gap bound is asserted
    and the gap exceeds ``FIT_FLOOR``. ``gamma_rate`` is the slope of
    ``log gamma`` over layers with ``gamma >= 1`` (correlations of at least 1/2).
    The contraction guarantee is tightest in that regime.
    """
    opts = opts or SuiteOptions()
    n, d = _opt(opts.batch, 10), _opt(opts.width, 1000)
    L, runs = _opt(opts.depth, 50), _opt(opts.runs, 10)
    acts = [activation(a) for a in HERMITE_BASIS]
    cfgs = [NetworkConfig(width=d, batch=n, depth=L, activation=a, seed=opts.seed, runs=runs,
                          input_mode="equicorrelated", rho0=rho0) for a in acts]
    exps = [expand(a) for a in acts]
    G0 = linalg.equicorrelation(n, rho0)

    mf_header = ["activation", "layer", "gamma", "iso_gap", "gamma_bound"]
    mf_rows = []
    meta = {"batch": n, "width": d, "depth": L, "runs": runs, "seed": opts.seed, "rho0": rho0,
            "fit": {"iso_gap_window": "layers >= valid_from with iso_gap > 1e-12",
                    "gamma_window": "layers with gamma >= 1"},
            "activations": {}}
    mf_curves = []
    for a, e in zip(acts, exps):
        tr = run_meanfield(G0, e, L)
        g, gap = tr.column("gamma"), tr.column("iso_gap")
        for r in tr.records:
            mf_rows.append([a.name, r.layer, r.gamma, r.iso_gap, r.gamma_bound])
        b = tr.beta0
        start = tr.valid_from if tr.valid_from is not None else len(gap)
        iso_rate, iso_idx = _log_slope(gap, range(start, len(gap)))
        gamma_rate, g_idx = _log_slope(g, [i for i in range(len(g)) if g[i] >= 1.0])
        meta["activations"][a.name] = {
            "beta0": b, "log_beta0": math.log(b), "valid_from": tr.valid_from,
            "stopped_early": tr.stopped_early,
            "iso_gap_rate": -iso_rate, "iso_gap_window": iso_idx,
            "gamma_rate": -gamma_rate, "gamma_window": g_idx,
        }
        mf_curves.append((a.name, [r.layer for r in tr.records], list(gap), None, "-"))

    stats = _grid_map(run_stats, cfgs)
    nw_header = ["activation", "layer", "mean_iso_gap", "se_iso_gap"]
    nw_rows, nw_curves = [], []
    for a, st in zip(acts, stats):
        mean, se = st.mean_se()
        nw_rows.extend([a.name, ell, mean[ell], se[ell]] for ell in range(L + 1))
        nw_curves.append((a.name, list(range(L + 1)), list(mean), list(se), "-"))
    result = SuiteResult("hermite_basis", {"hermite_basis_meanfield": (mf_header, mf_rows),
                                           "hermite_basis_network": (nw_header, nw_rows)}, meta)

    def figure(path):
        from .plotting import figure_traces
        figure_traces(path, {"mean field": mf_curves, f"LN-MLP d={d}": nw_curves})

    return _finish(result, opts, figure)


GAIN_ACTIVATIONS = ("relu", "step", "sin", "exp", "tanh", "sigmoid", "selu", "leaky_relu:0.2")
GAINS = (0.25, 0.5, 1.0, 2.0, 5.0)
TANH_GAINS = (0.5, 1.0, 2.0, 5.0)


def suite_gain(opts: SuiteOptions | None = None, rho0: float = 0.9) -> SuiteResult:
    """Non-linearity strength against gain, and tanh LN-MLP isometry per gain."""
    opts = opts or SuiteOptions()
    n, d = _opt(opts.batch, 10), _opt(opts.width, 1000)
    L, runs = _opt(opts.depth, 50), _opt(opts.runs, 10)
    grid = [activation(a, g) for a in GAIN_ACTIVATIONS for g in GAINS]
    cfgs = [NetworkConfig(width=d, batch=n, depth=L, activation=activation("tanh", g),
                          seed=opts.seed, runs=runs, input_mode="equicorrelated", rho0=rho0)
            for g in TANH_GAINS]

    b_header = ["activation", "gain", "beta0_quadrature", "beta0_closed_form"]
    b_rows = []
    for a in grid:
        cf = beta0_closed_form(a)
        b_rows.append([a.name, a.gain, beta0(expand(a)), math.nan if cf is None else cf])

    stats = _grid_map(run_stats, cfgs)
    t_header = ["gain", "layer", "mean_iso_gap", "se_iso_gap", "beta0"]
    t_rows, curves = [], []
    for cfg, st in zip(cfgs, stats):
        b = beta0(expand(cfg.activation))
        mean, se = st.mean_se()
        t_rows.extend([cfg.activation.gain, ell, mean[ell], se[ell], b] for ell in range(L + 1))
        curves.append((f"gain {cfg.activation.gain:g}", list(range(L + 1)), list(mean), list(se),
                       "-"))
    meta = {"batch": n, "width": d, "depth": L, "runs": runs, "seed": opts.seed,
            "gains": list(GAINS), "tanh_gains": list(TANH_GAINS)}
    result = SuiteResult("gain", {"gain_beta0": (b_header, b_rows),
                                  "gain_tanh": (t_header, t_rows)}, meta)

    def figure(path):
        from .plotting import figure_traces
        beta_curves = []
        for name in GAIN_ACTIVATIONS:
            xs = [r[1] for r in b_rows if r[0] == activation(name).name]
            ys = [r[2] for r in b_rows if r[0] == activation(name).name]
            beta_curves.append((activation(name).name, xs, ys, None, "o-"))
        figure_traces(path, {"beta0 vs gain": beta_curves, "tanh LN-MLP": curves}, logy=False)

    return _finish(result, opts, figure)


ABLATION_ACTIVATIONS = ("relu", "tanh", "sigmoid", "exp")
ABLATION_CENTERINGS = ("none", "layer_mean", "mean_field_c0")
ABLATION_PROJECTIONS = ("none", "sphere_ln", "mean_field_scale")


def suite_ablations(opts: SuiteOptions | None = None, rho0: float = 0.9) -> SuiteResult:
    """Centering x projection grid; overflowing runs leave NaN rows behind."""
    opts = opts or SuiteOptions()
    n, d = _opt(opts.batch, 10), _opt(opts.width, 1000)
    L, runs = _opt(opts.depth, 30), _opt(opts.runs, 10)
    cfgs = [NetworkConfig(width=d, batch=n, depth=L, activation=activation(a), centering=c,
                          projection=p, seed=opts.seed, runs=runs, input_mode="equicorrelated",
                          rho0=rho0)
            for a in ABLATION_ACTIVATIONS for c in ABLATION_CENTERINGS
            for p in ABLATION_PROJECTIONS]
    for cfg in cfgs:
        LayerConstants.resolve(cfg)
    X0 = config_input(cfgs[0])
    stats = _grid_map(lambda c: run_stats(c, X0, stop_on_overflow=True), cfgs)
    header = ["activation", "centering", "projection", "layer", "mean_iso_gap", "se_iso_gap",
              "mean_norm_bias", "completed_runs"]
    rows = []
    panels = {}
    for cfg, st in zip(cfgs, stats):
        mean, se = st.mean_se()
        nb, _ = st.mean_se("norm_bias")
        done = np.sum(np.isfinite(st.iso_gap) | np.isinf(st.iso_gap), axis=0)
        name = cfg.activation.name
        for ell in range(L + 1):
            rows.append([name, cfg.centering, cfg.projection, ell, mean[ell], se[ell], nb[ell],
                         int(done[ell])])
        panels.setdefault(name, []).append(
            (f"{cfg.centering}/{cfg.projection}", list(range(L + 1)), list(mean), None, "-"))
        if done[-1] < runs:
            log.warning("%s %s/%s: %d of %d runs overflowed", name, cfg.centering,
                        cfg.projection, runs - done[-1], runs)
    meta = {"batch": n, "width": d, "depth": L, "runs": runs, "seed": opts.seed,
            "input": f"equicorrelated({rho0})"}
    result = SuiteResult("ablations", {"ablations": (header, rows)}, meta)

    def figure(path):
        from .plotting import figure_traces
        figure_traces(path, panels)

    return _finish(result, opts, figure)


SUITES = {
    "iso_gap_activation": suite_iso_gap_activation,
    "hermite_basis": suite_hermite_basis,
    "gain": suite_gain,
    "ablations": suite_ablations,
}


def run_suite(name: str, opts: SuiteOptions | None = None) -> SuiteResult:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return fn(opts)
