"""``isogauge`` command line.

Exit status: 0 on success, 1 when a verification battery fails, 2 on usage,
configuration or input errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .. import linalg
from ..errors import IsogaugeError
from ..hermite import (DEFAULT_DEGREE, DEFAULT_QUAD_ORDER, activation, beta0,
                       beta0_closed_form, expand)
from ..meanfield import MeanFieldTrace, run_meanfield
from ..network import parse_config, run_network
from .io import csv_text, format_value

log = logging.getLogger("isogauge")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_hermite_coeffs(args):
    e = expand(activation(args.activation, args.gain), args.max_degree, args.quad_order)
    if not e.converged:
        log.warning("tail fraction %.3g exceeds tolerance; raise --max-degree for a tighter "
                    "truncation", e.tail_fraction)
    _emit(csv_text(["k", "c_k"], enumerate(e.coeffs)), args.out)
    return EXIT_OK


def cmd_hermite_beta0(args):
    act = activation(args.activation, args.gain)
    closed = beta0_closed_form(act)
    if closed is not None and not args.quadrature:
        value, source = closed, "closed_form"
    else:
        value, source = beta0(expand(act)), "quadrature"
    print(f"beta0={format_value(value)} source={source}")
    return EXIT_OK


def cmd_meanfield_run(args):
    if args.gram_file:
        G0 = linalg.load_matrix_csv(args.gram_file, symmetric=True)
    else:
        G0 = linalg.equicorrelation(args.n, args.rho0)
    tr = run_meanfield(G0, expand(activation(args.activation, args.gain)), args.depth)
    if tr.stopped_early:
        log.info("gamma underflowed at layer %d; later layers are exact fixed points",
                 tr.records[-1].layer)
    _emit(csv_text(MeanFieldTrace.CSV_HEADER, tr.rows()), args.out)
    return EXIT_OK


def cmd_simulate(args):
    cfg = parse_config(Path(args.config).read_text())
    traces = run_network(cfg)
    rows = [(t.run, t.layer, t.iso_gap, t.gamma, t.norm_bias) for t in traces]
    _emit(csv_text(["run", "layer", "iso_gap", "gamma", "norm_bias"], rows), args.out)
    return EXIT_OK


def cmd_suite(args):
    from .suites import SuiteOptions, run_suite

    out_dir = Path(args.out_dir) if args.out_dir else Path("results") / args.name
    opts = SuiteOptions(seed=args.seed, width=args.width, runs=args.runs, depth=args.depth,
                        batch=args.batch, out_dir=out_dir, figures=not args.no_figures)
    result = run_suite(args.name, opts)
    for path in result.files:
        print(path)
    return EXIT_OK


def cmd_verify(args):
    from .verify import verify_all

    reports = verify_all(args.trials, args.seed)
    for r in reports:
        print(r.line())
    failed = [r.name for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} batteries passed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_plot(args):
    from .plotting import emit_svg

    series = [s.strip() for s in args.series.split(",")] if args.series else []
    svg = emit_svg(args.input, series, logy=args.logy, x=args.x, group=args.group,
                   title=args.title)
    Path(args.out).write_text(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .suites import SUITES

    p = _Parser(prog="isogauge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    h = sub.add_parser("hermite", help="Hermite expansion and non-linearity strength")
    hsub = h.add_subparsers(dest="hermite_command", required=True, parser_class=_Parser)
    hc = hsub.add_parser("coeffs", help="CSV of normalized Hermite coefficients")
    hc.add_argument("--activation", required=True)
    hc.add_argument("--gain", type=float, default=1.0)
    hc.add_argument("--max-degree", type=int, default=DEFAULT_DEGREE)
    hc.add_argument("--quad-order", type=int, default=DEFAULT_QUAD_ORDER)
    hc.add_argument("--out")
    hc.set_defaults(fn=cmd_hermite_coeffs)
    hb = hsub.add_parser("beta0", help="non-linearity strength")
    hb.add_argument("--activation", required=True)
    hb.add_argument("--gain", type=float, default=1.0)
    hb.add_argument("--quadrature", action="store_true",
                    help="always integrate, even when a closed form exists")
    hb.set_defaults(fn=cmd_hermite_beta0)

    m = sub.add_parser("meanfield", help="infinite-width Gram recursion")
    msub = m.add_subparsers(dest="meanfield_command", required=True, parser_class=_Parser)
    mr = msub.add_parser("run")
    mr.add_argument("--activation", required=True)
    mr.add_argument("--gain", type=float, default=1.0)
    mr.add_argument("--n", type=int, default=10)
    mr.add_argument("--depth", type=int, required=True)
    start = mr.add_mutually_exclusive_group(required=True)
    start.add_argument("--rho0", type=float)
    start.add_argument("--gram-file")
    mr.add_argument("--out")
    mr.set_defaults(fn=cmd_meanfield_run)

    s = sub.add_parser("simulate", help="finite-width MLP from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    su = sub.add_parser("suite", help="run an experiment suite")
    su.add_argument("name", choices=sorted(SUITES))
    su.add_argument("--seed", type=int, default=0)
    su.add_argument("--width", type=int)
    su.add_argument("--runs", type=int)
    su.add_argument("--depth", type=int)
    su.add_argument("--batch", type=int)
    su.add_argument("--out-dir")
    su.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    su.set_defaults(fn=cmd_suite)

    v = sub.add_parser("verify", help="randomized invariant batteries")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=7)
    v.set_defaults(fn=cmd_verify)

    pl = sub.add_parser("plot", help="static SVG line chart from a CSV")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--series", required=True, help="comma-separated column names")
    pl.add_argument("--logy", action="store_true")
    pl.add_argument("--x")
    pl.add_argument("--group", help="draw one line per value of this column")
    pl.add_argument("--title")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.fn(args)
    except (IsogaugeError, OSError) as exc:
        print(f"isogauge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
