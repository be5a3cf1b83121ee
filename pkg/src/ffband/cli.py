"""Command-line interface: ``ffband {band,pvalue,simulate,tau}``.

Exit codes: 0 success, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ffband.bands import METHODS, mean_band, two_sample_band
from ffband.errors import InputError, SolverError
from ffband.estimators import diagonal_info, frag_mean, mean_estimate, two_sample_pooled
from ffband.io import read_curves_csv, read_function_csv, write_columns_csv
from ffband.simulation import ScenarioConfig, run_simulation
from ffband.special import EllipticalFamily
from ffband.threshold import equidistant_knots, pvalue_function

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _sided(args) -> str:
    return args.one_sided or "two"


def band_svg(band, width: int = 640, height: int = 360) -> str:
    """Plain SVG with the centre line and the finite band limits."""
    t = band.grid.points
    ys = [band.center]
    ys += [y for y in (band.lower, band.upper) if np.all(np.isfinite(y))]
    lo, hi = min(float(np.min(y)) for y in ys), max(float(np.max(y)) for y in ys)
    span = hi - lo or 1.0
    pad = 20

    def path(y):
        px = pad + t * (width - 2 * pad)
        py = height - pad - (y - lo) / span * (height - 2 * pad)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<polyline fill="none" stroke="black" points="{path(band.center)}"/>',
    ]
    for y in ys[1:]:
        lines.append(f'<polyline fill="none" stroke="steelblue" points="{path(y)}"/>')
    lines.append("</svg>\n")
    return "\n".join(lines)


def cmd_band(args):
    sample = read_curves_csv(args.curves)
    sided = _sided(args)
    if args.two_sample:
        other = read_curves_csv(args.two_sample)
        band = two_sample_band(sample, other, args.method, args.alpha, args.t0, args.knots, sided=sided)
    else:
        band = mean_band(sample, args.method, args.alpha, args.t0, args.knots, sided=sided)
    _emit(band.to_csv(), args.out)
    if args.json:
        Path(args.json).write_text(band.to_json(), encoding="utf-8")
    if args.svg:
        Path(args.svg).write_text(band_svg(band), encoding="utf-8")


def cmd_pvalue(args):
    sample = read_curves_csv(args.curves)
    if args.two_sample:
        other = read_curves_csv(args.two_sample)
        center, diag, _ = two_sample_pooled(sample, other)
        nu = float(np.min(sample.local_counts + other.local_counts)) - 2.0
    else:
        diag = diagonal_info(sample)
        center = mean_estimate(sample) if sample.fully_observed else frag_mean(sample)
        nu = float(np.min(diag.n_local)) - 1.0
    theta0 = read_function_csv(args.theta0, sample.grid)
    family = EllipticalFamily.student_t(nu) if args.method.endswith("-t") else EllipticalFamily.gaussian()
    res = pvalue_function(
        center,
        theta0,
        diag,
        family,
        args.t0,
        equidistant_knots(args.knots, args.t0),
        _sided(args),
        "kr" if args.method.startswith("kr") else "fair",
    )
    buf = ["t,p"] + [f"{t!r},{p!r}" for t, p in zip(sample.grid.points.tolist(), res.p.tolist())]
    _emit("\n".join(buf) + "\n", args.out)
    print(f"global p-value: {res.global_p:.6g}", file=sys.stderr)


def cmd_simulate(args):
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror}") from None
    config = ScenarioConfig.from_json(text)
    over = {}
    if args.reps is not None:
        over["reps"] = args.reps
    if args.seed is not None:
        over["seed"] = args.seed
    if over:
        config = ScenarioConfig(**{**config.to_dict(), **over})
    result = run_simulation(config, threads=args.threads)
    _emit(result.to_csv(), args.out)
    for name, res in result.methods.items():
        print(f"{name}: {res.reps} reps, {res.failures} failures", file=sys.stderr)


def cmd_tau(args):
    sample = read_curves_csv(args.curves)
    diag = diagonal_info(sample, args.tau_method)
    cols = {"t": sample.grid.points.tolist(), "tau": np.asarray(diag.tau).tolist()}
    if args.out in (None, "-"):
        sys.stdout.write("t,tau\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(*cols.values())))
    else:
        write_columns_csv(args.out, cols)


def _common(p):
    p.add_argument("curves", help="CSV with header t,curve_1,...")
    p.add_argument("--method", choices=METHODS, default="ff-t")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--t0", type=float, default=0.0, help="anchor of the fair threshold")
    p.add_argument("--knots", type=int, default=9, help="number of equidistant knot cells")
    p.add_argument("--one-sided", nargs="?", const="upper", choices=("upper", "lower"), default=None)
    p.add_argument("--two-sample", metavar="CSV", help="second sample; band for the mean difference")
    p.add_argument("--out", "-o", help="output CSV (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffband", description="Fast and fair simultaneous confidence bands.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("band", help="simultaneous band for the mean (or a mean difference)")
    _common(p)
    p.add_argument("--json", help="also write full metadata as JSON")
    p.add_argument("--svg", help="also write a plain SVG plot")
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("pvalue", help="pointwise and global p-values for a hypothesised mean")
    _common(p)
    p.add_argument("--theta0", required=True, help="CSV t,theta0 on the same grid")
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("simulate", help="Monte Carlo size/power/width table from a JSON scenario")
    p.add_argument("config")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker processes (FFBAND_THREADS overrides)")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tau", help="estimated roughness function")
    p.add_argument("curves")
    p.add_argument("--tau-method", choices=("auto", "deriv", "diag", "mean"), default="auto")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_tau)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"ffband: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"ffband: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
