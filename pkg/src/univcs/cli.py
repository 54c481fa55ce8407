"""Command-line entry point.

Settings come from an optional INI-style config file (``--config``) whose
``[experiment]`` section holds the sweep keys; ``[ensemble_options]`` and
``[solver_options]`` are passed through to the builders and solvers.  Flags
override the file.  Example::

    [experiment]
    ensemble = dct
    mode = bayes
    n = 500
    alpha_grid = 20          ; an integer means that many uniform cells
    rho_grid = 0.2, 0.4, 0.6
    runs = 10
    seed = 1
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys

from . import harness
from .ensembles import ENSEMBLES
from .phase_lines import METHODS, compute_phase_line, read_lines_csv, write_lines_csv
from .render import render_heatmap

PRESETS = {
    "desk": {"n": "500", "alpha_grid": "20", "rho_grid": "20", "runs": "10"},
    "full": {"n": "1000", "alpha_grid": "50", "rho_grid": "50", "runs": "50"},
}
CONFIG_ERROR = 2


class ConfigError(Exception):
    pass


def parse_grid(text):
    text = str(text).strip()
    if "," not in text:
        try:
            return tuple(harness.default_grid(int(text)))
        except ValueError:
            pass
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def load_settings(args):
    settings = dict(PRESETS[args.preset])
    ens_opts, solver_opts = {}, {}
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if parser.has_section("experiment"):
            settings.update(parser["experiment"])
        if parser.has_section("ensemble_options"):
            ens_opts = {k: _coerce(v) for k, v in parser["ensemble_options"].items()}
        if parser.has_section("solver_options"):
            solver_opts = {k: _coerce(v) for k, v in parser["solver_options"].items()}
    for key in ("n", "seed", "solver", "mode", "ensemble", "runs"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = str(value)
    return settings, ens_opts, solver_opts


def build_config(args, **overrides) -> harness.SweepConfig:
    settings, ens_opts, solver_opts = load_settings(args)
    known = {"ensemble", "solver", "mode", "n", "alpha_grid", "rho_grid", "runs",
             "success_mse", "seed", "out"}
    unknown = set(settings) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        kw = dict(
            ensemble=settings.get("ensemble", "gaussian"),
            solver=settings.get("solver", "vamp"),
            mode=settings.get("mode", "bayes"),
            n=int(settings["n"]),
            alpha_grid=parse_grid(settings["alpha_grid"]),
            rho_grid=parse_grid(settings["rho_grid"]),
            runs=int(settings["runs"]),
            success_mse=float(settings.get("success_mse", harness.SUCCESS_MSE)),
            base_seed=int(settings.get("seed", 0)),
            ensemble_options=ens_opts,
            solver_options=solver_opts,
        )
        kw.update(overrides)
        return harness.SweepConfig(**kw)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_sweep(args):
    cfg = build_config(args)
    grid = harness.sweep(cfg, workers=args.workers)
    harness.write_sweep_csv(grid, args.out)
    for rho, a in harness.extract_boundary(grid):
        print(f"rho={rho:.4g} alpha_boundary={a:.4g}")


def cmd_mse_curve(args):
    rhos = parse_grid(args.rhos)
    alphas = parse_grid(args.alphas)
    cfg = build_config(args, rho_grid=rhos, alpha_grid=alphas)
    ensembles = [e.strip() for e in args.ensembles.split(",") if e.strip()]
    bad = [e for e in ensembles if e not in ENSEMBLES]
    if bad:
        raise ConfigError(f"unknown ensembles {bad}")
    records = harness.mse_curve(cfg, ensembles, workers=args.workers)
    harness.write_curve_csv(records, args.out)


def cmd_lines(args):
    rhos = parse_grid(args.rhos)
    methods = METHODS if args.method == "both" else (args.method,)
    lines = [compute_phase_line(m, rhos) for m in methods]
    write_lines_csv(lines, args.out)


def cmd_compare(args):
    cfg = build_config(args)
    report = harness.compare_amp_vamp(cfg, workers=args.workers)
    print(json.dumps({"pairs": len(report.pairs), "agreement": report.agreement(),
                      "log_mse_correlation": report.mse_correlation()}))


def cmd_solve(args):
    cfg = build_config(args, alpha_grid=(args.alpha,), rho_grid=(args.rho,), runs=1)
    rec = harness.run_once(cfg, args.alpha, args.rho, harness.run_seeds(cfg.base_seed, 0, 0, 0))
    print(json.dumps({"mse": rec.mse, "iters": rec.iters, "status": rec.status, "error": rec.error}))


def cmd_render(args):
    try:
        grid = harness.read_sweep_csv(args.csv)
        line = None
        if args.lines:
            found = [ln for ln in read_lines_csv(args.lines) if ln.method == args.method]
            line = found[0] if found else None
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    render_heatmap(grid, args.out, line=line, title=args.title)


def _common(p, out_default):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--solver", choices=harness.SOLVERS)
    p.add_argument("--mode", choices=harness.MODES)
    p.add_argument("--ensemble", choices=ENSEMBLES)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=out_default)


def make_parser():
    parser = argparse.ArgumentParser(prog="univcs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="phase-diagram sweep to CSV")
    _common(p, "sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mse-curve", help="MSE against alpha at fixed rho for several ensembles")
    _common(p, "mse_curve.csv")
    p.add_argument("--ensembles", default="gaussian,dct,hadamard,rfm-relu,rfm-sign,rfm-tanh")
    p.add_argument("--rhos", default="0.25,0.5,0.75")
    p.add_argument("--alphas", default="20")
    p.set_defaults(func=cmd_mse_curve)

    p = sub.add_parser("lines", help="state-evolution transition lines to CSV")
    p.add_argument("--method", choices=METHODS + ("both",), default="both")
    p.add_argument("--rhos", default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95")
    p.add_argument("--out", default="lines.csv")
    p.set_defaults(func=cmd_lines)

    p = sub.add_parser("compare", help="paired AMP (whitened) and VAMP runs")
    _common(p, "compare.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("solve", help="solve one random instance")
    _common(p, "-")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("render", help="SVG heatmap from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--lines", help="lines CSV to overlay")
    p.add_argument("--method", choices=METHODS, default="BayesHard")
    p.add_argument("--title", default="")
    p.add_argument("--out", default="sweep.svg")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
