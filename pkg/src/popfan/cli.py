"""Command line front end.

    popfan --config run.cfg --out results run --series density.csv --points ccm.csv

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
5 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from popfan import __version__
from popfan.config import load_config
from popfan.errors import ConfigError, PopfanError
from popfan.pipeline import Pipeline, write_outputs


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="run configuration file")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory")
    parser.add_argument("--seed", metavar="U64", type=int, default=default, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popfan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"popfan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    common.add_argument("--series", metavar="CSV", help="year,population or year,density file")
    common.add_argument("--points", metavar="CSV", help="year,forecast file of external point forecasts")
    common.add_argument("--no-png", action="store_true", help="skip the matplotlib raster fan chart")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit the ARIMA model and dump it")
    sub.add_parser("forecast", parents=[common], help="fit and forecast density bands")
    sub.add_parser("translate", parents=[common], help="apply relative widths to point forecasts")
    run = sub.add_parser("run", parents=[common], help="all stages with report and fan chart")
    run.add_argument("--validate", action="store_true", help="also run the coverage simulation")
    sub.add_parser("validate", parents=[common], help="Monte Carlo coverage of analytic intervals")
    return parser


def execute(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError("--config is required")
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed & ((1 << 64) - 1))
    pipe = Pipeline(config, args.series, args.points)
    cmd = args.command
    pipe.fit()
    if cmd in ("forecast", "translate", "run"):
        pipe.forecast()
    if cmd in ("translate", "run"):
        pipe.translate()
    if cmd == "validate" or (cmd == "run" and (args.validate or config.validate)):
        pipe.validate()

    report = pipe.report
    out_dir = args.out or "."
    if cmd == "fit":
        report.bands = []
    written = write_outputs(
        report, out_dir, charts=cmd in ("forecast", "run"), png=not args.no_png and cmd == "run"
    )
    fit = report.fit
    print(f"ARIMA{fit.order} ar={list(fit.ar)} ma={list(fit.ma)} rmse={fit.rmse:.7g}")
    if report.diagnostics is not None:
        lb = report.diagnostics.ljung_box
        print(f"Ljung-Box Q={lb.q_stat:.4f} p={lb.p_value:.4g} adequate={report.diagnostics.adequate}")
    for (lv, off), c in sorted(report.coverage.items()):
        print(f"coverage level={lv:g} offset={off}: min={min(c.coverage):.4f} max={max(c.coverage):.4f}")
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return execute(args)
    except PopfanError as exc:
        print(f"error: {exc.tagged()}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
