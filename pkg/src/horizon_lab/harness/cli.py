"""Command-line entry point ``horizon-lab``.

Exit codes: 0 on success, 1 for invalid input (bad config, bad arguments,
malformed files), 2 when a run fails (training divergence, I/O errors).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..apt_market import read_panel_csv, simulate, write_surface_csv
from ..errors import ConfigError
from ..metrics import TOP_FRACTION, compute_report
from ..theory import TheoryInputs
from . import reporting
from .config import ExperimentConfig, build_config, load_config
from .experiments import (
    run_baseline_comparison,
    run_bilevel_experiment,
    run_decomposition_check,
    run_sweep,
)

logger = logging.getLogger("horizon_lab")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config (defaults to the Custom preset)")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir in the config)")
    p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="horizon-lab", description="Proxy-horizon experiments on synthetic factor markets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write synthetic return surfaces as CSV")
    _common(p)
    p.add_argument("--exposures", action="store_true", help="also write the s_1..s_d exposure columns")

    theory = sub.add_parser("theory", help="closed-form theory")
    tsub = theory.add_subparsers(dest="theory_command", required=True, parser_class=_Parser)
    p = tsub.add_parser("curve", help="J, its log decomposition and the sign margin over a horizon grid")
    _common(p)
    p.add_argument("--grid-step", type=float, default=1.0)

    for name, text in (
        ("sweep", "train one model per candidate horizon and test on the target"),
        ("decompose", "final IC versus proxy IC times label alignment"),
        ("bilevel", "adaptive horizon weights versus target-horizon training"),
        ("compare", "bi-level run followed by the averaging and multi-task baselines"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name in ("bilevel", "compare"):
            p.add_argument("--warmup-epochs", type=int, help="override bilevel.warmup_epochs")

    p = sub.add_parser("metrics", help="evaluate predictions against a panel CSV")
    _common(p)
    p.add_argument("--panel", type=Path, required=True, help="panel CSV (may carry a pred column)")
    p.add_argument("--pred", type=Path, help="CSV with period,asset,pred (if the panel has no pred column)")
    p.add_argument("--horizon", type=int, help="evaluation horizon (default: the largest in the panel)")
    p.add_argument("--top-fraction", type=float, default=TOP_FRACTION)
    return parser


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config is not None else build_config({})
    if args.seed is not None:
        config = config.with_seeds([args.seed])
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return config


def _out(args, config: ExperimentConfig) -> Path:
    return Path(args.out) if args.out is not None else Path(config.output_dir)


def cmd_generate(args) -> list[Path]:
    config = _config(args)
    if not config.market.synthetic:
        raise ConfigError("generate needs a synthetic market (market.panel_file is set)")
    out = _out(args, config)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in config.seeds:
        surface = simulate(config.market.params(seed), config.split.total_periods, seed)
        path = out / f"surface_seed{seed}.csv"
        write_surface_csv(surface, path, include_exposures=args.exposures)
        paths.append(path)
    return paths


def cmd_theory_curve(args) -> list[Path]:
    config = _config(args)
    if not config.market.synthetic:
        raise ConfigError("theory curve needs a synthetic market")
    step = args.grid_step
    if not 0 < step <= 1:
        raise ConfigError("--grid-step must lie in (0, 1]")
    inputs = TheoryInputs.from_market(config.market.params(config.seeds[0]), config.n_train_samples)
    n = int(np.floor(config.market.delta_max / step + 1e-9))
    grid = np.arange(1, n + 1) * step
    return [reporting.write_theory_curve(inputs, grid, _out(args, config) / "theory_curve.csv")]


def cmd_sweep(args) -> list[Path]:
    config = _config(args)
    out = _out(args, config)
    result = run_sweep(config, args.jobs, on_partial=lambda recs: reporting.write_partial_sweep(recs, out))
    return reporting.write_sweep(result, out, config)


def cmd_decompose(args) -> list[Path]:
    config = _config(args)
    out = _out(args, config)
    rows, sweep = run_decomposition_check(config, args.jobs)
    return reporting.write_sweep(sweep, out, config) + reporting.write_decomposition(rows, out, config)


def cmd_bilevel(args) -> list[Path]:
    config = _config(args)
    result = run_bilevel_experiment(config, args.jobs, args.warmup_epochs)
    return reporting.write_bilevel(result, _out(args, config), config)


def cmd_compare(args) -> list[Path]:
    config = _config(args)
    out = _out(args, config)
    bilevel = run_bilevel_experiment(config, args.jobs, args.warmup_epochs)
    comparison = run_baseline_comparison(config, bilevel, args.jobs)
    return reporting.write_bilevel(bilevel, out, config) + reporting.write_comparison(comparison, out, config)


def _read_predictions(path: Path, periods: np.ndarray, assets: np.ndarray) -> np.ndarray:
    with path.open(encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    missing = [c for c in ("period", "asset", "pred") if c not in header]
    if missing:
        raise ConfigError(f"{path}: missing column(s) {missing}")
    cols = [header.index(c) for c in ("period", "asset", "pred")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, usecols=cols, ndmin=2)
    p_ids, a_ids = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64)
    if not (np.array_equal(np.unique(p_ids), periods) and np.array_equal(np.unique(a_ids), assets)
            and data.shape[0] == periods.size * assets.size):
        raise ConfigError(f"{path}: predictions do not cover the panel's (period, asset) grid exactly")
    order = np.lexsort((a_ids, p_ids))
    return data[order, 2].reshape(periods.size, assets.size)


def cmd_metrics(args) -> list[Path]:
    if not args.panel.is_file():
        raise ConfigError(f"panel file not found: {args.panel}")
    with args.panel.open(encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    if "pred" in header:
        surface, extras = read_panel_csv(args.panel, extra_columns=("pred",))
        pred = extras["pred"]
    else:
        if args.pred is None:
            raise ConfigError("the panel has no pred column; pass --pred")
        if not args.pred.is_file():
            raise ConfigError(f"prediction file not found: {args.pred}")
        surface, _ = read_panel_csv(args.panel)
        ids = np.loadtxt(args.panel, delimiter=",", skiprows=1, usecols=[header.index("period"), header.index("asset")],
                         ndmin=2).astype(np.int64)
        pred = _read_predictions(args.pred, np.unique(ids[:, 0]), np.unique(ids[:, 1]))
    horizon = surface.delta_max if args.horizon is None else args.horizon
    report = compute_report(pred, surface.horizon(horizon), args.top_fraction)
    out = Path(args.out) if args.out is not None else Path(".")
    return [reporting.write_metrics_report(report, out / "metrics.csv")]


COMMANDS = {
    "generate": cmd_generate,
    "sweep": cmd_sweep,
    "decompose": cmd_decompose,
    "bilevel": cmd_bilevel,
    "compare": cmd_compare,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handler = cmd_theory_curve if args.command == "theory" else COMMANDS[args.command]
    try:
        paths = handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 -- every other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
