"""CSV and JSON persistence of experiment results.

File layout written into an output directory:

* ``sweep.csv`` -- ``delta,seed,final_ic,proxy_ic,alignment,rank_ic,icir,rank_icir,top_ret,sharpe``
* ``sweep_curve.csv`` -- ``delta,mean_ic,smoothed_ic,theory_sqrt_j`` (plot-ready)
* ``decomposition.csv`` -- ``delta,final_ic,proxy_ic,alignment,product,gap``
* ``bilevel.csv`` -- ``seed,argmax_horizon,adaptive_ic,standard_ic``
* ``lambda_trajectory_seed<S>.csv`` -- ``step,H,lambda_1,...,lambda_K``
* ``comparison.csv`` -- ``method,seed,horizons,ic,icir,rank_ic,rank_icir,top_ret,sharpe``
* ``theory_curve.csv`` -- ``delta,J,info_gain,noise_penalty,sign_margin``
* ``metrics.csv`` -- ``ic,icir,rank_ic,rank_icir,top_ret,sharpe``
* ``<name>.json`` -- structured report next to each table

Floats are written with ``repr`` so they round-trip exactly; NaN is written as
``nan`` in CSV and ``null`` in JSON.  JSON key order is fixed by the code and
the only field that changes between identical runs is ``generated_at``.
"""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..metrics import MetricsReport
from ..theory import TheoryInputs, closed_form_J, log_decomposition, sign_margin
from .experiments import (
    DECOMPOSITION_COLUMNS,
    SWEEP_COLUMNS,
    BilevelResult,
    ComparisonResult,
    DecompositionRow,
    SweepRecord,
    SweepResult,
)

TIMESTAMP_KEY = "generated_at"
METRICS_COLUMNS = ("ic", "icir", "rank_ic", "rank_icir", "top_ret", "sharpe")
COMPARISON_COLUMNS = ("method", "seed", "horizons") + METRICS_COLUMNS
THEORY_COLUMNS = ("delta", "J", "info_gain", "noise_penalty", "sign_margin")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    """Rows as dicts; numeric fields parsed to int or float."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [{k: _parse(v) for k, v in row.items()} for row in rows]


def _parse(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    doc = {TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds")}
    doc.update(_clean(payload))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def report_dict(report: MetricsReport) -> dict:
    return dict(zip(METRICS_COLUMNS, _metrics_row(report)), n_periods=report.n_periods)


def _metrics_row(r: MetricsReport) -> tuple:
    return (r.ic_mean, r.icir, r.rank_ic_mean, r.rank_icir, r.top_return_mean, r.sharpe_annualized)


# --------------------------------------------------------------------------- sweep


def write_sweep(result: SweepResult, out_dir, config=None) -> list[Path]:
    out = Path(out_dir)
    theory = result.theory_curve if result.theory_curve is not None else [float("nan")] * len(result.candidates)
    paths = [
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, (r.row() for r in result.records)),
        write_csv(out / "sweep_curve.csv", ("delta", "mean_ic", "smoothed_ic", "theory_sqrt_j"),
                  zip(result.candidates, result.mean_curve, result.smoothed_curve, theory)),
    ]
    paths.append(write_json(out / "sweep.json", {
        "candidates": result.candidates,
        "seeds": result.seeds,
        "target": result.target,
        "bandwidth": result.bandwidth,
        "smoothed_argmax": result.argmax,
        "mean_curve": result.mean_curve,
        "smoothed_curve": result.smoothed_curve,
        "theory_sqrt_j": result.theory_curve,
        "config": config.to_dict() if config is not None else None,
    }))
    return paths


def write_partial_sweep(records, out_dir) -> Path:
    return write_csv(Path(out_dir) / "sweep_partial.csv", SWEEP_COLUMNS, (r.row() for r in records))


def read_sweep_csv(path) -> list[SweepRecord]:
    """Inverse of the ``sweep.csv`` writer."""
    out = []
    for row in read_csv(path):
        report = MetricsReport(
            float(row["final_ic"]), float(row["icir"]), float(row["rank_ic"]), float(row["rank_icir"]),
            float(row["top_ret"]), float(row["sharpe"]), 0,
        )
        out.append(SweepRecord(int(row["delta"]), int(row["seed"]), float(row["final_ic"]),
                               float(row["proxy_ic"]), float(row["alignment"]), report))
    return out


# --------------------------------------------------------------------------- decomposition


def write_decomposition(rows, out_dir, config=None) -> list[Path]:
    out = Path(out_dir)
    rows = list(rows)
    return [
        write_csv(out / "decomposition.csv", DECOMPOSITION_COLUMNS, (r.row() for r in rows)),
        write_json(out / "decomposition.json", {
            "rows": [dict(zip(DECOMPOSITION_COLUMNS, r.row())) for r in rows],
            "mean_gap": float(np.mean([r.gap for r in rows])),
            "max_gap": float(np.max([r.gap for r in rows])),
            "config": config.to_dict() if config is not None else None,
        }),
    ]


# --------------------------------------------------------------------------- bi-level


def trajectory_rows(trajectory):
    for step, entropy, weights in trajectory:
        yield (int(step), float(entropy), *[float(w) for w in weights])


def write_bilevel(result: BilevelResult, out_dir, config=None) -> list[Path]:
    out = Path(out_dir)
    k = len(result.candidates)
    header = ("step", "H") + tuple(f"lambda_{j}" for j in range(1, k + 1))
    paths = [
        write_csv(out / f"lambda_trajectory_seed{s.seed}.csv", header, trajectory_rows(s.trajectory))
        for s in result.seeds
    ]
    paths.append(write_csv(out / "bilevel.csv", ("seed", "argmax_horizon", "adaptive_ic", "standard_ic"),
                           ((s.seed, s.argmax_horizon, s.adaptive.ic_mean, s.standard.ic_mean) for s in result.seeds)))
    paths.append(write_json(out / "bilevel.json", {
        "candidates": result.candidates,
        "target": result.target,
        "warmup_epochs": result.warmup_epochs,
        "mean_ic_adaptive": result.mean_ic_adaptive,
        "mean_ic_standard": result.mean_ic_standard,
        "seeds": [
            {
                "seed": s.seed,
                "argmax_horizon": s.argmax_horizon,
                "lambda_final": s.weights,
                "validation_curve": s.history.get("val_loss", []),
                "best_epoch": s.history.get("best_epoch"),
                "adaptive": report_dict(s.adaptive),
                "standard": report_dict(s.standard),
            }
            for s in result.seeds
        ],
        "config": config.to_dict() if config is not None else None,
    }))
    return paths


# --------------------------------------------------------------------------- comparison


def write_comparison(result: ComparisonResult, out_dir, config=None) -> list[Path]:
    out = Path(out_dir)
    rows = ((r.method, r.seed, ";".join(str(h) for h in r.horizons), *_metrics_row(r.report)) for r in result.rows)
    return [
        write_csv(out / "comparison.csv", COMPARISON_COLUMNS, rows),
        write_json(out / "comparison.json", {
            "methods": result.methods,
            "mean_ic": {m: result.mean_ic(m) for m in result.methods},
            "notes": result.notes,
            "config": config.to_dict() if config is not None else None,
        }),
    ]


# --------------------------------------------------------------------------- theory and metrics


def theory_curve_rows(inputs: TheoryInputs, grid) -> list[tuple]:
    grid = np.asarray(grid, dtype=float)
    J = np.atleast_1d(closed_form_J(inputs, grid))
    gain, penalty = (np.atleast_1d(v) for v in log_decomposition(inputs, grid))
    margin = np.atleast_1d(sign_margin(inputs, grid))
    return [tuple(float(v) for v in row) for row in zip(grid, J, gain, penalty, margin)]


def write_theory_curve(inputs: TheoryInputs, grid, path) -> Path:
    return write_csv(path, THEORY_COLUMNS, theory_curve_rows(inputs, grid))


def write_metrics_report(report: MetricsReport, path) -> Path:
    return write_csv(path, METRICS_COLUMNS, [_metrics_row(report)])


def write_report(result, path, config=None) -> list[Path]:
    """Write any experiment result; ``path`` is a directory except for a single MetricsReport."""
    if isinstance(result, SweepResult):
        return write_sweep(result, path, config)
    if isinstance(result, BilevelResult):
        return write_bilevel(result, path, config)
    if isinstance(result, ComparisonResult):
        return write_comparison(result, path, config)
    if isinstance(result, MetricsReport):
        return [write_metrics_report(result, path)]
    if isinstance(result, list) and result and all(isinstance(r, DecompositionRow) for r in result):
        return write_decomposition(result, path, config)
    raise TypeError(f"don't know how to write {type(result).__name__}")
