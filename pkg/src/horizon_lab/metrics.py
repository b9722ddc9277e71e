"""Cross-sectional signal metrics.

All moments use the 1/N (population) convention, including the standard
deviation in ICIR and Sharpe.  With that convention two standardized vectors
satisfy ``mean((a - b)**2) == 2 - 2 * pearson_ic(a, b)`` exactly, which the
training loss relies on.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateError, DomainError, ShapeError

ANNUALIZATION = 252
TOP_FRACTION = 0.1


def standardize_cross_section(values, axis: int = -1) -> np.ndarray:
    """Zero mean, unit (1/N) variance along ``axis``."""
    v = np.asarray(values, dtype=float)
    if v.shape[axis] < 2:
        raise DegenerateError("cross-section needs at least two entries")
    centered = v - v.mean(axis=axis, keepdims=True)
    sd = np.sqrt((centered**2).mean(axis=axis, keepdims=True))
    if np.any(sd == 0):
        raise DegenerateError("cannot standardize a constant cross-section")
    return centered / sd


def pearson_ic(pred, target) -> float:
    p = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(target, dtype=float).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"length mismatch: {p.size} vs {y.size}")
    if p.size < 2:
        raise DegenerateError("need at least two observations")
    pc, yc = p - p.mean(), y - y.mean()
    denom = math.sqrt(float(pc @ pc) * float(yc @ yc))
    if denom == 0:
        raise DegenerateError("correlation undefined for a constant input")
    return float(np.clip((pc @ yc) / denom, -1.0, 1.0))


def spearman_rank_ic(pred, target) -> float:
    """Pearson correlation of average ranks (ties share the mean rank)."""
    p = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(target, dtype=float).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"length mismatch: {p.size} vs {y.size}")
    return pearson_ic(rankdata(p), rankdata(y))


def rowwise_ic(pred, target) -> np.ndarray:
    """Per-period Pearson IC for (T, N) arrays."""
    p = np.asarray(pred, dtype=float)
    y = np.asarray(target, dtype=float)
    if p.shape != y.shape or p.ndim != 2:
        raise ShapeError(f"expected matching (T, N) arrays, got {p.shape} and {y.shape}")
    pc = p - p.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    denom = np.sqrt((pc**2).sum(axis=1) * (yc**2).sum(axis=1))
    if np.any(denom == 0):
        raise DegenerateError("constant cross-section in IC computation")
    return np.clip((pc * yc).sum(axis=1) / denom, -1.0, 1.0)


def rowwise_rank_ic(pred, target) -> np.ndarray:
    p = np.asarray(pred, dtype=float)
    y = np.asarray(target, dtype=float)
    if p.shape != y.shape or p.ndim != 2:
        raise ShapeError(f"expected matching (T, N) arrays, got {p.shape} and {y.shape}")
    return rowwise_ic(rankdata(p, axis=1), rankdata(y, axis=1))


@dataclass(frozen=True)
class ICSeries:
    values: np.ndarray
    horizon_tag: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(np.abs(v) > 1):
            raise DomainError("IC values must lie in [-1, 1]")
        object.__setattr__(self, "values", v)


def aggregate_ic(series) -> tuple[float, float]:
    """Return ``(mean, mean / std)`` of an IC series (1/N std)."""
    v = series.values if isinstance(series, ICSeries) else np.asarray(series, dtype=float).ravel()
    if v.size < 2:
        raise DegenerateError("need at least two periods to aggregate")
    mean = float(v.mean())
    std = float(np.sqrt(((v - mean) ** 2).mean()))
    if std == 0 or std < 1e-15 * max(1.0, abs(mean)):
        raise DegenerateError("IC series has zero standard deviation")
    return mean, mean / std


def top_bucket_returns(preds, returns, top_fraction: float = TOP_FRACTION) -> np.ndarray:
    """Equal-weight realized return of the top ``ceil(top_fraction * N)`` assets per period.

    Ties in the prediction are broken by ascending asset index.
    """
    if not 0 < top_fraction <= 1:
        raise DomainError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    p = np.atleast_2d(np.asarray(preds, dtype=float))
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    if p.shape != r.shape:
        raise ShapeError(f"prediction shape {p.shape} != return shape {r.shape}")
    n = p.shape[1]
    k = math.ceil(top_fraction * n - 1e-12)
    if k < 1:
        raise DomainError("top bucket is empty")
    # stable sort on -pred keeps lower indices first among equal predictions
    order = np.argsort(-p, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(r, order, axis=1).mean(axis=1)


def portfolio_stats(preds_by_period, returns_by_period, top_fraction: float = TOP_FRACTION):
    """Mean top-bucket return and its annualized Sharpe ratio."""
    bucket = top_bucket_returns(preds_by_period, returns_by_period, top_fraction)
    return sharpe_from_returns(bucket)


def sharpe_from_returns(period_returns) -> tuple[float, float]:
    x = np.asarray(period_returns, dtype=float)
    mean = float(x.mean())
    std = float(np.sqrt(((x - mean) ** 2).mean()))
    if std == 0 or std < 1e-15 * max(1.0, abs(mean)):
        raise DegenerateError("period-return series has zero standard deviation")
    return mean, mean / std * math.sqrt(ANNUALIZATION)


@dataclass(frozen=True)
class MetricsReport:
    ic_mean: float
    icir: float
    rank_ic_mean: float
    rank_icir: float
    top_return_mean: float
    sharpe_annualized: float
    n_periods: int

    def as_dict(self) -> dict:
        return asdict(self)


def _safe_ratio(fn, values):
    try:
        return fn(values)
    except DegenerateError:
        v = np.asarray(values, dtype=float)
        return float(v.mean()), float("nan")


def compute_report(preds, returns, top_fraction: float = TOP_FRACTION) -> MetricsReport:
    """Full report for (T, N) predictions against (T, N) realized returns.

    Ratios whose denominator vanishes are reported as NaN rather than raised,
    since a report on a single period is still useful.
    """
    p = np.atleast_2d(np.asarray(preds, dtype=float))
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    ic = rowwise_ic(p, r)
    ric = rowwise_rank_ic(p, r)
    ic_mean, icir = _safe_ratio(aggregate_ic, ic) if ic.size > 1 else (float(ic.mean()), float("nan"))
    ric_mean, ricir = _safe_ratio(aggregate_ic, ric) if ric.size > 1 else (float(ric.mean()), float("nan"))
    top_mean, sharpe = _safe_ratio(sharpe_from_returns, top_bucket_returns(p, r, top_fraction))
    return MetricsReport(ic_mean, icir, ric_mean, ricir, top_mean, sharpe, int(p.shape[0]))


def _reflect_index(p: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric reflection (d c b a | a b c d | d c b a) for any offset."""
    m = np.mod(p, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def smoothing_matrix(n: int, bandwidth: float) -> np.ndarray:
    """Row-stochastic, symmetric Gaussian smoothing operator on ``n`` grid points."""
    if bandwidth < 0.5:
        return np.eye(n)
    radius = int(math.ceil(4 * bandwidth))
    k = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (k / bandwidth) ** 2)
    w /= w.sum()
    mat = np.zeros((n, n))
    for j in range(n):
        np.add.at(mat[j], _reflect_index(j + k, n), w)
    return mat


def gaussian_smooth(curve, bandwidth: float = 5.0) -> np.ndarray:
    """Gaussian-kernel smoothing of a 1-D curve, bandwidth in grid steps.

    The kernel is truncated at +/- 4 bandwidths and folded back into the grid at
    the boundaries by reflection.  The resulting operator is symmetric with unit
    row sums, so constants are preserved and so is the total mass of any curve.
    Bandwidths below half a grid step leave the curve unchanged.
    """
    c = np.asarray(curve, dtype=float)
    if c.ndim != 1:
        raise ShapeError("gaussian_smooth expects a 1-D curve")
    if c.size == 0:
        raise DegenerateError("cannot smooth an empty curve")
    if not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    return smoothing_matrix(c.size, bandwidth) @ c
