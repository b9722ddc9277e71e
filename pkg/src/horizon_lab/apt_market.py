"""Synthetic cross-sectional return panels from a time-varying linear factor model.

For asset ``i`` in period ``t`` the cumulative return up to horizon ``delta`` is

    r[t, i, delta] = alpha(delta) * w_star . s[t, i] + eps[t, i, delta]

where the exposures ``s`` are i.i.d. standard normal (whitened) and the noise is
an explicit random walk: ``eps^delta = eta_0 + eta_1 + ... + eta_delta`` with
``eta_0 ~ N(0, sigma2 * delta0)`` and ``eta_k ~ N(0, sigma2)``.  Building the
noise from increments makes ``Cov(eps^a, eps^b) = Var(eps^min(a, b))`` hold
exactly, not only in distribution of the marginals.

Seeding scheme
--------------
Every period ``t`` owns two independent PRNG streams derived from the base seed
through ``numpy.random.SeedSequence(seed, spawn_key=(stream, t))`` with
``stream = 0`` for exposures and ``stream = 1`` for noise.  Assets consume
consecutive draws of their period's stream in index order.  A period can
therefore be generated on its own, in any order, and give the same numbers.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError

logger = logging.getLogger(__name__)

FACTOR_STREAM = 0
NOISE_STREAM = 1
WSTAR_STREAM = 2

ALPHA_KINDS = ("constant", "linear", "saturating")


@dataclass(frozen=True)
class AlphaCurve:
    """Signal realization curve alpha(delta).

    ``kind`` is one of ``"constant"`` (alpha = scale), ``"linear"``
    (alpha = scale * delta) or ``"saturating"`` (alpha = scale * (1 - exp(-delta / tau))).
    """

    kind: str = "constant"
    scale: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ALPHA_KINDS:
            raise DomainError(f"unknown alpha kind {self.kind!r}; expected one of {ALPHA_KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.scale >= 0:
            raise DomainError(f"alpha scale must be non-negative, got {self.scale}")
        if kind == "saturating" and not self.tau > 0:
            raise DomainError(f"saturating alpha needs tau > 0, got {self.tau}")

    def __call__(self, delta):
        return alpha_eval(self, delta)[0]


def alpha_eval(curve: AlphaCurve, delta):
    """Return ``(alpha(delta), alpha'(delta))``; ``delta`` may be a scalar or an array."""
    d = np.asarray(delta, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError(f"alpha is defined for delta > 0 only, got {delta}")
    if curve.kind == "constant":
        a = np.full_like(d, curve.scale)
        da = np.zeros_like(d)
    elif curve.kind == "linear":
        a = curve.scale * d
        da = np.full_like(d, curve.scale)
    else:
        decay = np.exp(-d / curve.tau)
        a = curve.scale * (1.0 - decay)
        da = curve.scale * decay / curve.tau
    if a.ndim == 0:
        return float(a), float(da)
    return a, da


@dataclass(frozen=True)
class MarketParams:
    """Parameters of the generative model.

    ``w_star`` is renormalized to unit length on construction.  Use
    :func:`make_market_params` to draw it at random from a seed.
    """

    d: int
    n_assets: int
    delta_max: int
    sigma2: float
    delta0: float
    alpha: AlphaCurve
    w_star: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("d", "n_assets", "delta_max"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be a positive integer")
        if not self.delta0 > 0:
            raise DomainError(f"delta0 must be positive, got {self.delta0}")
        if not self.sigma2 >= 0:
            raise DomainError(f"sigma2 must be non-negative, got {self.sigma2}")
        w = np.asarray(self.w_star, dtype=float).reshape(-1)
        if w.shape != (self.d,):
            raise ShapeError(f"w_star has length {w.size}, expected d={self.d}")
        norm = np.linalg.norm(w)
        if norm == 0:
            raise DomainError("w_star must be nonzero")
        w = w / norm
        w.setflags(write=False)
        object.__setattr__(self, "w_star", w)

    @property
    def horizons(self) -> np.ndarray:
        return np.arange(1, self.delta_max + 1)

    def noise_variance(self, delta):
        return self.sigma2 * (np.asarray(delta, dtype=float) + self.delta0)


def random_unit_vector(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(WSTAR_STREAM,)))
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def make_market_params(
    d: int,
    n_assets: int,
    delta_max: int,
    sigma2: float,
    delta0: float,
    alpha: AlphaCurve,
    w_star=None,
    seed: int = 0,
) -> MarketParams:
    """Build :class:`MarketParams`; ``w_star=None`` draws a uniform direction from ``seed``."""
    if w_star is None:
        w_star = random_unit_vector(d, seed)
    return MarketParams(d, n_assets, delta_max, float(sigma2), float(delta0), alpha, np.asarray(w_star, float))


@dataclass(frozen=True)
class FactorPanel:
    exposures: np.ndarray  # (T, N, d)

    @property
    def periods(self) -> int:
        return self.exposures.shape[0]


@dataclass(frozen=True)
class ReturnSurface:
    """Cumulative returns for every (period, asset, horizon).

    ``returns[t, i, k]`` is the return up to horizon ``k + 1``.  ``params`` is
    ``None`` for panels ingested from CSV.
    """

    returns: np.ndarray  # (T, N, Delta)
    signal: np.ndarray  # (T, N)
    exposures: np.ndarray  # (T, N, d)
    params: MarketParams | None = None

    @property
    def periods(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @property
    def delta_max(self) -> int:
        return self.returns.shape[2]

    def horizon(self, delta: int) -> np.ndarray:
        """(T, N) returns at integer horizon ``delta`` (1-based)."""
        if not 1 <= delta <= self.delta_max:
            raise DomainError(f"horizon {delta} outside 1..{self.delta_max}")
        return self.returns[:, :, delta - 1]

    def slice_periods(self, index) -> "ReturnSurface":
        return ReturnSurface(self.returns[index], self.signal[index], self.exposures[index], self.params)


def _period_rng(seed: int, stream: int, period: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, period)))


def sample_factors(params: MarketParams, periods: int, seed: int) -> FactorPanel:
    if periods < 1:
        raise DomainError("periods must be >= 1")
    out = np.empty((periods, params.n_assets, params.d))
    for t in range(periods):
        out[t] = _period_rng(seed, FACTOR_STREAM, t).standard_normal((params.n_assets, params.d))
    out.setflags(write=False)
    return FactorPanel(out)


def _period_noise(params: MarketParams, seed: int, t: int) -> np.ndarray:
    rng = _period_rng(seed, NOISE_STREAM, t)
    eta = rng.standard_normal((params.n_assets, params.delta_max + 1))
    scale = np.full(params.delta_max + 1, np.sqrt(params.sigma2))
    scale[0] = np.sqrt(params.sigma2 * params.delta0)
    return np.cumsum(eta * scale, axis=1)[:, 1:]


def generate_surface(params: MarketParams, factors: FactorPanel, seed: int) -> ReturnSurface:
    """Draw returns for all horizons 1..delta_max on top of ``factors``."""
    x = factors.exposures
    if x.ndim != 3 or x.shape[1:] != (params.n_assets, params.d):
        raise ShapeError(
            f"factor panel shape {x.shape} does not match (T, {params.n_assets}, {params.d})"
        )
    signal = x @ params.w_star
    alphas = np.asarray(alpha_eval(params.alpha, params.horizons)[0], dtype=float).reshape(-1)
    returns = np.empty((x.shape[0], params.n_assets, params.delta_max))
    for t in range(x.shape[0]):
        returns[t] = signal[t][:, None] * alphas[None, :] + _period_noise(params, seed, t)
    for a in (returns, signal):
        a.setflags(write=False)
    return ReturnSurface(returns, signal, x, params)


def simulate(params: MarketParams, periods: int, seed: int) -> ReturnSurface:
    """Exposures and returns from a single base seed."""
    return generate_surface(params, sample_factors(params, periods, seed), seed)


# --------------------------------------------------------------------------- CSV


def surface_header(delta_max: int, d: int = 0) -> list[str]:
    cols = ["period", "asset", "signal"] + [f"r_{k}" for k in range(1, delta_max + 1)]
    return cols + [f"s_{j}" for j in range(1, d + 1)]


def write_surface_csv(surface: ReturnSurface, path, include_exposures: bool = False) -> None:
    """Write ``period,asset,signal,r_1..r_<Delta>`` (plus ``s_1..s_d`` if requested)."""
    T, N, D = surface.returns.shape
    d = surface.exposures.shape[2] if include_exposures else 0
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(surface_header(D, d))
        for t in range(T):
            for i in range(N):
                row = [t, i, repr(float(surface.signal[t, i]))]
                row += [repr(float(v)) for v in surface.returns[t, i]]
                if d:
                    row += [repr(float(v)) for v in surface.exposures[t, i]]
                w.writerow(row)


def read_panel_csv(path, extra_columns: tuple[str, ...] = ()):
    """Read a balanced panel in the surface CSV schema.

    Exposures come from ``s_1..s_d`` columns when present, otherwise the
    ``signal`` column is used as a single exposure.  Returns the surface and a
    dict of any ``extra_columns`` as (T, N) arrays.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    header = [h.strip() for h in header]
    for required in ("period", "asset", "signal"):
        if required not in header:
            raise ShapeError(f"{path}: missing column {required!r}")
    r_cols = sorted((h for h in header if h.startswith("r_")), key=lambda h: int(h[2:]))
    if not r_cols or [int(h[2:]) for h in r_cols] != list(range(1, len(r_cols) + 1)):
        raise ShapeError(f"{path}: return columns must be r_1..r_<Delta> without gaps")
    s_cols = sorted((h for h in header if h.startswith("s_")), key=lambda h: int(h[2:]))
    for col in extra_columns:
        if col not in header:
            raise ShapeError(f"{path}: missing column {col!r}")

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    col = {h: k for k, h in enumerate(header)}
    period = data[:, col["period"]].astype(np.int64)
    asset = data[:, col["asset"]].astype(np.int64)
    periods = np.unique(period)
    assets = np.unique(asset)
    T, N = periods.size, assets.size
    if T * N != data.shape[0]:
        raise ShapeError(f"{path}: panel is not balanced ({data.shape[0]} rows for {T} periods x {N} assets)")
    order = np.lexsort((asset, period))
    data = data[order]
    if np.any(period[order].reshape(T, N) != periods[:, None]) or np.any(asset[order].reshape(T, N) != assets[None, :]):
        raise ShapeError(f"{path}: duplicate (period, asset) rows")

    def grid(names):
        return data[:, [col[h] for h in names]].reshape(T, N, len(names))

    returns = grid(r_cols)
    signal = data[:, col["signal"]].reshape(T, N)
    exposures = grid(s_cols) if s_cols else signal[:, :, None].copy()
    extras = {c: data[:, col[c]].reshape(T, N) for c in extra_columns}
    logger.info("read panel %s: T=%d N=%d Delta=%d d=%d", path, T, N, returns.shape[2], exposures.shape[2])
    return ReturnSurface(returns, signal, exposures, None), extras
