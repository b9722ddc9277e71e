"""Closed-form generalization of an OLS forecaster trained on a proxy horizon.

With exposures whitened and ``|w_star| = 1``, an OLS fit on ``N`` samples of the
horizon-``delta`` label and evaluated against the target horizon ``Delta`` has
expected squared correlation

    J(delta) = a(delta)^2 a(Delta)^2 / ([a(delta)^2 + K (delta + delta0)] [a(Delta)^2 + sigma2 (Delta + delta0)])

with ``K = d * sigma2 / N``.  Its log splits into an information gain
``2 ln a(delta)``, a noise penalty ``ln[a(delta)^2 + K (delta + delta0)]`` and a
constant that does not depend on ``delta`` (:func:`log_constant`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .apt_market import AlphaCurve, MarketParams, alpha_eval
from .errors import DegenerateError, DomainError, ShapeError


@dataclass(frozen=True)
class TheoryInputs:
    alpha: AlphaCurve
    K: float
    sigma2: float
    delta0: float
    delta_max: int

    def __post_init__(self):
        if not self.K >= 0:
            raise DomainError(f"K must be non-negative, got {self.K}")
        if not self.sigma2 >= 0:
            raise DomainError(f"sigma2 must be non-negative, got {self.sigma2}")
        if not self.delta0 > 0:
            raise DomainError(f"delta0 must be positive, got {self.delta0}")
        if int(self.delta_max) < 1:
            raise DomainError("delta_max must be a positive integer")

    @classmethod
    def from_market(cls, params: MarketParams, n_train: int) -> "TheoryInputs":
        """``K = d * sigma2 / n_train`` for a training set of ``n_train`` samples."""
        if n_train < 1:
            raise DomainError("n_train must be positive")
        return cls(params.alpha, params.d * params.sigma2 / n_train, params.sigma2, params.delta0, params.delta_max)


def _check_delta(inputs: TheoryInputs, delta) -> np.ndarray:
    d = np.asarray(delta, dtype=float)
    if np.any(~(d > 0)) or np.any(d > inputs.delta_max + 1e-12):
        raise DomainError(f"delta must lie in (0, {inputs.delta_max}], got {delta}")
    return d


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def target_variance(inputs: TheoryInputs) -> float:
    a_target = alpha_eval(inputs.alpha, float(inputs.delta_max))[0]
    return a_target**2 + inputs.sigma2 * (inputs.delta_max + inputs.delta0)


def closed_form_J(inputs: TheoryInputs, delta):
    d = _check_delta(inputs, delta)
    a = np.asarray(alpha_eval(inputs.alpha, d)[0])
    a_target = alpha_eval(inputs.alpha, float(inputs.delta_max))[0]
    v_est = a**2 + inputs.K * (d + inputs.delta0)
    v_target = target_variance(inputs)
    if np.any(v_est == 0) or v_target == 0:
        raise DegenerateError("prediction or target variance is zero (alpha == 0 with no noise)")
    return _scalar(a**2 * a_target**2 / (v_est * v_target))


def log_decomposition(inputs: TheoryInputs, delta):
    """Return ``(info_gain, noise_penalty)`` so that ln J = gain - penalty + log_constant."""
    d = _check_delta(inputs, delta)
    a = np.asarray(alpha_eval(inputs.alpha, d)[0])
    if np.any(a <= 0):
        raise DomainError("log decomposition needs alpha(delta) > 0")
    gain = 2.0 * np.log(a)
    penalty = np.log(a**2 + inputs.K * (d + inputs.delta0))
    return _scalar(gain), _scalar(penalty)


def log_constant(inputs: TheoryInputs) -> float:
    """The delta-independent part of ln J: 2 ln a(Delta) - ln Var(r^Delta)."""
    a_target = alpha_eval(inputs.alpha, float(inputs.delta_max))[0]
    if a_target <= 0:
        raise DomainError("log constant needs alpha(Delta) > 0")
    return 2.0 * math.log(a_target) - math.log(target_variance(inputs))


def sign_margin(inputs: TheoryInputs, delta):
    """a'/a - 1 / (2 (delta + delta0)); positive exactly where J is increasing (for K > 0)."""
    d = _check_delta(inputs, delta)
    a, da = alpha_eval(inputs.alpha, d)
    a = np.asarray(a)
    if np.any(a <= 0):
        raise DomainError("sign margin needs alpha(delta) > 0")
    return _scalar(np.asarray(da) / a - 1.0 / (2.0 * (d + inputs.delta0)))


def sign_margin_roots(inputs: TheoryInputs, grid_step: float = 0.01) -> list[float]:
    """Zero crossings of :func:`sign_margin` on (0, Delta], refined with Brent's method."""
    grid = np.arange(1, int(round(inputs.delta_max / grid_step)) + 1) * grid_step
    grid = grid[grid <= inputs.delta_max + 1e-12]
    m = sign_margin(inputs, grid)
    roots = []
    for k in np.nonzero(np.sign(m[:-1]) * np.sign(m[1:]) < 0)[0]:
        roots.append(brentq(lambda x: sign_margin(inputs, x), grid[k], grid[k + 1], xtol=1e-12))
    roots += [float(g) for g in grid[m == 0]]
    return sorted(roots)


def optimal_horizon(inputs: TheoryInputs, grid_step: float = 0.01) -> tuple[float, float]:
    """Grid argmax of J over {step, 2 step, ..., Delta}; ties go to the smallest delta."""
    if not 0 < grid_step <= 1:
        raise DomainError(f"grid_step must lie in (0, 1], got {grid_step}")
    n = int(math.floor(inputs.delta_max / grid_step + 1e-9))
    grid = np.arange(1, n + 1) * grid_step
    values = np.asarray(closed_form_J(inputs, grid))
    k = int(np.argmax(values))
    return float(grid[k]), float(values[k])


@dataclass(frozen=True)
class CorrelationTriple:
    rho_xy: float
    rho_xz: float
    rho_yz: float

    def __post_init__(self):
        for name in ("rho_xy", "rho_xz", "rho_yz"):
            v = getattr(self, name)
            if not -1 <= v <= 1:
                raise DomainError(f"{name}={v} outside [-1, 1]")

    @classmethod
    def from_data(cls, x, y, z) -> "CorrelationTriple":
        """Sample correlations; validates that the implied matrix is PSD."""
        xs, ys, zs = (_standardized(v, name) for v, name in ((x, "x"), (y, "y"), (z, "z")))
        n = xs.size
        triple = cls(
            float(np.clip(xs @ ys / n, -1, 1)),
            float(np.clip(xs @ zs / n, -1, 1)),
            float(np.clip(ys @ zs / n, -1, 1)),
        )
        if np.linalg.eigvalsh(triple.matrix()).min() < -1e-10:
            raise DomainError("correlation triple is not positive semidefinite")
        return triple

    def matrix(self) -> np.ndarray:
        return np.array(
            [[1.0, self.rho_xy, self.rho_xz], [self.rho_xy, 1.0, self.rho_yz], [self.rho_xz, self.rho_yz, 1.0]]
        )


def partial_corr_from_corrs(triple: CorrelationTriple) -> float:
    """Correlation of x and y after linearly removing z, from the three pairwise correlations."""
    if abs(triple.rho_xz) >= 1 or abs(triple.rho_yz) >= 1:
        raise DegenerateError("control variable is perfectly correlated; residual variance is zero")
    return (triple.rho_xy - triple.rho_xz * triple.rho_yz) / (
        math.sqrt(1 - triple.rho_xz**2) * math.sqrt(1 - triple.rho_yz**2)
    )


def _standardized(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).ravel()
    c = a - a.mean()
    ss = float(c @ c)
    if ss == 0:
        raise DegenerateError(f"{name} has zero variance")
    return c / math.sqrt(ss / a.size)


def decompose_correlation(x, y, z) -> tuple[float, float, float]:
    """Split corr(x, y) into a path mediated by z and a residual term.

    ``mediated = r_xz * r_yz`` and ``residual = r_xy.z * sqrt(1 - r_xz^2) * sqrt(1 - r_yz^2)``
    where the partial correlation ``r_xy.z`` is the correlation of the residuals
    of x and y after regressing each on z.  When one of those residuals is
    identically zero the residual term is zero (its weight vanishes) and the
    partial correlation is not needed.
    """
    x, y, z = (np.asarray(v, dtype=float).ravel() for v in (x, y, z))
    if not x.size == y.size == z.size:
        raise ShapeError("x, y and z must have equal length")
    if x.size < 3:
        raise DegenerateError("need at least three observations")
    xs, ys, zs = _standardized(x, "x"), _standardized(y, "y"), _standardized(z, "z")
    n = x.size
    r_xz = float(xs @ zs) / n
    r_yz = float(ys @ zs) / n
    ex = xs - r_xz * zs
    ey = ys - r_yz * zs
    mediated = r_xz * r_yz
    ssx, ssy = float(ex @ ex), float(ey @ ey)
    tol = 1e-24 * n
    if ssx <= tol or ssy <= tol:
        residual = 0.0
    else:
        partial = float(ex @ ey) / math.sqrt(ssx * ssy)
        # sqrt(1 - r^2) equals the residual RMS exactly under the 1/N convention
        residual = partial * math.sqrt(ssx / n) * math.sqrt(ssy / n)
    return mediated, residual, mediated + residual


def corollary_product(proxy_ic: float, alignment: float) -> float:
    """Final IC predicted as proxy IC times label alignment."""
    for name, v in (("proxy_ic", proxy_ic), ("alignment", alignment)):
        if not -1 <= v <= 1:
            raise DomainError(f"{name}={v} outside [-1, 1]")
    return proxy_ic * alignment


def population_correlations(params: MarketParams, delta, n_train: int) -> dict:
    """Population proxy IC, alignment and final IC for an OLS model (used by reports)."""
    inputs = TheoryInputs.from_market(params, n_train)
    d = _check_delta(inputs, delta)
    a = np.asarray(alpha_eval(params.alpha, d)[0])
    a_t = alpha_eval(params.alpha, float(params.delta_max))[0]
    v_est = a**2 + inputs.K * (d + params.delta0)
    v_proxy = a**2 + params.sigma2 * (d + params.delta0)
    v_target = target_variance(inputs)
    return {
        "proxy_ic": _scalar(a**2 / np.sqrt(v_est * v_proxy)),
        "alignment": _scalar((a * a_t + params.sigma2 * (d + params.delta0)) / np.sqrt(v_proxy * v_target)),
        "final_ic": _scalar(a * a_t / np.sqrt(v_est * v_target)),
    }
