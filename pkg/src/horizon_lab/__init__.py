"""Proxy-horizon selection for cross-sectional return forecasting.

Modules
-------
apt_market
    Synthetic factor-model return surfaces with nested random-walk noise.
theory
    Closed-form generalization of an OLS forecaster trained on a proxy horizon.
metrics
    IC, RankIC, ICIR, top-bucket returns, Sharpe ratio and curve smoothing.
forecaster
    OLS and gradient-trained predictors with a standardized MSE loss.
bilevel
    Learned softmax weights over candidate horizons via one-step hypergradients.
harness
    Experiment configs, sweeps, baselines, reports and the ``horizon-lab`` CLI.
"""

from .errors import ConfigError, DegenerateError, DomainError, HorizonLabError, ShapeError, TrainingError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateError",
    "DomainError",
    "HorizonLabError",
    "ShapeError",
    "TrainingError",
]
