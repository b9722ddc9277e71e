"""Experiment configuration: YAML loading, scenario presets and validation.

A config file is a YAML mapping.  Every key is optional; missing keys take the
value of the chosen ``scenario`` preset, which itself starts from
:data:`DEFAULTS`.  Unknown keys are rejected with their dotted path.  The full
schema with defaults is documented in ``configs/README.md``.

Period splits are chronological.  Each of ``split.train``, ``split.val`` and
``split.test`` is either a period count (laid out back to back in that order)
or an explicit half-open ``[start, stop)`` pair; explicit ranges must satisfy
train < val < test without overlap.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..apt_market import AlphaCurve, MarketParams, make_market_params
from ..bilevel import BilevelConfig
from ..errors import ConfigError, HorizonLabError
from ..forecaster import DEFAULT_HIDDEN, LINEAR, ONE_HIDDEN, TrainConfig

logger = logging.getLogger(__name__)

SCENARIOS = ("S1_Saturated", "S2_Linear", "S3_Hump", "Custom")

DEFAULTS = {
    "scenario": "Custom",
    "market": {
        "d": 10,
        "n_assets": 100,
        "delta_max": 20,
        "sigma2": 1.0,
        "delta0": 1.0,
        "alpha": {"kind": "constant", "scale": 1.0, "tau": 1.0},
        "w_star": None,
        "panel_file": None,
    },
    "candidates": None,  # None -> every horizon 1..delta_max
    "target": None,  # None -> delta_max
    "seeds": [0, 1, 2, 3, 4],
    "split": {"train": 200, "val": 50, "test": 200},
    "arch": LINEAR,
    "hidden_width": DEFAULT_HIDDEN,
    "train": {"learning_rate": 0.1, "max_epochs": 100, "patience": 5, "batch_periods": 20},
    "bilevel": {
        "inner_lr": BilevelConfig.inner_lr,
        "outer_lr": BilevelConfig.outer_lr,
        "entropy_weight": BilevelConfig.entropy_weight,
        "inner_steps": 1,
        "warmup_epochs": BilevelConfig.warmup_epochs,
        "epochs": BilevelConfig.epochs,
        "batch_periods": BilevelConfig.batch_periods,
        "patience": BilevelConfig.patience,
    },
    "smoothing_bandwidth": 5.0,
    "top_fraction": 0.1,
    "top_k": 5,
    "output_dir": "results",
}

# The three regimes share a 100-factor, 200-asset market with Delta = 20.  The
# smoothing bandwidth is 1.5 candidates on this 20-point grid: the default of 5
# spans a quarter of the grid and flattens the S3 hump into a plateau.
_REGIME_COMMON = {
    "market": {"d": 100, "n_assets": 200, "delta_max": 20, "sigma2": 1.0, "delta0": 1.0},
    "train": {"learning_rate": 0.5, "max_epochs": 100, "patience": 5, "batch_periods": 20},
    "smoothing_bandwidth": 1.5,
}

PRESETS = {
    "S1_Saturated": {
        "market": {"alpha": {"kind": "constant", "scale": 1.0}},
        "split": {"train": 10, "val": 20, "test": 2000},
    },
    "S2_Linear": {
        "market": {"alpha": {"kind": "linear", "scale": 0.05}},
        "split": {"train": 50, "val": 20, "test": 2000},
    },
    "S3_Hump": {
        "market": {"alpha": {"kind": "saturating", "scale": 0.2, "tau": 3.0}},
        "split": {"train": 50, "val": 20, "test": 2000},
        "bilevel": {"inner_lr": 0.05, "outer_lr": 1.0e4, "epochs": 300},
    },
    "Custom": {},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    """Recursive merge; keys of ``override`` must already exist in ``base``."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be a mapping")
            out[key] = _merge(base[key], value, dotted + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def preset_dict(scenario: str) -> dict:
    if scenario not in SCENARIOS:
        raise ConfigError(f"config key 'scenario': unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    base = DEFAULTS if scenario == "Custom" else _merge(DEFAULTS, _REGIME_COMMON)
    return _merge(base, PRESETS[scenario])


@dataclass(frozen=True)
class PeriodRange:
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start

    def as_slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class Split:
    """Chronological train / validation / test period ranges."""

    train: PeriodRange
    val: PeriodRange
    test: PeriodRange

    def __post_init__(self):
        for name in ("train", "val", "test"):
            r = getattr(self, name)
            if r.start < 0 or r.size < 1:
                raise ConfigError(f"config key 'split.{name}': need a non-empty range of periods, got [{r.start}, {r.stop})")
        if not self.train.stop <= self.val.start:
            raise ConfigError("config key 'split': validation periods must come after training periods")
        if not self.val.stop <= self.test.start:
            raise ConfigError("config key 'split': test periods must come after validation periods")

    @property
    def total_periods(self) -> int:
        return self.test.stop


@dataclass(frozen=True)
class MarketSpec:
    """Synthetic market description, or a path to a CSV panel (then the other fields are unused)."""

    d: int
    n_assets: int
    delta_max: int
    sigma2: float
    delta0: float
    alpha: AlphaCurve
    w_star: tuple | None = None
    panel_file: str | None = None

    @property
    def synthetic(self) -> bool:
        return self.panel_file is None

    def params(self, seed: int) -> MarketParams:
        """Market parameters for one seed; ``w_star`` is drawn from the seed unless fixed."""
        return make_market_params(
            self.d, self.n_assets, self.delta_max, self.sigma2, self.delta0, self.alpha, self.w_star, seed=seed
        )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    market: MarketSpec
    candidates: tuple
    target: int
    seeds: tuple
    split: Split
    arch: str = LINEAR
    hidden_width: int = DEFAULT_HIDDEN
    train: TrainConfig = field(default_factory=TrainConfig)
    bilevel: BilevelConfig = field(default_factory=BilevelConfig)
    smoothing_bandwidth: float = 5.0
    top_fraction: float = 0.1
    top_k: int = 5
    output_dir: str = "results"

    def train_config(self, seed: int) -> TrainConfig:
        return replace(self.train, seed=int(seed))

    def bilevel_config(self, seed: int, **overrides) -> BilevelConfig:
        return replace(self.bilevel, seed=int(seed), **overrides)

    def with_seeds(self, seeds) -> "ExperimentConfig":
        seeds = tuple(int(s) for s in seeds)
        if not seeds:
            raise ConfigError("config key 'seeds': at least one seed is required")
        return replace(self, seeds=seeds)

    def with_candidates(self, candidates) -> "ExperimentConfig":
        return replace(self, candidates=_check_candidates(candidates, self.market.delta_max))

    @property
    def n_train_samples(self) -> int:
        return self.market.n_assets * self.split.train.size

    def to_dict(self) -> dict:
        """Plain, YAML/JSON-friendly view (key order fixed by the dataclass fields)."""
        out = asdict(self)
        out["candidates"] = list(self.candidates)
        out["seeds"] = list(self.seeds)
        out["market"]["w_star"] = None if self.market.w_star is None else list(self.market.w_star)
        for name in ("train", "val", "test"):
            r = getattr(self.split, name)
            out["split"][name] = [r.start, r.stop]
        out["train"].pop("seed")
        out["bilevel"].pop("seed")
        return out


def _check_candidates(candidates, delta_max: int) -> tuple:
    try:
        cands = tuple(int(c) for c in candidates)
    except (TypeError, ValueError):
        raise ConfigError("config key 'candidates' must be a list of integers") from None
    if not cands:
        raise ConfigError("config key 'candidates' must not be empty")
    if list(cands) != sorted(set(cands)):
        raise ConfigError("config key 'candidates' must be strictly increasing")
    if cands[0] < 1 or cands[-1] > delta_max:
        raise ConfigError(f"config key 'candidates' must lie in 1..{delta_max}")
    return cands


def _parse_split(raw: dict) -> Split:
    cursor = 0
    ranges = {}
    for name in ("train", "val", "test"):
        value = raw[name]
        if isinstance(value, bool):
            raise ConfigError(f"config key 'split.{name}' must be a count or a [start, stop) pair")
        if isinstance(value, int):
            ranges[name] = PeriodRange(cursor, cursor + value)
        elif isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, int) for v in value):
            ranges[name] = PeriodRange(int(value[0]), int(value[1]))
        else:
            raise ConfigError(f"config key 'split.{name}' must be a count or a [start, stop) pair, got {value!r}")
        cursor = ranges[name].stop
    return Split(**ranges)


def _typed(section: str, raw: dict, types: dict) -> dict:
    out = {}
    for key, typ in types.items():
        value = raw[key]
        try:
            if typ is int and (isinstance(value, bool) or float(value) != int(value)):
                raise ValueError
            out[key] = typ(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key '{section}.{key}' must be of type {typ.__name__}, got {value!r}") from None
    return out


def build_config(raw: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping (as read from YAML) into an :class:`ExperimentConfig`."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    scenario = raw.get("scenario", DEFAULTS["scenario"])
    merged = _merge(preset_dict(scenario), raw)

    m = merged["market"]
    try:
        alpha_raw = _typed("market.alpha", m["alpha"], {"scale": float, "tau": float})
        alpha = AlphaCurve(str(m["alpha"]["kind"]), **alpha_raw)
    except HorizonLabError as exc:
        raise ConfigError(f"config key 'market.alpha': {exc}") from None
    dims = _typed("market", m, {"d": int, "n_assets": int, "delta_max": int, "sigma2": float, "delta0": float})
    for key in ("d", "n_assets", "delta_max"):
        if dims[key] < 1:
            raise ConfigError(f"config key 'market.{key}' must be a positive integer")
    if not dims["delta0"] > 0:
        raise ConfigError("config key 'market.delta0' must be positive")
    if not dims["sigma2"] >= 0:
        raise ConfigError("config key 'market.sigma2' must be non-negative")
    w_star = m["w_star"]
    if w_star is not None:
        w_star = tuple(float(v) for v in w_star)
        if len(w_star) != dims["d"]:
            raise ConfigError(f"config key 'market.w_star' must have length d={dims['d']}")
    panel = m["panel_file"]
    if panel is not None:
        panel = str(panel)
        if not Path(panel).is_file():
            raise ConfigError(f"config key 'market.panel_file': no such file {panel!r}")
        dims["delta_max"] = _panel_delta_max(panel)
    market = MarketSpec(alpha=alpha, w_star=w_star, panel_file=panel, **dims)

    delta_max = market.delta_max
    candidates = _check_candidates(
        range(1, delta_max + 1) if merged["candidates"] is None else merged["candidates"], delta_max
    )
    target = delta_max if merged["target"] is None else merged["target"]
    if isinstance(target, bool) or not isinstance(target, int) or not 1 <= target <= delta_max:
        raise ConfigError(f"config key 'target' must be an integer horizon in 1..{delta_max}")

    seeds = merged["seeds"]
    if not isinstance(seeds, (list, tuple)) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("config key 'seeds' must be a non-empty list of integers")

    split = _parse_split(merged["split"])
    arch = merged["arch"]
    if arch not in (LINEAR, ONE_HIDDEN):
        raise ConfigError(f"config key 'arch' must be {LINEAR!r} or {ONE_HIDDEN!r}")
    hidden = merged["hidden_width"]
    if isinstance(hidden, bool) or not isinstance(hidden, int) or hidden < 1:
        raise ConfigError("config key 'hidden_width' must be a positive integer")

    try:
        train = TrainConfig(**_typed("train", merged["train"], {
            "learning_rate": float, "max_epochs": int, "patience": int, "batch_periods": int}))
        bilevel = BilevelConfig(**_typed("bilevel", merged["bilevel"], {
            "inner_lr": float, "outer_lr": float, "entropy_weight": float, "inner_steps": int,
            "warmup_epochs": int, "epochs": int, "batch_periods": int, "patience": int}))
    except ConfigError:
        raise
    except HorizonLabError as exc:
        raise ConfigError(str(exc)) from None

    bandwidth = float(merged["smoothing_bandwidth"])
    if not bandwidth > 0:
        raise ConfigError("config key 'smoothing_bandwidth' must be positive")
    top_fraction = float(merged["top_fraction"])
    if not 0 < top_fraction <= 1:
        raise ConfigError("config key 'top_fraction' must lie in (0, 1]")
    top_k = merged["top_k"]
    if isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1:
        raise ConfigError("config key 'top_k' must be a positive integer")

    return ExperimentConfig(
        scenario=scenario,
        market=market,
        candidates=candidates,
        target=target,
        seeds=tuple(seeds),
        split=split,
        arch=arch,
        hidden_width=hidden,
        train=train,
        bilevel=bilevel,
        smoothing_bandwidth=bandwidth,
        top_fraction=top_fraction,
        top_k=top_k,
        output_dir=str(merged["output_dir"]),
    )


def _panel_delta_max(path: str) -> int:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    n = sum(1 for h in header if h.strip().startswith("r_"))
    if n == 0:
        raise ConfigError(f"config key 'market.panel_file': {path!r} has no r_<k> return columns")
    return n


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    config = build_config(raw)
    logger.info("loaded %s (scenario %s, %d seeds)", path, config.scenario, len(config.seeds))
    return config


def scenario_config(scenario: str, **overrides) -> ExperimentConfig:
    """Preset config with optional top-level overrides, e.g. ``seeds=[0]``."""
    return build_config({"scenario": scenario, **overrides})
