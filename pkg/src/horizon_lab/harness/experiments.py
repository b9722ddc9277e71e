"""Horizon sweeps, decomposition checks, bi-level runs and baseline comparisons.

Every experiment is a list of independent tasks keyed by ``(seed, ...)``.  A
task regenerates (or reuses from a per-process cache) the data of its seed, so
tasks can run in any order or in separate processes; results are assembled in
task-key order, never in completion order.  Matched seeds share data: every
method evaluated for seed ``s`` sees the same surface and the same split.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..apt_market import MarketParams, ReturnSurface, read_panel_csv, simulate
from ..bilevel import standardized_labels, train_adaptive
from ..errors import ConfigError, DomainError
from ..forecaster import ModelParams, ols_fit, predict, train_supervised
from ..metrics import MetricsReport, compute_report, gaussian_smooth, pearson_ic, rowwise_ic
from ..theory import TheoryInputs, closed_form_J
from .config import ExperimentConfig, MarketSpec, Split

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class SeedData:
    """Exposures and returns of one seed, with the chronological split applied on access."""

    seed: int
    exposures: np.ndarray  # (T, N, d)
    returns: np.ndarray  # (T, N, Delta)
    split: Split
    params: MarketParams | None

    def part(self, name: str):
        """``(X, R)`` for ``"train"``, ``"val"`` or ``"test"``."""
        sl = getattr(self.split, name).as_slice()
        return self.exposures[sl], self.returns[sl]


@lru_cache(maxsize=2)
def _synthetic_surface(market: MarketSpec, periods: int, seed: int) -> ReturnSurface:
    return simulate(market.params(seed), periods, seed)


@lru_cache(maxsize=1)
def _panel_surface(path: str) -> ReturnSurface:
    return read_panel_csv(path)[0]


def seed_data(config: ExperimentConfig, seed: int) -> SeedData:
    periods = config.split.total_periods
    if config.market.synthetic:
        surface = _synthetic_surface(config.market, periods, int(seed))
        params = surface.params
    else:
        surface = _panel_surface(config.market.panel_file)
        params = None
        if surface.periods < periods:
            raise ConfigError(
                f"config key 'split': panel {config.market.panel_file} has {surface.periods} periods, "
                f"the split needs {periods}"
            )
    return SeedData(int(seed), surface.exposures, surface.returns, config.split, params)


def _labels(R, horizons) -> np.ndarray:
    return standardized_labels(R, horizons)


def _test_report(config: ExperimentConfig, data: SeedData, model: ModelParams) -> tuple[MetricsReport, np.ndarray]:
    X, R = data.part("test")
    pred = predict(model, X)
    return compute_report(pred, R[..., config.target - 1], config.top_fraction), pred


def run_tasks(fn, tasks, jobs: int = 1) -> list:
    """Apply ``fn`` to every task; the output order is the task order for any ``jobs``."""
    tasks = list(tasks)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _train_on(config: ExperimentConfig, data: SeedData, label_fn) -> ModelParams:
    """Supervised training on ``label_fn(R)`` ((T, N) or (T, N, k)) with the seed's config."""
    X, R = data.part("train")
    VX, VR = data.part("val")
    model, _ = train_supervised(
        X, label_fn(R), VX, label_fn(VR), config.train_config(data.seed), config.arch, config.hidden_width
    )
    return model


# --------------------------------------------------------------------------- sweep

SWEEP_COLUMNS = ("delta", "seed", "final_ic", "proxy_ic", "alignment", "rank_ic", "icir", "rank_icir", "top_ret", "sharpe")


@dataclass(frozen=True)
class SweepRecord:
    delta: int
    seed: int
    final_ic: float
    proxy_ic: float
    alignment: float
    report: MetricsReport

    def row(self) -> tuple:
        r = self.report
        return (self.delta, self.seed, self.final_ic, self.proxy_ic, self.alignment,
                r.rank_ic_mean, r.icir, r.rank_icir, r.top_return_mean, r.sharpe_annualized)


@dataclass
class SweepResult:
    """Per-(delta, seed) test metrics plus seed-averaged and smoothed final-IC curves."""

    candidates: tuple
    seeds: tuple
    target: int
    bandwidth: float
    records: list
    mean_curve: np.ndarray
    smoothed_curve: np.ndarray
    theory_curve: np.ndarray | None = None  # sqrt(J) over the candidates (synthetic data only)

    @property
    def argmax(self) -> int:
        """Candidate maximizing the smoothed curve; ties go to the smallest horizon."""
        return int(self.candidates[int(np.argmax(self.smoothed_curve))])

    def seed_curve(self, seed: int, column: str = "final_ic") -> np.ndarray:
        by_delta = {r.delta: getattr(r, column) for r in self.records if r.seed == seed}
        return np.array([by_delta[c] for c in self.candidates])


def _sweep_task(task) -> SweepRecord:
    config, delta, seed = task
    data = seed_data(config, seed)
    model = _train_on(config, data, lambda R: _labels(R, [delta])[..., 0])
    report, pred = _test_report(config, data, model)
    _, R = data.part("test")
    proxy = float(rowwise_ic(pred, R[..., delta - 1]).mean())
    alignment = float(rowwise_ic(R[..., delta - 1], R[..., config.target - 1]).mean())
    logger.debug("sweep delta=%d seed=%d ic=%.5f", delta, seed, report.ic_mean)
    return SweepRecord(int(delta), int(seed), report.ic_mean, proxy, alignment, report)


def sweep_tasks(config: ExperimentConfig) -> list:
    return [(config, int(c), int(s)) for s in config.seeds for c in config.candidates]


def assemble_sweep(config: ExperimentConfig, records) -> SweepResult:
    records = sorted(records, key=lambda r: (r.delta, r.seed))
    mean = np.array([np.mean([r.final_ic for r in records if r.delta == c]) for c in config.candidates])
    theory = None
    if config.market.synthetic and config.target == config.market.delta_max:
        inputs = TheoryInputs.from_market(config.market.params(config.seeds[0]), config.n_train_samples)
        theory = np.sqrt(np.asarray(closed_form_J(inputs, np.asarray(config.candidates, dtype=float)), dtype=float))
    return SweepResult(
        config.candidates, config.seeds, config.target, config.smoothing_bandwidth, records,
        mean, gaussian_smooth(mean, config.smoothing_bandwidth), theory,
    )


def run_sweep(config: ExperimentConfig, jobs: int = 1, on_partial=None) -> SweepResult:
    """Train one model per (candidate, seed) on the candidate label and test it against the target.

    If a task fails, ``on_partial`` (when given) receives the records finished
    so far before the error propagates.
    """
    tasks = sweep_tasks(config)
    if jobs == 1:
        records = []
        for task in tasks:
            try:
                records.append(_sweep_task(task))
            except Exception:
                if on_partial is not None:
                    on_partial(records)
                raise
    else:
        records = run_tasks(_sweep_task, tasks, jobs)
    result = assemble_sweep(config, records)
    logger.info("sweep over %d candidates x %d seeds: smoothed argmax %d", len(config.candidates),
                len(config.seeds), result.argmax)
    return result


# --------------------------------------------------------------------------- decomposition

DECOMPOSITION_COLUMNS = ("delta", "final_ic", "proxy_ic", "alignment", "product", "gap")


@dataclass(frozen=True)
class DecompositionRow:
    delta: int
    final_ic: float
    proxy_ic: float
    alignment: float
    product: float
    gap: float  # seed average of |final_ic - proxy_ic * alignment|

    def row(self) -> tuple:
        return (self.delta, self.final_ic, self.proxy_ic, self.alignment, self.product, self.gap)


def decomposition_table(sweep: SweepResult) -> list:
    rows = []
    for c in sweep.candidates:
        recs = [r for r in sweep.records if r.delta == c]
        prods = [r.proxy_ic * r.alignment for r in recs]
        gaps = [abs(r.final_ic - p) for r, p in zip(recs, prods)]
        rows.append(DecompositionRow(
            int(c),
            float(np.mean([r.final_ic for r in recs])),
            float(np.mean([r.proxy_ic for r in recs])),
            float(np.mean([r.alignment for r in recs])),
            float(np.mean(prods)),
            float(np.mean(gaps)),
        ))
    return rows


def run_decomposition_check(config: ExperimentConfig, jobs: int = 1, sweep: SweepResult | None = None):
    """Compare final IC with proxy IC times alignment per horizon; returns ``(rows, sweep)``.

    The product form is exact only when the signal is fully priced in from the
    first horizon (constant alpha).  Other regimes are still reported.
    """
    if config.market.synthetic and config.market.alpha.kind != "constant":
        logger.warning("decomposition check on %s alpha: the product form is not expected to hold",
                       config.market.alpha.kind)
    if sweep is None:
        sweep = run_sweep(config, jobs)
    return decomposition_table(sweep), sweep


# --------------------------------------------------------------------------- bi-level


@dataclass
class BilevelSeedResult:
    seed: int
    weights: np.ndarray  # lambda at the restored checkpoint
    argmax_horizon: int
    trajectory: list  # (step, entropy, weights)
    history: dict
    adaptive: MetricsReport
    standard: MetricsReport


@dataclass
class BilevelResult:
    candidates: tuple
    target: int
    warmup_epochs: int
    seeds: list = field(default_factory=list)

    @property
    def mean_ic_adaptive(self) -> float:
        return float(np.mean([s.adaptive.ic_mean for s in self.seeds]))

    @property
    def mean_ic_standard(self) -> float:
        return float(np.mean([s.standard.ic_mean for s in self.seeds]))

    @property
    def argmax_horizons(self) -> list:
        return [s.argmax_horizon for s in self.seeds]


def _bilevel_task(task) -> BilevelSeedResult:
    config, seed, warmup = task
    data = seed_data(config, seed)
    X, R = data.part("train")
    VX, VR = data.part("val")
    bcfg = config.bilevel_config(seed) if warmup is None else config.bilevel_config(seed, warmup_epochs=warmup)
    res = train_adaptive(X, R, VX, VR, config.candidates, config.target, bcfg, config.train_config(seed),
                         config.arch, config.hidden_width)
    adaptive, _ = _test_report(config, data, res.model)
    standard_model = _train_on(config, data, lambda R_: _labels(R_, [config.target])[..., 0])
    standard, _ = _test_report(config, data, standard_model)
    return BilevelSeedResult(int(seed), res.lam.weights.copy(), res.argmax_horizon(config.candidates),
                             res.trajectory, res.history, adaptive, standard)


def run_bilevel_experiment(config: ExperimentConfig, jobs: int = 1, warmup_epochs: int | None = None) -> BilevelResult:
    """Adaptive-horizon training next to standard target-horizon training, seed by seed."""
    warm = config.bilevel.warmup_epochs if warmup_epochs is None else int(warmup_epochs)
    tasks = [(config, int(s), warmup_epochs) for s in config.seeds]
    result = BilevelResult(config.candidates, config.target, warm, run_tasks(_bilevel_task, tasks, jobs))
    logger.info("bi-level (warm-up %d): argmax horizons %s, mean IC %.5f vs %.5f on the target",
                warm, result.argmax_horizons, result.mean_ic_adaptive, result.mean_ic_standard)
    return result


# --------------------------------------------------------------------------- baselines


def top_k_horizons(weights, candidates, k: int) -> tuple:
    """The ``k`` candidates with the largest weights (ties to the smaller horizon), ascending."""
    w = np.asarray(weights, dtype=float)
    order = np.argsort(-w, kind="stable")[:k]
    return tuple(sorted(int(candidates[i]) for i in order))


def method_names(k: int) -> tuple:
    return ("bilevel-best-label", "naive-averaging", "equal-weight-MTL", f"top{k}-averaging", f"top{k}-MTL")


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    seed: int
    horizons: tuple
    report: MetricsReport


@dataclass
class ComparisonResult:
    methods: tuple
    rows: list
    notes: list = field(default_factory=list)

    def mean_ic(self, method: str) -> float:
        vals = [r.report.ic_mean for r in self.rows if r.method == method]
        if not vals:
            raise DomainError(f"no rows for method {method!r}")
        return float(np.mean(vals))


def _comparison_task(task) -> ComparisonRow:
    config, seed, method, horizons, multitask = task
    data = seed_data(config, seed)
    if multitask:
        label_fn = lambda R: _labels(R, horizons)  # noqa: E731
    else:
        label_fn = lambda R: _labels(R, horizons).mean(axis=-1)  # noqa: E731
    report, _ = _test_report(config, data, _train_on(config, data, label_fn))
    return ComparisonRow(method, int(seed), tuple(horizons), report)


def run_baseline_comparison(config: ExperimentConfig, bilevel: BilevelResult, jobs: int = 1) -> ComparisonResult:
    """Five training schemes per seed, all tested on the target horizon.

    ``bilevel-best-label`` trains on the single candidate with the largest
    learned weight; the top-k variants use the ``top_k`` largest weights.  With
    fewer than ``top_k`` candidates the top-k variants use every candidate.
    """
    k = config.top_k
    names = method_names(k)
    notes = []
    if len(config.candidates) < k:
        msg = f"only {len(config.candidates)} candidates: top-{k} variants use all candidates"
        logger.warning(msg)
        notes.append(msg)
    everything = tuple(config.candidates)
    tasks = []
    for s in bilevel.seeds:
        top = top_k_horizons(s.weights, config.candidates, k)
        if len(set(np.round(s.weights, 15))) == 1:
            notes.append(f"seed {s.seed}: uniform weights, top-{k} falls back to the smallest horizons {list(top)}")
        tasks += [
            (config, s.seed, names[0], (s.argmax_horizon,), False),
            (config, s.seed, names[1], everything, False),
            (config, s.seed, names[2], everything, True),
            (config, s.seed, names[3], top, False),
            (config, s.seed, names[4], top, True),
        ]
    return ComparisonResult(names, run_tasks(_comparison_task, tasks, jobs), notes)


# --------------------------------------------------------------------------- theory check


@dataclass(frozen=True)
class TheoryCheckRow:
    delta: int
    J: float
    mc_mean: float  # mean squared test correlation over trials
    mc_stderr: float

    @property
    def rel_err(self) -> float:
        return abs(self.mc_mean - self.J) / self.J


def _trial_seed(seed: int, trial: int, stream: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(stream, trial)).generate_state(1)[0])


def run_theory_check(params: MarketParams, n_train: int, n_test: int, trials: int, seed: int = 0) -> list:
    """Monte Carlo of the OLS pipeline against :func:`closed_form_J` on the integer grid.

    Each trial draws ``n_train`` training assets and ``n_test`` test assets (one
    period each), fits OLS on every raw proxy label and records the squared
    test correlation with the target-horizon return.
    """
    if trials < 1 or n_train <= params.d:
        raise DomainError("need trials >= 1 and n_train > d")
    inputs = TheoryInputs.from_market(params, n_train)
    grid = params.horizons
    sq = np.empty((trials, grid.size))
    train_p = MarketParams(params.d, n_train, params.delta_max, params.sigma2, params.delta0, params.alpha, params.w_star)
    test_p = MarketParams(params.d, n_test, params.delta_max, params.sigma2, params.delta0, params.alpha, params.w_star)
    for t in range(trials):
        tr = simulate(train_p, 1, _trial_seed(seed, t, 0))
        te = simulate(test_p, 1, _trial_seed(seed, t, 1))
        S, St, target = tr.exposures[0], te.exposures[0], te.returns[0, :, -1]
        for j, delta in enumerate(grid):
            w = ols_fit(S, tr.returns[0, :, delta - 1])
            sq[t, j] = pearson_ic(predict(w, St), target) ** 2
    J = np.asarray(closed_form_J(inputs, grid.astype(float)))
    se = sq.std(axis=0) / math.sqrt(trials)
    return [TheoryCheckRow(int(d), float(j), float(m), float(s)) for d, j, m, s in zip(grid, J, sq.mean(axis=0), se)]

