"""Acceptance criteria 1-10.

Each test checks one criterion at its stated tolerance (and runtime budget)
and prints a single ``criterion N: PASS|FAIL`` line, repeated in the pytest
terminal summary.  Expensive scenario runs come from session fixtures in
``conftest.py`` and are shared with the oracle tests.
"""

import time

import numpy as np
from _numeric import central_difference, relative_error
from conftest import CONFIG_DIR

from horizon_lab.apt_market import AlphaCurve, alpha_eval, make_market_params, simulate
from horizon_lab.bilevel import HorizonWeights, hypergradient, lookahead
from horizon_lab.forecaster import LINEAR, ONE_HIDDEN, init_model, loss_and_grad
from horizon_lab.harness import cli
from horizon_lab.harness.config import load_config, scenario_config
from horizon_lab.harness.experiments import run_decomposition_check, run_theory_check
from horizon_lab.harness.reporting import TIMESTAMP_KEY
from horizon_lab.metrics import pearson_ic, standardize_cross_section
from horizon_lab.theory import TheoryInputs, closed_form_J, decompose_correlation, log_constant, log_decomposition, optimal_horizon

SEEDS = (0, 1, 2, 3, 4)


# --------------------------------------------------------------------------- 1


def test_criterion_01_exact_identities(verdict):
    rng = np.random.default_rng(1)

    start = time.perf_counter()
    worst_a = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 200))
        x, y, z = rng.standard_normal((3, 3)) @ rng.standard_normal((3, n)) * rng.uniform(1e-3, 1e3)
        worst_a = max(worst_a, abs(decompose_correlation(x, y, z)[2] - pearson_ic(x, y)))
    time_a = time.perf_counter() - start

    start = time.perf_counter()
    worst_b = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 500))
        p, y = rng.standard_normal((2, n)) * rng.uniform(1e-3, 1e3, size=(2, 1)) + rng.normal(0, 50, size=(2, 1))
        mse = np.mean((standardize_cross_section(p) - standardize_cross_section(y)) ** 2)
        worst_b = max(worst_b, abs(mse - (2 - 2 * pearson_ic(p, y))))
    time_b = time.perf_counter() - start

    start = time.perf_counter()
    worst_c = 0.0
    for alpha in (AlphaCurve("constant", 1.0), AlphaCurve("linear", 0.05), AlphaCurve("saturating", 0.2, tau=3.0)):
        inp = TheoryInputs(alpha, 0.01, 1.0, 1.0, 20)
        grid = np.linspace(0.05, 20, 400)
        gain, penalty = log_decomposition(inp, grid)
        J = np.asarray(closed_form_J(inp, grid))
        worst_c = max(worst_c, float(np.max(np.abs(np.exp(gain - penalty + log_constant(inp)) - J) / J)))
    time_c = time.perf_counter() - start

    ok = worst_a < 1e-10 and worst_b < 1e-10 and worst_c < 1e-12 and max(time_a, time_b, time_c) < 1.0
    verdict(1, ok, f"identity errors a={worst_a:.1e} b={worst_b:.1e} c={worst_c:.1e} (rel); "
                   f"times {time_a:.3f}s/{time_b:.3f}s/{time_c:.3f}s")


# --------------------------------------------------------------------------- 2


def test_criterion_02_gradient_suite(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = {}
    for arch in (LINEAR, ONE_HIDDEN):
        loss_err, hyper_err = 0.0, 0.0
        for _ in range(20):
            d, n = int(rng.integers(2, 6)), int(rng.integers(10, 30))
            model = init_model(arch, d, seed=int(rng.integers(1 << 30)), hidden_width=int(rng.integers(2, 6)))
            model = model.with_weights(model.weights + 0.3 * rng.standard_normal(model.weights.size))
            X = rng.standard_normal((2, n, d))
            y = standardize_cross_section(rng.standard_normal((2, n)), axis=1)
            _, g = loss_and_grad(model, X, y)
            fd = central_difference(lambda w: loss_and_grad(model.with_weights(w), X, y)[0], model.weights)
            loss_err = max(loss_err, relative_error(g, fd))

            k = int(rng.integers(2, 5))
            Xs, Xq = rng.standard_normal((2, 2, n, d))
            Zs = standardize_cross_section(rng.standard_normal((2, n, k)), axis=1)
            zq = standardize_cross_section(rng.standard_normal((2, n)), axis=1)
            lam = HorizonWeights(rng.standard_normal(k))
            eta = float(rng.uniform(0.05, 0.5))
            hg, _, _ = hypergradient(model, lam, eta, (Xs, Zs), (Xq, zq))
            outer = lambda z: loss_and_grad(lookahead(model, HorizonWeights(z), eta, Xs, Zs), Xq, zq)[0]  # noqa: E731
            hyper_err = max(hyper_err, relative_error(hg, central_difference(outer, lam.logits)))
        worst[arch] = (loss_err, hyper_err)
    elapsed = time.perf_counter() - start
    ok = all(a < 1e-4 and b < 1e-4 for a, b in worst.values()) and elapsed < 10
    detail = "; ".join(f"{arch}: grad {a:.1e}, hypergrad {b:.1e}" for arch, (a, b) in worst.items())
    verdict(2, ok, f"max relative error vs central differences ({detail}); {elapsed:.2f}s")


# --------------------------------------------------------------------------- 3


def test_criterion_03_generator_law(verdict):
    start = time.perf_counter()
    p = make_market_params(5, 1000, 20, 1.0, 1.0, AlphaCurve("saturating", 1.0, tau=3.0), seed=3)
    s = simulate(p, 100, seed=3)  # N * T = 1e5
    alphas = np.asarray(alpha_eval(p.alpha, p.horizons)[0])
    r = s.returns.reshape(-1, p.delta_max)
    eps = r - s.signal.reshape(-1, 1) * alphas
    var_ratio = r.var(axis=0) / (alphas**2 + p.sigma2 * (p.horizons + p.delta0))
    eps_c = eps - eps.mean(axis=0)
    nest = (eps_c * eps_c[:, -1:]).mean(axis=0) / eps_c.var(axis=0)
    elapsed = time.perf_counter() - start
    ok = np.all(np.abs(var_ratio - 1) <= 0.03) and np.all((nest >= 0.97) & (nest <= 1.03)) and elapsed < 30
    verdict(3, ok, f"Var ratio in [{var_ratio.min():.4f}, {var_ratio.max():.4f}], "
                   f"nesting ratio in [{nest.min():.4f}, {nest.max():.4f}]; {elapsed:.2f}s")


# --------------------------------------------------------------------------- 4


def test_criterion_04_theory_vs_simulation(verdict):
    start = time.perf_counter()
    p = make_market_params(5, 2000, 20, 1.0, 1.0, AlphaCurve("saturating", 1.0, tau=3.0), seed=4)
    rows = run_theory_check(p, n_train=2000, n_test=20_000, trials=50, seed=4)
    elapsed = time.perf_counter() - start
    worst = max(rows, key=lambda r: r.rel_err)
    ok = len(rows) == 20 and all(r.rel_err <= 0.10 for r in rows) and elapsed < 300
    verdict(4, ok, f"max relative error {worst.rel_err:.4f} at delta={worst.delta} "
                   f"(J={worst.J:.5f}, MC={worst.mc_mean:.5f}); {elapsed:.1f}s")


# --------------------------------------------------------------------------- 5


def test_criterion_05_three_regimes(verdict, scenario_sweeps):
    s1, s2, s3 = (scenario_sweeps(s) for s in ("S1_Saturated", "S2_Linear", "S3_Hump"))
    cfg = scenario_config("S3_Hump")
    delta_star, _ = optimal_horizon(TheoryInputs.from_market(cfg.market.params(0), cfg.n_train_samples), 0.01)
    total = s1.seconds + s2.seconds + s3.seconds
    ok = (
        s1.value.argmax == s1.value.candidates[0]
        and s2.value.argmax == s2.value.candidates[-1]
        and abs(s3.value.argmax - delta_star) <= 2
        and all(len(s.value.seeds) == 5 for s in (s1, s2, s3))
        and total < 600
    )
    verdict(5, ok, f"smoothed argmax S1={s1.value.argmax} (want {s1.value.candidates[0]}), "
                   f"S2={s2.value.argmax} (want {s2.value.candidates[-1]}), "
                   f"S3={s3.value.argmax} (theory {delta_star:.2f}); {total:.1f}s")


# --------------------------------------------------------------------------- 6


def test_criterion_06_decomposition_gap(verdict):
    start = time.perf_counter()
    cfg = load_config(CONFIG_DIR / "decompose.yaml")
    rows, _ = run_decomposition_check(cfg)
    elapsed = time.perf_counter() - start
    gaps = [r.gap for r in rows]
    ok = (cfg.market.alpha.kind == "constant" and tuple(cfg.seeds) == SEEDS and np.mean(gaps) <= 0.02
          and elapsed < 300)
    verdict(6, ok, f"mean gap {np.mean(gaps):.4f}, max gap {max(gaps):.4f} over {len(rows)} horizons, "
                   f"N_train={cfg.n_train_samples}; {elapsed:.1f}s")


# --------------------------------------------------------------------------- 7


def test_criterion_07_bilevel_recovery(verdict, scenario_sweeps, s3_bilevel):
    sweep_argmax = scenario_sweeps("S3_Hump").value.argmax
    res = s3_bilevel.value
    cands = list(res.candidates)
    hits = [abs(cands.index(a) - cands.index(sweep_argmax)) <= 2 for a in res.argmax_horizons]
    ok = (tuple(s.seed for s in res.seeds) == SEEDS and sum(hits) >= 4
          and res.mean_ic_adaptive >= res.mean_ic_standard and s3_bilevel.seconds < 900)
    verdict(7, ok, f"argmax lambda {res.argmax_horizons} vs sweep argmax {sweep_argmax}: {sum(hits)}/5 within 2; "
                   f"mean IC bi-level {res.mean_ic_adaptive:.5f} vs target-only {res.mean_ic_standard:.5f}; "
                   f"{s3_bilevel.seconds:.1f}s")


# --------------------------------------------------------------------------- 8


def test_criterion_08_warmup_effect(verdict, s3_bilevel, s3_bilevel_no_warmup):
    warm, cold = s3_bilevel.value, s3_bilevel_no_warmup.value
    assert warm.warmup_epochs == 3 and cold.warmup_epochs == 0
    mean_warm, mean_cold = np.mean(warm.argmax_horizons), np.mean(cold.argmax_horizons)
    elapsed = s3_bilevel.seconds + s3_bilevel_no_warmup.seconds
    ok = mean_cold < mean_warm and elapsed < 900
    verdict(8, ok, f"mean argmax without warm-up {mean_cold:.1f} {cold.argmax_horizons} vs "
                   f"with warm-up {mean_warm:.1f} {warm.argmax_horizons} (want strictly smaller); {elapsed:.1f}s")


# --------------------------------------------------------------------------- 9


def test_criterion_09_top5_averaging(verdict, s3_comparison):
    comp = s3_comparison.value
    top, naive = comp.mean_ic("top5-averaging"), comp.mean_ic("naive-averaging")
    seeds = sorted({r.seed for r in comp.rows})
    ok = tuple(seeds) == SEEDS and top >= naive and s3_comparison.seconds < 1200
    verdict(9, ok, f"mean IC top-5 averaging {top:.5f} vs all-candidate averaging {naive:.5f}; "
                   f"{s3_comparison.seconds:.1f}s")


# --------------------------------------------------------------------------- 10


def _stored_bytes(directory):
    """Every output file's bytes, with the JSON timestamp line removed."""
    out = {}
    for path in sorted(directory.iterdir()):
        lines = path.read_bytes().splitlines(keepends=True)
        if path.suffix == ".json":
            lines = [ln for ln in lines if not ln.lstrip().startswith(f'"{TIMESTAMP_KEY}"'.encode())]
        out[path.name] = b"".join(lines)
    return out


def test_criterion_10_determinism(verdict, tmp_path):
    config = CONFIG_DIR / "quick.yaml"
    commands = ("generate", "sweep", "decompose", "bilevel", "compare")
    mismatched = []
    n_files = 0
    for command in commands:
        a, b = tmp_path / f"{command}_a", tmp_path / f"{command}_b"
        assert cli.main([command, "--config", str(config), "--out", str(a), "--jobs", "1"]) == 0
        assert cli.main([command, "--config", str(config), "--out", str(b), "--jobs", "2"]) == 0
        first, second = _stored_bytes(a), _stored_bytes(b)
        n_files += len(first)
        if first.keys() != second.keys():
            mismatched.append(f"{command}: file sets differ")
        mismatched += [f"{command}/{name}" for name in first if first[name] != second.get(name)]
    theory_a, theory_b = tmp_path / "theory_a", tmp_path / "theory_b"
    for out in (theory_a, theory_b):
        assert cli.main(["theory", "curve", "--config", str(config), "--out", str(out)]) == 0
    if _stored_bytes(theory_a) != _stored_bytes(theory_b):
        mismatched.append("theory_curve.csv")
    ok = not mismatched and n_files > 0
    verdict(10, ok, f"{n_files + 1} files compared across reruns (jobs=1 vs jobs=2), "
                    f"mismatches: {mismatched or 'none'}")
