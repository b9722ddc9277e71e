"""Horizon sweeps for the three alpha regimes plus the decomposition check.

For each preset this writes the sweep tables into ``<out>/<scenario>/`` and
logs the smoothed-IC argmax next to the theoretical optimum.  The
constant-alpha decomposition run from ``configs/decompose.yaml`` goes into
``<out>/decompose/``.
"""

import argparse
import logging
from pathlib import Path

from horizon_lab.harness import reporting
from horizon_lab.harness.config import load_config, scenario_config
from horizon_lab.harness.experiments import run_decomposition_check, run_sweep
from horizon_lab.theory import TheoryInputs, optimal_horizon

logger = logging.getLogger("run_regimes")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("results/regimes"))
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--scenarios", nargs="+", default=["S1_Saturated", "S2_Linear", "S3_Hump"])
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    for scenario in args.scenarios:
        config = scenario_config(scenario)
        result = run_sweep(config, args.jobs)
        reporting.write_sweep(result, args.out / scenario, config)
        inputs = TheoryInputs.from_market(config.market.params(config.seeds[0]), config.n_train_samples)
        delta_star, _ = optimal_horizon(inputs, 0.01)
        logger.info("%s: smoothed argmax %d, theory optimum %.2f", scenario, result.argmax, delta_star)

    config = load_config(CONFIG_DIR / "decompose.yaml")
    rows, sweep = run_decomposition_check(config, args.jobs)
    out = args.out / "decompose"
    reporting.write_sweep(sweep, out, config)
    reporting.write_decomposition(rows, out, config)
    logger.info("decomposition: mean gap %.4f", sum(r.gap for r in rows) / len(rows))


if __name__ == "__main__":
    main()
