"""Threshold progression on a single seed: tuning, recalibration and BQ.

    python3 scripts/threshold_trace.py --seed-index 0 --kind classification
"""

import argparse

from dco.harness import ExperimentConfig, run_seed
from dco.scores import SyntheticTask, classification_candidates, regression_candidates

METHODS = ("dco", "bq_fixed", "bq_recalibrate_dco", "split_cp", "direct")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kind", choices=("regression", "classification"), default="regression")
    p.add_argument("--seed-index", type=int, default=0)
    p.add_argument("--alpha", default="1/5")
    args = p.parse_args(argv)

    if args.kind == "regression":
        task, cands = SyntheticTask("regression", rng_seed=0), regression_candidates()
        cfg = ExperimentConfig()
    else:
        task = SyntheticTask("classification", dimension=8, class_count=10, rng_seed=0)
        cands = classification_candidates()
        cfg = ExperimentConfig(budget=300, tune_ratio="100/200")
    trials = run_seed(task, cands, args.alpha, METHODS, cfg, args.seed_index)

    print(f"{'method':<20} {'candidate':<16} {'lambda_tune':>11} {'q_cal':>9} {'lambda_bq':>9} {'p_bq':>6} {'coverage':>9} {'size':>8}")
    for t in trials:
        tr = t.trace
        cells = [f"{tr[k]:.4f}" if k in tr else "-" for k in ("lambda_tune", "q_cal", "lambda_bq")]
        p_bq = f"{tr['p_bq']:.3f}" if "p_bq" in tr else "-"
        print(
            f"{t.method:<20} {t.selected_candidate:<16} {cells[0]:>11} {cells[1]:>9} {cells[2]:>9} {p_bq:>6}"
            f" {t.coverage:>9.4f} {t.avg_size:>8.4f}"
        )


if __name__ == "__main__":
    main()
