"""Tune:cal split-ratio ablation over a fixed non-training budget.

Prints coverage, width, P95 spread and selection stability per ratio, for one
or more master seeds, so the trend can be checked for robustness.

    python3 scripts/split_ratio_ablation.py --master-seeds 0 1 2
"""

import argparse
from dataclasses import dataclass, field, replace

from dco.harness import ExperimentConfig, ablate_split_ratios
from dco.scores import SyntheticTask, regression_candidates


@dataclass(frozen=True)
class AblationSettings:
    dimension: int = 5
    task_seed: int = 0
    prior_scales: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 1.0)
    ratios: tuple = ("20/80", "33/67", "50/50", "67/33", "80/20")
    alpha: str = "1/5"
    n_seeds: int = 200
    experiment: ExperimentConfig = field(
        default_factory=lambda: ExperimentConfig(n_train=30, budget=300, n_test=500, fixed_train=True)
    )


def run_once(s: AblationSettings, master_seed: int) -> dict:
    task = SyntheticTask("regression", dimension=s.dimension, rng_seed=s.task_seed)
    cands = regression_candidates(s.prior_scales)
    cfg = replace(s.experiment, master_seed=master_seed)
    reports = ablate_split_ratios(task, cands, s.alpha, list(s.ratios), s.n_seeds, cfg)
    print(f"master seed {master_seed}")
    print(f"  {'ratio':<7} {'coverage':>9} {'width':>8} {'P95 mean':>9} {'P95 std':>8} {'stability':>9}  modal")
    rows = {}
    for ratio, rep in zip(s.ratios, reports):
        summ = rep.summary("dco")
        freq = rep.selection_frequencies("dco")
        modal = max(freq, key=freq.get)
        rows[ratio] = (summ["p95_size"]["std"], rep.stability("dco"))
        print(
            f"  {ratio:<7} {summ['coverage']['mean']:>9.4f} {summ['avg_size']['mean']:>8.4f}"
            f" {summ['p95_size']['mean']:>9.4f} {summ['p95_size']['std']:>8.4f} {rep.stability('dco'):>9.3f}  {modal}"
        )
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--master-seeds", type=int, nargs="+", default=[0])
    p.add_argument("--seeds", type=int, default=AblationSettings.n_seeds)
    args = p.parse_args(argv)
    s = AblationSettings(n_seeds=args.seeds)
    for ms in args.master_seeds:
        rows = run_once(s, ms)
        p95_up = rows["80/20"][0] > rows["20/80"][0]
        stab_up = rows["33/67"][1] >= rows["20/80"][1]
        print(f"  P95 std larger at 80/20 than 20/80: {p95_up}; stability at 33/67 >= 20/80: {stab_up}\n")


if __name__ == "__main__":
    main()
