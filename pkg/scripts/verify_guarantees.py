"""Monte Carlo checks of the finite-sample and asymptotic calibration properties.

1. split conformal coverage against the exact k/(m+1) value for several m
2. BQ feasibility probability against the Beta CDF for binary losses
3. gap between the BQ threshold and the conformal quantile as the pool grows
4. quantile concentration rate against its exponential bound

    python3 scripts/verify_guarantees.py --trials 2000
"""

import argparse
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from dco.conformal import conformal_quantile, k_alpha
from dco.harness import ExperimentConfig, derive_seed, run_experiment
from dco.riskcontrol import BqConfig, bq_calibrate, feasibility_curve
from dco.scores import SyntheticTask, fit_candidate, regression_candidates
from dco.stats import UniformSampler, check_quantile_concentration
from dco.tuning import ThresholdGrid


@dataclass(frozen=True)
class Settings:
    alpha: str = "1/5"
    cal_sizes: tuple = (9, 19, 49, 99)
    trials: int = 2000
    n_test: int = 200
    pool_sizes: tuple = (100, 1000, 10000)
    pool_seeds: int = 50
    master_seed: int = 0


def coverage_band(s: Settings):
    task = SyntheticTask("regression", rng_seed=0)
    print(f"split conformal coverage, alpha = {s.alpha}, {s.trials} trials")
    print(f"  {'m':>5} {'k/(m+1)':>8} {'mean':>8} {'3 sigma':>8}")
    for m in s.cal_sizes:
        cfg = ExperimentConfig(n_train=50, budget=2 * m, n_test=s.n_test, master_seed=s.master_seed)
        rep = run_experiment(task, regression_candidates()[:1], s.alpha, ["split_cp"], s.trials, cfg)
        cov = rep.summary("split_cp")["coverage"]
        target = k_alpha(m, s.alpha) / (m + 1)
        print(f"  {m:>5} {target:>8.4f} {cov['mean']:>8.4f} {3 * cov['std'] / math.sqrt(cov['n']):>8.4f}")


def beta_oracle():
    m, M = 100, 1000
    print("BQ feasibility vs Beta CDF (m = 100, M = 1000)")
    for alpha in (0.1, 0.2):
        for j in (0, 1, 5, 20):
            losses = (np.arange(m) < j).astype(float)
            p_hat = feasibility_curve(lambda lam: losses, ThresholdGrid([0.0]), alpha, BqConfig())[0]
            p = scipy.stats.beta(j + 1, m - j).cdf(alpha)
            tol = 3 * math.sqrt(p * (1 - p) / M)
            print(f"  alpha {alpha:<4} j {j:>2}: estimate {p_hat:.4f}, exact {p:.4f}, tolerance {tol:.4f}")


def bq_gap(s: Settings):
    task = SyntheticTask("regression", rng_seed=0)
    model = fit_candidate(task, task.sample(150, 99), regression_candidates()[0])
    print("median |BQ threshold - conformal quantile| by pool size")
    for n in s.pool_sizes:
        gaps = []
        for i in range(s.pool_seeds):
            pool = task.sample(n, derive_seed(7, n, i))
            rule, _ = bq_calibrate(model, pool, s.alpha, BqConfig(rng_seed=i))
            gaps.append(abs(rule.threshold - conformal_quantile(model.scores(pool.X, pool.y), s.alpha)))
        print(f"  n = {n:>6}: {np.median(gaps):.4f}")


def concentration():
    print("quantile concentration, uniform scores, alpha = 0.1, c = 1")
    for m, t in ((1000, 0.05), (1000, 0.03), (5000, 0.02)):
        r = check_quantile_concentration(UniformSampler(), 0.1, m, t=t, c=1.0, trials=10_000)
        print(f"  m {m:>5} t {t:<5}: observed {r.observed_rate:.4f}, bound {r.bound:.4f}, passed {r.passed}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trials", type=int, default=Settings.trials)
    args = p.parse_args(argv)
    s = Settings(trials=args.trials)
    coverage_band(s)
    beta_oracle()
    bq_gap(s)
    concentration()


if __name__ == "__main__":
    main()
