"""Acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (also collected in the terminal summary).
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats

from dco.cli import main
from dco.conformal import conformal_quantile, k_alpha
from dco.harness import ExperimentConfig, _data_and_plan, ablate_split_ratios, derive_seed, run_experiment, run_seed
from dco.riskcontrol import BqConfig, bq_calibrate, feasibility_curve
from dco.scores import (
    IndexLog,
    PrecomputedTask,
    Samples,
    ScoreTable,
    SyntheticTask,
    classification_candidates,
    fit_candidate,
    regression_candidates,
)
from dco.stats import PairedSamples, UniformSampler, check_quantile_concentration, wilcoxon_signed_rank
from dco.tuning import GridPolicy, ThresholdGrid, dco_tune, tuning_sample_size


# -- 1 ------------------------------------------------------------------------


def test_criterion_01_exact_coverage_band(record_criterion):
    task = SyntheticTask("regression", dimension=5, rng_seed=0)
    cand = regression_candidates()[:1]
    n_test, trials, m = 500, 2000, 99
    cfg = ExperimentConfig(n_train=50, budget=2 * m, n_test=n_test, tune_ratio="50/50", master_seed=1)
    start = time.perf_counter()
    rep = run_experiment(task, cand, "1/5", ["split_cp"], trials, cfg)
    elapsed = time.perf_counter() - start
    assert {t.m_cal for t in rep.trials} == {m}
    target = Fraction(k_alpha(m, "1/5"), m + 1)
    # per-trial coverage: Beta(k, m + 1 - k) conditional coverage plus binomial test noise
    a, b = target * (m + 1), (1 - target) * (m + 1)
    var_cond = float(a * b / ((a + b) ** 2 * (a + b + 1)))
    e_c1c = float(target) * (1 - float(target)) - var_cond
    sigma = math.sqrt((var_cond + e_c1c / n_test) / trials)
    mean = rep.summary("split_cp")["coverage"]["mean"]
    ok = abs(mean - float(target)) <= 3 * sigma and elapsed < 60
    record_criterion(1, "exact coverage band", ok, f"mean {mean:.4f}, target {float(target):.2f} ± {3 * sigma:.4f}, {elapsed:.1f} s")
    assert ok


# -- 2 ------------------------------------------------------------------------


def test_criterion_02_overflow_branch(record_criterion):
    task = SyntheticTask("regression", dimension=3, rng_seed=0)
    cfg = ExperimentConfig(n_train=30, budget=8, n_test=50, tune_ratio="50/50")
    rep = run_experiment(task, regression_candidates()[:1], 0.1, ["split_cp"], 100, cfg)
    ts = rep.by_method("split_cp")
    ok = len(ts) == 100 and all(t.m_cal == 4 and math.isinf(t.threshold) and t.coverage == 1.0 for t in ts)
    record_criterion(2, "overflow branch", ok, f"{sum(math.isinf(t.threshold) for t in ts)}/100 infinite thresholds")
    assert ok


# -- 3 ------------------------------------------------------------------------


def test_criterion_03_dco_pipeline_coverage(record_criterion):
    task = SyntheticTask("classification", dimension=8, class_count=10, rng_seed=0)
    cands = classification_candidates()
    assert len(cands) == 16
    cfg = ExperimentConfig(n_train=150, budget=300, n_test=500, tune_ratio="100/200")
    rep = run_experiment(task, cands, "1/5", ["dco", "direct"], 1000, cfg)
    assert {t.m_cal for t in rep.by_method("dco")} == {200}
    dco, direct = rep.summary("dco")["coverage"], rep.summary("direct")["coverage"]
    sigma = dco["std"] / math.sqrt(dco["n"])
    lo, hi = 0.8, float(Fraction(k_alpha(200, "1/5"), 201))
    in_band = lo - 3 * sigma <= dco["mean"] <= hi + 3 * sigma
    differs = direct["mean"] != dco["mean"]
    wider = direct["std"] >= dco["std"]
    ok = in_band and differs and wider
    detail = (
        f"dco {dco['mean']:.4f} ± {dco['std']:.4f} in [{lo:.3f}, {hi:.4f}] ± {3 * sigma:.4f}; "
        f"direct {direct['mean']:.4f} ± {direct['std']:.4f}"
    )
    record_criterion(3, "DCO pipeline coverage", ok, detail)
    assert ok


# -- 4 ------------------------------------------------------------------------


def test_criterion_04_conservativeness(record_criterion):
    task = SyntheticTask("regression", rng_seed=0)
    rep = run_experiment(task, regression_candidates(), "1/5", ["dco", "bq_fixed"], 200, ExperimentConfig())
    dco, bq = rep.summary("dco"), rep.summary("bq_fixed")
    assert dco["n_excluded_from_size"] == bq["n_excluded_from_size"] == 0
    size_p = next(w["p_value"] for w in rep.wilcoxon() if w["metric"] == "avg_size")
    ok = (
        bq["coverage"]["mean"] >= dco["coverage"]["mean"]
        and bq["avg_size"]["mean"] >= dco["avg_size"]["mean"]
        and size_p < 0.01
    )
    detail = (
        f"coverage bq {bq['coverage']['mean']:.4f} vs dco {dco['coverage']['mean']:.4f}; "
        f"width bq {bq['avg_size']['mean']:.4f} vs dco {dco['avg_size']['mean']:.4f}; p = {size_p:.2e}"
    )
    record_criterion(4, "conservativeness direction", ok, detail)
    assert ok


# -- 5 ------------------------------------------------------------------------


def test_criterion_05_bq_analytic_oracle(record_criterion):
    m, M = 100, 1000
    worst = 0.0
    ok = True
    for alpha in (0.1, 0.2):
        for j in (0, 1, 5, 20):
            grid_vals = np.arange(j + 1, dtype=float)

            def losses_at(lam, j=j):
                return (np.arange(m) < max(j - int(lam), 0)).astype(float)

            curve = feasibility_curve(losses_at, ThresholdGrid(grid_vals), alpha, BqConfig())
            for lam, p_hat in zip(grid_vals, curve):
                ones = max(j - int(lam), 0)
                p = scipy.stats.beta(ones + 1, m - ones).cdf(alpha)
                tol = 3 * math.sqrt(p * (1 - p) / M)
                worst = max(worst, abs(p_hat - p) - tol)
                ok &= abs(p_hat - p) <= tol + 1e-12
    record_criterion(5, "BQ analytic oracle", ok, f"largest excess over tolerance {worst:+.4f}")
    assert ok


# -- 6 ------------------------------------------------------------------------


def test_criterion_06_asymptotic_agreement(record_criterion):
    task = SyntheticTask("regression", rng_seed=0)
    model = fit_candidate(task, task.sample(150, 99), regression_candidates()[0])
    medians = []
    for n in (100, 1000, 10000):
        gaps = []
        for s in range(50):
            pool = task.sample(n, derive_seed(7, n, s))
            rule, _ = bq_calibrate(model, pool, "1/5", BqConfig(rng_seed=s))
            q = conformal_quantile(model.scores(pool.X, pool.y), "1/5")
            gaps.append(abs(rule.threshold - q))
        medians.append(float(np.median(gaps)))
    ok = medians[0] > medians[1] > medians[2] and medians[2] < 0.5 * medians[0]
    record_criterion(6, "asymptotic agreement", ok, "median gaps " + " / ".join(f"{v:.4f}" for v in medians))
    assert ok


# -- 7 ------------------------------------------------------------------------

GOOD_RISKS = (0.02, 0.05, 0.08, 0.10)
BAD_RISKS = (0.21, 0.25, 0.30, 0.40)


def oracle_class(m: int, rng):
    """Eight candidates with known population risk and size.

    The true label's score is uniform on (0, 1) and each candidate's grid is the
    single threshold ``1 - R``, so its population risk is exactly ``R``. Low-risk
    candidates always include the other label (size ``2 - R``), high-risk ones
    never do (size ``1 - R``), so a high-risk candidate that slips through the
    constraint is always preferred by size.
    """
    u = rng.uniform(0, 1, m)
    labels = np.zeros(m, dtype=np.int64)
    ids = tuple(str(i) for i in range(m))
    tables, grids, risks = {}, {}, {}
    for i, r in enumerate(GOOD_RISKS + BAD_RISKS):
        cid = f"cand_{i}"
        other = 0.0 if r in GOOD_RISKS else 2.0
        tables[cid] = ScoreTable(np.column_stack([u, np.full(m, other)]), labels, ids)
        grids[cid] = (1.0 - r,)
        risks[cid] = r
    return PrecomputedTask("oracle", tables), grids, risks


def test_criterion_07_oracle_inequality(record_criterion):
    eps_r, eta, alpha, repeats = 0.05, 0.1, 0.2, 200
    # losses in {0, 1}; sizes in [0, 2]
    m = tuning_sample_size(eps_r, 0.1, eta, 8, 2.0)
    rng = np.random.default_rng(2024)
    good = 0
    for _ in range(repeats):
        task, grids, risks = oracle_class(m, rng)
        data = task.sample()
        res = dco_tune(task, data.view([]), data, task.candidates, alpha, GridPolicy("explicit", per_candidate=grids), tighten=eps_r)
        good += risks[res.selected.id] <= alpha
    rate = good / repeats
    floor = 0.9 - 3 * math.sqrt(0.9 * 0.1 / repeats)
    ok = rate >= floor
    record_criterion(7, "oracle inequality", ok, f"m_tune {m}, rate {rate:.3f} >= {floor:.3f}")
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_criterion_08_quantile_concentration(record_criterion):
    r = check_quantile_concentration(UniformSampler(), 0.1, 1000, t=0.05, c=1.0, trials=10_000, seed=0)
    ok = r.passed and r.bound == pytest.approx(2 * math.exp(-2 * 1000 * 0.048**2))
    record_criterion(8, "quantile concentration", ok, f"observed {r.observed_rate:.4f} vs bound {r.bound:.4f}")
    assert ok


# -- 9 ------------------------------------------------------------------------


def brute_force_p(d):
    d = d[d != 0]
    ranks = scipy.stats.rankdata(np.abs(d))
    w = ranks[d > 0].sum()
    sums = np.array([np.dot(s, ranks) for s in itertools.product((0, 1), repeat=d.size)])
    return min(1.0, 2 * min(np.mean(sums <= w + 1e-9), np.mean(sums >= w - 1e-9)))


def test_criterion_09_wilcoxon(record_criterion):
    rng = np.random.default_rng(9)
    exact_err, checked = 0.0, 0
    while checked < 50:
        n = int(rng.integers(1, 13))
        d = np.round(rng.normal(0.3, 1.0, n), 1)
        if not np.any(d != 0):
            continue
        p = wilcoxon_signed_rank(PairedSamples(d, np.zeros(n)), mode="exact").p_value
        exact_err = max(exact_err, abs(p - brute_force_p(d)))
        checked += 1
    approx_err = 0.0
    for _ in range(50):
        d = rng.normal(0.4, 1.0, 12)
        e = wilcoxon_signed_rank(PairedSamples(d, np.zeros(12)), mode="exact").p_value
        a = wilcoxon_signed_rank(PairedSamples(d, np.zeros(12)), mode="normal").p_value
        approx_err = max(approx_err, abs(e - a))
    ok = exact_err < 1e-12 and approx_err < 0.02
    record_criterion(9, "Wilcoxon correctness", ok, f"exact max error {exact_err:.1e}, normal max error {approx_err:.4f}")
    assert ok


# -- 10 -----------------------------------------------------------------------


def test_criterion_10_split_ratio_trend(record_criterion):
    task = SyntheticTask("regression", dimension=5, rng_seed=0)
    cands = regression_candidates((0.1, 0.2, 0.3, 0.4, 0.5, 1.0))
    ratios = ["20/80", "33/67", "50/50", "67/33", "80/20"]
    cfg = ExperimentConfig(n_train=30, budget=300, n_test=500, fixed_train=True)
    reps = dict(zip(ratios, ablate_split_ratios(task, cands, "1/5", ratios, 200, cfg)))
    p95_std = {r: rep.summary("dco")["p95_size"]["std"] for r, rep in reps.items()}
    stab = {r: rep.stability("dco") for r, rep in reps.items()}
    ok = p95_std["80/20"] > p95_std["20/80"] and stab["33/67"] >= stab["20/80"]
    detail = (
        f"P95 std 20/80 {p95_std['20/80']:.4f} vs 80/20 {p95_std['80/20']:.4f}; "
        f"stability 20/80 {stab['20/80']:.3f} vs 33/67 {stab['33/67']:.3f}"
    )
    record_criterion(10, "split-ratio trend", ok, detail)
    assert ok


# -- 11 -----------------------------------------------------------------------


def test_criterion_11_determinism(record_criterion, tmp_path):
    conf = {
        "task": {"kind": "regression", "dimension": 5, "rng_seed": 0},
        "alpha": "1/5",
        "methods": ["dco", "direct", "bq_fixed", "split_cp"],
        "n_seeds": 20,
        "master_seed": 12345,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(conf))
    codes = [main(["experiment", "--config", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    a, b = (tmp_path / "a" / "report.json").read_bytes(), (tmp_path / "b" / "report.json").read_bytes()
    ok = codes == [0, 0] and a == b
    record_criterion(11, "determinism", ok, f"{len(a)} bytes, identical: {a == b}")
    assert ok


# -- 12 -----------------------------------------------------------------------


def test_criterion_12_data_hygiene(record_criterion):
    task = SyntheticTask("classification", dimension=4, class_count=5, rng_seed=0)
    cands = classification_candidates()[:4]
    cfg = ExperimentConfig(n_train=60, budget=100, n_test=100)
    leaks, mismatches = 0, 0
    for i in range(100):
        seed = derive_seed(cfg.master_seed, i)
        data, plan = _data_and_plan(task, cfg, seed)
        log = IndexLog()
        run_seed(task, cands, "1/5", ["dco"], cfg, i, plan=plan, data=data, read_log=log)
        read = log.indices
        held_out = set(plan.cal.tolist()) | set(plan.test.tolist())
        leaks += len(read & held_out)
        assert read == set(plan.train.tolist()) | set(plan.tune.tolist())
        # second route: poisoning cal and test rows must not change the tuning outcome
        X = data.X.copy()
        X[list(held_out)] = np.nan
        poisoned = Samples(X, data.y, data.indices)
        args = (cands, "1/5", cfg.grid)
        clean = dco_tune(task, data.view(plan.train), data.view(plan.tune), *args, seed=derive_seed(seed, 3))
        dirty = dco_tune(task, poisoned.view(plan.train), poisoned.view(plan.tune), *args, seed=derive_seed(seed, 3))
        mismatches += json.dumps(clean.to_dict(), default=str) != json.dumps(dirty.to_dict(), default=str)
    ok = leaks == 0 and mismatches == 0
    record_criterion(12, "data hygiene", ok, f"{leaks} held-out reads, {mismatches} poisoned-run differences over 100 trials")
    assert ok
