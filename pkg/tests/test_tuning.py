import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dco.scores import (
    Candidate,
    GaussianPosteriorModel,
    PrecomputedScores,
    Samples,
    SyntheticTask,
    classification_candidates,
    regression_candidates,
)
from dco.tuning import (
    CandidateRow,
    GridPolicy,
    ThresholdGrid,
    dco_tune,
    direct_tune,
    empirical_risk,
    empirical_size,
    min_feasible_lambda,
    quantile_grid,
    select_row,
    tuning_sample_size,
)

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def table_model(true_scores, other=10.0, cid="t"):
    """Two-label precomputed model: label 0 carries ``true_scores``, label 1 scores ``other``."""
    s = np.asarray(true_scores, dtype=float)
    table = np.column_stack([s, np.full(s.size, other)])
    model = PrecomputedScores(Candidate(cid, "precomputed", {}), table)
    data = Samples(np.arange(s.size)[:, None], np.zeros(s.size, dtype=np.int64), np.arange(s.size))
    return model, data


def row(cid, size, p95=1.0, lam=1.0, risk=0.1, feasible=True):
    return CandidateRow(Candidate(cid, "precomputed", {}), lam if feasible else None, risk, size, p95, feasible, lam)


# -- grids --------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        ThresholdGrid([])
    with pytest.raises(ValueError):
        ThresholdGrid([1.0, 1.0])
    assert ThresholdGrid([0.0, 2.0]).max == 2.0


def test_quantile_grid_levels():
    s = np.random.default_rng(0).normal(size=500)
    g = quantile_grid(s)
    levels = (np.arange(80) + 0.5) / 80
    expected = np.unique(np.append(np.quantile(s, levels), s.max()))
    np.testing.assert_array_equal(g.values, expected)
    assert g.max == s.max()
    assert len(g) == 81


# -- empirical risk and size --------------------------------------------------


def test_empirical_risk_examples():
    model, data = table_model([0.2, 0.5, 0.9])
    assert empirical_risk(model, data, 0.5) == pytest.approx(1 / 3)
    assert empirical_risk(model, data, math.inf) == 0.0
    assert empirical_risk(model, data, 0.1) == 1.0


def test_empirical_size_examples():
    task = SyntheticTask("classification", dimension=3, class_count=6, rng_seed=0)
    from dco.scores import fit_candidate

    data = task.sample(40, 1)
    model = fit_candidate(task, data, classification_candidates()[0])
    assert empirical_size(model, data, math.inf) == 6.0
    cand = Candidate("g", "regression", {"prior_scale": 1.0})
    gauss = GaussianPosteriorModel(cand, np.zeros(2), np.zeros((2, 2)), 1.0, -5.0, 5.0)
    single = Samples(np.zeros((1, 1)), np.zeros(1), np.arange(1))
    assert empirical_size(gauss, single, HALF_LOG_2PI + 0.5) == pytest.approx(2.0)


def test_risk_and_size_monotone_random_pairs():
    task = SyntheticTask("classification", dimension=3, class_count=5, rng_seed=2)
    from dco.scores import fit_candidate

    data = task.sample(100, 3)
    model = fit_candidate(task, data, classification_candidates()[7])
    rng = np.random.default_rng(4)
    for _ in range(100):
        l1, l2 = np.sort(rng.uniform(0, 6, 2))
        assert empirical_risk(model, data, l1) >= empirical_risk(model, data, l2)
        assert empirical_size(model, data, l1) <= empirical_size(model, data, l2)


def test_empty_tune_rejected():
    model, data = table_model([0.1, 0.2])
    with pytest.raises(ValueError):
        empirical_risk(model, data.view([]), 0.5)


# -- line search --------------------------------------------------------------


def test_min_feasible_examples():
    model, data = table_model([0.5, 1.5])
    grid = ThresholdGrid([0.0, 1.0, 2.0])
    assert min_feasible_lambda(model, data, 0.5, grid) == 1.0
    # risks on the grid are 1, 0.5, 0: the first at or below 0.99 is at 1.0
    assert min_feasible_lambda(model, data, 0.99, grid) == 1.0
    high, d2 = table_model([5.0, 6.0])
    assert min_feasible_lambda(high, d2, 0, grid) is None


@settings(max_examples=500, deadline=None)
@given(
    st.lists(st.integers(0, 30), min_size=1, max_size=25),
    st.lists(st.integers(0, 30), min_size=1, max_size=20, unique=True),
    st.integers(0, 19),
)
def test_line_search_equals_scan(scores, grid_pts, a20):
    alpha = a20 / 20 if a20 else 0
    # integer count comparison avoids float rounding in the oracle
    model, data = table_model(scores)
    grid = ThresholdGrid(sorted(float(g) for g in grid_pts))
    scan = None
    for g in grid.values:
        if 20 * int(np.sum(np.asarray(scores) > g)) <= a20 * len(scores):
            scan = float(g)
            break
    assert min_feasible_lambda(model, data, alpha, grid) == scan


# -- selection ----------------------------------------------------------------


def test_select_smallest_feasible_size():
    # representative-seed values for two feasible candidates
    a = row("cand_001", 22.105, p95=49.0, lam=6.180)
    b = row("cand_003", 22.216, p95=49.0, lam=6.095)
    best, fallback = select_row([b, a])
    assert best.candidate.id == "cand_001" and not fallback


def test_select_feasible_dominates_size():
    best, fallback = select_row([row("small", 1.0, feasible=False, risk=0.4), row("big", 9.0)])
    assert best.candidate.id == "big" and not fallback


def test_select_fallback_by_risk():
    best, fallback = select_row([row("a", 1.0, risk=0.30, feasible=False), row("b", 5.0, risk=0.25, feasible=False)])
    assert best.candidate.id == "b" and fallback


def sequential_filter_oracle(rows):
    """Apply the tie-break rules one at a time by filtering."""
    feas = [r for r in rows if r.feasible]
    if feas:
        pool = feas
        for key in ("emp_size", "p95_size", "lambda_min"):
            best = min(getattr(r, key) for r in pool)
            pool = [r for r in pool if getattr(r, key) == best]
        return min(pool, key=lambda r: r.candidate.id), False
    pool = rows
    for key in ("emp_risk", "emp_size"):
        best = min(getattr(r, key) for r in pool)
        pool = [r for r in pool if getattr(r, key) == best]
    return min(pool, key=lambda r: r.candidate.id), True


@settings(max_examples=300, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.booleans()),
        min_size=1,
        max_size=16,
    )
)
def test_selection_matches_oracle(specs):
    rows = [row(f"c{i:02d}", s, p, lam, risk / 4, f) for i, (s, p, lam, risk, f) in enumerate(specs)]
    got = select_row(rows)
    want = sequential_filter_oracle(rows)
    assert got[0].candidate.id == want[0].candidate.id and got[1] == want[1]


def test_dco_tune_selects_and_flags():
    m1, data = table_model(np.linspace(0, 1, 50), other=0.5, cid="wide")
    task_tables = {"wide": m1.table, "narrow": np.column_stack([np.linspace(0, 1, 50), np.full(50, 5.0)])}

    from dco.scores import PrecomputedTask, ScoreTable

    tables = {cid: ScoreTable(t, np.zeros(50, dtype=np.int64), tuple(map(str, range(50)))) for cid, t in task_tables.items()}
    task = PrecomputedTask("mem", tables)
    cands = task.candidates
    res = dco_tune(task, data.view([]), data, cands, 0.2)
    # both reach the constraint at the same lambda, "narrow" never includes label 1
    assert res.selected.id == "narrow"
    assert not res.fallback_used
    assert res.lambda_tune == res.selected_row.lambda_min
    d = res.to_dict()
    assert d["lambda_tune_status"] == "discard before deployment"
    assert {r["id"] for r in d["table"]} == {"wide", "narrow"}
    assert set(d["table"][0]) >= {"id", "score_variant", "params", "lambda", "status", "avg_size", "p95_size"}

    infeasible = dco_tune(task, data.view([]), data, cands, 0.2, GridPolicy("explicit", values=(-1.0,)))
    assert infeasible.fallback_used
    with pytest.raises(ValueError):
        dco_tune(task, data, data, [], 0.2)


def test_direct_tune_matches_single_candidate_dco():
    task = SyntheticTask("regression", dimension=3, rng_seed=0)
    train, tune = task.sample(60, 0), task.sample(80, 1)
    cand = regression_candidates()[0]
    d = direct_tune(task, train, tune, cand, 0.2)
    t = dco_tune(task, train, tune, [cand], 0.2)
    assert d.lambda_tune == t.lambda_tune
    assert d.feasible and not d.certified


def test_direct_tune_infeasible_returns_grid_max():
    task = SyntheticTask("regression", dimension=2, rng_seed=0)
    train, tune = task.sample(30, 0), task.sample(30, 1)
    d = direct_tune(task, train, tune, regression_candidates()[0], 0.2, GridPolicy("explicit", values=(-5.0, -4.0)))
    assert not d.feasible and d.lambda_tune == -4.0


def test_tightened_constraint_is_stricter():
    model, data = table_model(np.arange(100) / 100)
    grid = ThresholdGrid(np.arange(100) / 100)
    loose = min_feasible_lambda(model, data, 0.2, grid)
    tight = min_feasible_lambda(model, data, 0.2, grid, tighten=0.05)
    assert tight > loose
    assert empirical_risk(model, data, tight) <= 0.15


# -- sample size --------------------------------------------------------------


def test_tuning_sample_size_examples():
    assert math.log(1280) == pytest.approx(7.15462, abs=1e-5)
    assert tuning_sample_size(0.05, 1.0, 0.05, 16, 1.0) == 1431
    assert tuning_sample_size(0.1, 0.1, 0.05, 16, 1.0) == math.ceil(math.log(1280) / 0.02)


def test_tuning_sample_size_doubling_k():
    eps = 0.05
    base = math.log(4 * 16 / 0.05) / (2 * eps * eps)
    assert tuning_sample_size(eps, 10.0, 0.05, 32, 1.0) == math.ceil(base + math.log(2) / (2 * eps * eps))


def test_tuning_sample_size_errors():
    with pytest.raises(ValueError):
        tuning_sample_size(0.0, 1.0, 0.05, 16, 1.0)
    with pytest.raises(ValueError):
        tuning_sample_size(0.1, 1.0, 1.0, 16, 1.0)
