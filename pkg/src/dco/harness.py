"""Repeated-split experiments: DCO-Warmstart against DirectTune, BQ/CRC and split CP.

Every seed draws a fresh dataset from the task (synthetic tasks) or reuses the
fixed dataset (precomputed tasks), partitions it into train / tune / cal / test
and runs each requested method on that same partition so that per-seed metrics
can be compared with paired tests.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .conformal import Alpha, calibrate, parse_alpha
from .riskcontrol import BqConfig, bq_calibrate, bq_matched_phi
from .scores import Candidate, GaussianPosteriorModel, IndexLog, PrecomputedTask, Samples, ScoreModel
from .stats import PairedSamples, percentile, wilcoxon_signed_rank
from .tuning import GridPolicy, TuneResult, dco_tune, direct_tune

__all__ = [
    "METHODS",
    "SplitPlan",
    "largest_remainder",
    "make_splits",
    "parse_ratio",
    "derive_seed",
    "ExperimentConfig",
    "TrialMetrics",
    "ExperimentReport",
    "run_trial",
    "run_seed",
    "run_experiment",
    "ablate_split_ratios",
    "sweep_alpha",
    "to_jsonable",
]

METHODS = ("dco", "direct", "bq_fixed", "bq_matched_phi", "bq_recalibrate_dco", "split_cp")
CERTIFIED = {"dco": True, "direct": False, "bq_fixed": True, "bq_matched_phi": True, "bq_recalibrate_dco": True, "split_cp": True}
METRICS = ("coverage", "avg_size", "p95_size")


def derive_seed(master: int, *keys: int) -> int:
    """Independent 64-bit child seed of ``master`` for the key path ``keys``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def parse_ratio(ratio) -> Fraction:
    """Tune share of the non-training budget from ``"a/b"`` (tune:cal weights) or a number."""
    if isinstance(ratio, str) and "/" in ratio:
        a, b = (Fraction(p.strip()) for p in ratio.split("/"))
        if a < 0 or b < 0 or a + b == 0:
            raise ValueError(f"bad ratio {ratio!r}")
        frac = a / (a + b)
    else:
        frac = Fraction(str(ratio)) if not isinstance(ratio, Fraction) else ratio
    if not 0 < frac < 1:
        raise ValueError(f"ratio {ratio!r} leaves the tuning or calibration split empty")
    return frac


def _as_fraction(f) -> Fraction:
    return Fraction(f).limit_denominator(10**12) if isinstance(f, float) else Fraction(f)


def largest_remainder(n: int, fractions: Sequence) -> list[int]:
    """Apportion ``n`` items to ``fractions`` (summing to one); ties go to earlier entries."""
    fr = [_as_fraction(f) for f in fractions]
    if any(f < 0 for f in fr) or sum(fr) != 1:
        raise ValueError("fractions must be non-negative and sum to one")
    quotas = [n * f for f in fr]
    base = [q.numerator // q.denominator for q in quotas]
    order = sorted(range(len(fr)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[: n - sum(base)]:
        base[i] += 1
    return base


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    tune: np.ndarray
    cal: np.ndarray
    test: np.ndarray
    seed: int
    ratios: tuple  # (tune_frac, cal_frac) of the non-training budget

    def __post_init__(self):
        parts = [self.train, self.tune, self.cal, self.test]
        allidx = np.concatenate(parts)
        if np.unique(allidx).size != allidx.size:
            raise ValueError("split index sets overlap")

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return (self.train.size, self.tune.size, self.cal.size, self.test.size)

    @property
    def pool(self) -> np.ndarray:
        return np.sort(np.concatenate([self.tune, self.cal]))


def _stratified_counts(class_sizes: np.ndarray, fractions: list[Fraction], rng) -> np.ndarray:
    """Per-class, per-split counts within one unit of proportionality.

    Floors of ``n_c * f_s`` are topped up by a 0/1 matrix with exact row sums
    and column sums within one of their fractional totals; the constraint
    matrix is a bipartite flow, so the integer program always has a solution.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    C, S = class_sizes.size, len(fractions)
    quota = [[int(n) * f for f in fractions] for n in class_sizes]
    base = np.array([[q.numerator // q.denominator for q in row] for row in quota], dtype=np.int64)
    frac = np.array([[float(q - b) for q, b in zip(qrow, brow)] for qrow, brow in zip(quota, base)])
    row_extra = class_sizes - base.sum(axis=1)
    if row_extra.sum() == 0:
        return base
    col_tot = frac.sum(axis=0)
    A_rows = np.zeros((C, C * S))
    for c in range(C):
        A_rows[c, c * S : (c + 1) * S] = 1.0
    A_cols = np.zeros((S, C * S))
    for s in range(S):
        A_cols[s, s::S] = 1.0
    cons = [
        LinearConstraint(A_rows, row_extra, row_extra),
        LinearConstraint(A_cols, np.floor(col_tot + 1e-9), np.ceil(col_tot - 1e-9)),
    ]
    ub = (frac.ravel() > 1e-12).astype(float)
    noise = rng.uniform(0.0, 1e-6, size=C * S)
    res = milp(-(frac.ravel() + noise), constraints=cons, integrality=np.ones(C * S), bounds=Bounds(0, ub))
    if not res.success:
        raise RuntimeError(f"stratified allocation failed: {res.message}")
    return base + np.rint(res.x).astype(np.int64).reshape(C, S)


def _partition(n: int, buckets: list[Fraction], rng, labels=None) -> list[np.ndarray]:
    """Shuffle ``range(n)`` into ``len(buckets)`` sorted index arrays."""
    if labels is None:
        counts = largest_remainder(n, buckets)
        perm = rng.permutation(n)
        edges = np.cumsum([0, *counts])
        return [np.sort(perm[edges[i] : edges[i + 1]]) for i in range(len(buckets))]
    labels = np.asarray(labels)
    if labels.size != n:
        raise ValueError("labels must have length n")
    classes, inv = np.unique(labels, return_inverse=True)
    class_sizes = np.bincount(inv, minlength=classes.size)
    table = _stratified_counts(class_sizes, buckets, rng)
    chunks: list[list[np.ndarray]] = [[] for _ in buckets]
    for c in range(classes.size):
        members = rng.permutation(np.flatnonzero(inv == c))
        edges = np.cumsum([0, *table[c]])
        for s in range(len(buckets)):
            chunks[s].append(members[edges[s] : edges[s + 1]])
    return [np.sort(np.concatenate(ch)) for ch in chunks]


def make_splits(n: int, ratios: Sequence, seed: int, labels=None) -> SplitPlan:
    """Deterministic shuffled partition of ``range(n)`` into train/tune/cal/test.

    ``ratios`` are the four split fractions (sum at most one). With ``labels``
    the partition is stratified by class.
    """
    if len(ratios) != 4:
        raise ValueError("ratios must give (train, tune, cal, test) fractions")
    fr = [_as_fraction(r) for r in ratios]
    if any(f <= 0 for f in fr):
        raise ValueError("split fractions must be positive")
    if sum(fr) > 1:
        raise ValueError("split fractions sum to more than one")
    buckets = fr + ([1 - sum(fr)] if sum(fr) < 1 else [])
    parts = _partition(n, buckets, np.random.default_rng(seed), labels)[:4]
    names = ("train", "tune", "cal", "test")
    for name, p in zip(names, parts):
        if p.size == 0:
            raise ValueError(f"budget too small: {name} split is empty for n={n}")
    tune_frac = fr[1] / (fr[1] + fr[2])
    return SplitPlan(*parts, seed=int(seed), ratios=(tune_frac, 1 - tune_frac))


# ---------------------------------------------------------------------------
# Configuration and metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n_train: int = 150
    budget: int = 225  # |tune| + |cal|
    n_test: int = 500
    tune_ratio: str = "50/50"
    fixed_candidate: str | None = None
    bq: BqConfig = BqConfig()
    grid: GridPolicy = GridPolicy()
    tighten: float = 0.0
    master_seed: int = 0
    wilcoxon_pairs: tuple = ()
    stratify: bool = True
    fixed_train: bool = False  # one training set (and fitted models) shared by all seeds
    workers: int | None = None

    @property
    def n_total(self) -> int:
        return self.n_train + self.budget + self.n_test

    def split_fractions(self) -> tuple[Fraction, ...]:
        r = parse_ratio(self.tune_ratio)
        n = self.n_total
        return (
            Fraction(self.n_train, n),
            Fraction(self.budget, n) * r,
            Fraction(self.budget, n) * (1 - r),
            Fraction(self.n_test, n),
        )

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "budget": self.budget,
            "n_test": self.n_test,
            "tune_ratio": self.tune_ratio,
            "fixed_candidate": self.fixed_candidate,
            "bq": self.bq.to_dict(),
            "grid": self.grid.to_dict(),
            "tighten": self.tighten,
            "master_seed": self.master_seed,
            "wilcoxon_pairs": [list(p) for p in self.wilcoxon_pairs],
            "stratify": self.stratify,
            "fixed_train": self.fixed_train,
        }


@dataclass(frozen=True)
class TrialMetrics:
    method: str
    seed_index: int
    seed: int
    coverage: float
    avg_size: float
    p95_size: float
    threshold: float
    selected_candidate: str
    certified: bool
    fallback_used: bool
    infinite_threshold: bool
    units: str
    m_cal: int
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _fixed_candidate(candidates: Sequence[Candidate], cfg: ExperimentConfig) -> Candidate:
    if cfg.fixed_candidate is None:
        return candidates[0]
    for c in candidates:
        if c.id == cfg.fixed_candidate:
            return c
    raise ValueError(f"fixed candidate {cfg.fixed_candidate!r} is not in the candidate class")


class _SeedContext:
    """Data, splits and shared intermediate results for one seed."""

    def __init__(self, task, candidates, alpha, plan: SplitPlan, data: Samples, cfg: ExperimentConfig, seed: int, read_log=None):
        self.task = task
        self.candidates = list(candidates)
        self.alpha = alpha
        self.plan = plan
        self.cfg = cfg
        self.seed = seed
        self.read_log = read_log if read_log is not None else IndexLog()
        # only these two views ever reach the tuning stage
        self.train = data.view(plan.train, log=self.read_log)
        self.tune = data.view(plan.tune, log=self.read_log)
        self.cal = data.view(plan.cal)
        self.test = data.view(plan.test)
        self.pool = data.view(plan.pool)
        self._tune_result: TuneResult | None = None
        self.fixed = _fixed_candidate(self.candidates, cfg)

    @property
    def fit_seed(self) -> int:
        if self.cfg.fixed_train:
            return derive_seed(self.cfg.master_seed, 3)
        return derive_seed(self.seed, 3)

    def bq_cfg(self) -> BqConfig:
        return replace(self.cfg.bq, rng_seed=derive_seed(self.seed, 4, self.cfg.bq.rng_seed))

    def tune_result(self) -> TuneResult:
        if self._tune_result is None:
            self._tune_result = dco_tune(
                self.task,
                self.train,
                self.tune,
                self.candidates,
                self.alpha,
                self.cfg.grid,
                tighten=self.cfg.tighten,
                seed=self.fit_seed,
            )
        return self._tune_result

    def fixed_model(self) -> ScoreModel:
        return self.tune_result().models[self.fixed.id]


def _evaluate(model: ScoreModel, threshold: float, test: Samples) -> tuple[float, float, float, bool]:
    if threshold == math.inf:
        if isinstance(model, GaussianPosteriorModel):
            sentinel = model.max_size()
            return 1.0, sentinel, sentinel, True
        k = model.max_size()
        return 1.0, k, k, True
    covered = model.scores(test.X, test.y) <= threshold
    sizes = model.sizes(test.X, threshold)
    return float(covered.mean()), float(sizes.mean()), percentile(sizes, 0.95), False


def _run_method(ctx: _SeedContext, method: str, seed_index: int) -> TrialMetrics:
    trace: dict = {}
    fallback = False
    if method == "dco":
        tr = ctx.tune_result()
        model = tr.selected_model
        rule = calibrate(model, ctx.cal, ctx.alpha)
        threshold, m_cal, fallback = rule.threshold, rule.m_cal, tr.fallback_used
        trace = {"lambda_tune": tr.lambda_tune, "q_cal": threshold}
    elif method == "split_cp":
        model = ctx.fixed_model()
        rule = calibrate(model, ctx.cal, ctx.alpha)
        threshold, m_cal = rule.threshold, rule.m_cal
        trace = {"q_cal": threshold}
    elif method == "direct":
        res = direct_tune(ctx.task, ctx.train, ctx.tune, ctx.fixed, ctx.alpha, ctx.cfg.grid, seed=ctx.fit_seed)
        model, threshold, m_cal = res.model, res.lambda_tune, len(ctx.tune)
        fallback = not res.feasible
        trace = {"lambda_tune": threshold}
    elif method in ("bq_fixed", "bq_recalibrate_dco"):
        model = ctx.fixed_model() if method == "bq_fixed" else ctx.tune_result().selected_model
        rule, diag = bq_calibrate(model, ctx.pool, ctx.alpha, ctx.bq_cfg())
        threshold, m_cal, fallback = rule.threshold, rule.m_cal, not diag.feasible
        trace = {"lambda_bq": diag.selected_lambda, "p_bq": diag.feasibility_prob, "bq_margin": diag.empirical_margin}
        if method == "bq_recalibrate_dco":
            trace["lambda_tune"] = ctx.tune_result().lambda_tune
    elif method == "bq_matched_phi":
        res = bq_matched_phi(ctx.task, ctx.train, ctx.pool, ctx.candidates, ctx.alpha, ctx.bq_cfg(), seed=ctx.fit_seed)
        model, threshold, m_cal = res.rule.model, res.rule.threshold, res.rule.m_cal
        fallback = not res.diagnostics.feasible
        trace = {"lambda_bq": res.diagnostics.selected_lambda, "p_bq": res.diagnostics.feasibility_prob, "exploratory": True}
    else:
        raise ValueError(f"unknown method {method!r}")

    coverage, avg, p95, inf_flag = _evaluate(model, threshold, ctx.test)
    return TrialMetrics(
        method=method,
        seed_index=seed_index,
        seed=ctx.seed,
        coverage=coverage,
        avg_size=avg,
        p95_size=p95,
        threshold=threshold,
        selected_candidate=model.candidate.id,
        certified=CERTIFIED[method],
        fallback_used=bool(fallback),
        infinite_threshold=inf_flag,
        units=model.units,
        m_cal=int(m_cal),
        trace=trace,
    )


def _data_and_plan(task, cfg: ExperimentConfig, seed: int) -> tuple[Samples, SplitPlan]:
    if isinstance(task, PrecomputedTask):
        data = task.sample()
        # configured sizes are read as proportions of the fixed dataset
        labels = data.y if cfg.stratify else None
        return data, make_splits(len(data), cfg.split_fractions(), derive_seed(seed, 2), labels=labels)
    strat = task.kind == "classification" and cfg.stratify
    if not cfg.fixed_train:
        data = task.sample(cfg.n_total, derive_seed(seed, 1))
        labels = data.y if strat else None
        return data, make_splits(cfg.n_total, cfg.split_fractions(), derive_seed(seed, 2), labels=labels)
    # training rows come from the master seed; only the held-out rows are redrawn
    train = task.sample(cfg.n_train, derive_seed(cfg.master_seed, 0))
    rest = task.sample(cfg.n_total - cfg.n_train, derive_seed(seed, 1))
    data = Samples(
        np.concatenate([train.X, rest.X]),
        np.concatenate([train.y, rest.y]),
        np.arange(cfg.n_total, dtype=np.int64),
    )
    fr = cfg.split_fractions()
    held = [f / (1 - fr[0]) for f in fr[1:]]
    parts = _partition(len(rest), held, np.random.default_rng(derive_seed(seed, 2)), rest.y if strat else None)
    r = parse_ratio(cfg.tune_ratio)
    plan = SplitPlan(np.arange(cfg.n_train), *(p + cfg.n_train for p in parts), seed=derive_seed(seed, 2), ratios=(r, 1 - r))
    if min(plan.sizes) == 0:
        raise ValueError("budget too small: a split is empty")
    return data, plan


def run_seed(
    task,
    candidates: Sequence[Candidate],
    alpha: Alpha,
    methods: Sequence[str],
    cfg: ExperimentConfig,
    seed_index: int,
    plan: SplitPlan | None = None,
    data: Samples | None = None,
    read_log: IndexLog | None = None,
) -> list[TrialMetrics]:
    """All ``methods`` on one shared split (one tuning pass reused across methods)."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    seed = derive_seed(cfg.master_seed, seed_index)
    if plan is None or data is None:
        data, plan = _data_and_plan(task, cfg, seed)
    ctx = _SeedContext(task, candidates, alpha, plan, data, cfg, seed, read_log=read_log)
    return [_run_method(ctx, m, seed_index) for m in methods]


def run_trial(task, candidates, alpha, method: str, plan: SplitPlan, cfg: ExperimentConfig, data: Samples, seed_index: int = 0, read_log: IndexLog | None = None) -> TrialMetrics:
    """One method end-to-end on a given split, evaluated on its test rows."""
    return run_seed(task, candidates, alpha, [method], cfg, seed_index, plan=plan, data=data, read_log=read_log)[0]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def to_jsonable(obj):
    """Replace non-finite floats by ``"+inf"`` / ``"-inf"`` / ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return v
    return obj


def _mean_std(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"mean": math.nan, "std": math.nan, "n": 0}
    std = float(v.std(ddof=1)) if v.size > 1 else math.nan
    return {"mean": float(v.mean()), "std": std, "n": int(v.size)}


@dataclass
class ExperimentReport:
    alpha: Alpha
    methods: list[str]
    trials: list[TrialMetrics]
    config: dict
    wilcoxon_pairs: list[tuple[str, str]]

    def by_method(self, method: str) -> list[TrialMetrics]:
        return sorted((t for t in self.trials if t.method == method), key=lambda t: t.seed_index)

    @property
    def n_seeds(self) -> int:
        return len({t.seed_index for t in self.trials})

    def summary(self, method: str) -> dict:
        ts = self.by_method(method)
        # infinite regression thresholds report a sentinel width: keep them out of size means
        keep = [t for t in ts if not (t.infinite_threshold and t.units == "width")]
        out = {
            "coverage": _mean_std([t.coverage for t in ts]),
            "avg_size": _mean_std([t.avg_size for t in keep]),
            "p95_size": _mean_std([t.p95_size for t in keep]),
            "n_trials": len(ts),
            "n_infinite": sum(t.infinite_threshold for t in ts),
            "n_excluded_from_size": len(ts) - len(keep),
            "n_fallback": sum(t.fallback_used for t in ts),
            "certified": CERTIFIED[method],
            "units": ts[0].units if ts else None,
        }
        return out

    def selection_frequencies(self, method: str) -> dict[str, int]:
        c = Counter(t.selected_candidate for t in self.by_method(method))
        return dict(sorted(c.items()))

    def stability(self, method: str) -> float:
        freq = self.selection_frequencies(method)
        n = len(self.by_method(method))
        return max(freq.values()) / n if n else math.nan

    def wilcoxon(self) -> list[dict]:
        out = []
        for a, b in self.wilcoxon_pairs:
            ta, tb = self.by_method(a), self.by_method(b)
            for metric in METRICS:
                xa = np.array([getattr(t, metric) for t in ta])
                xb = np.array([getattr(t, metric) for t in tb])
                ok = np.isfinite(xa) & np.isfinite(xb)
                if metric != "coverage":
                    inf_a = np.array([t.infinite_threshold and t.units == "width" for t in ta])
                    inf_b = np.array([t.infinite_threshold and t.units == "width" for t in tb])
                    ok &= ~(inf_a | inf_b)
                entry = {"pair": [a, b], "metric": metric, "n_pairs": int(ok.sum())}
                if ok.sum() == 0:
                    entry.update(p_value=1.0, statistic=0.0, degenerate=True, mode="none")
                else:
                    r = wilcoxon_signed_rank(PairedSamples(xa[ok], xb[ok]))
                    entry.update(p_value=r.p_value, statistic=r.statistic, degenerate=r.degenerate, mode=r.mode)
                out.append(entry)
        return out

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "schema_version": 1,
                "master_seed": self.config.get("master_seed"),
                "alpha": self.alpha,
                "n_seeds": self.n_seeds,
                "config": self.config,
                "methods": {m: self.summary(m) for m in self.methods},
                "wilcoxon": self.wilcoxon(),
                "selection_frequencies": {m: self.selection_frequencies(m) for m in self.methods},
                "stability": {m: self.stability(m) for m in self.methods},
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    CSV_FIELDS = (
        "method", "seed_index", "seed", "coverage", "avg_size", "p95_size", "threshold",
        "selected_candidate", "certified", "fallback_used", "infinite_threshold", "units", "m_cal",
        "lambda_tune", "q_cal", "lambda_bq", "p_bq",
    )

    def per_seed_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for t in sorted(self.trials, key=lambda t: (t.seed_index, self.methods.index(t.method))):
            d = t.to_dict()
            row = []
            for f in self.CSV_FIELDS:
                v = d[f] if f in d else t.trace.get(f)
                v = to_jsonable(v)
                row.append("" if v is None else v)
            w.writerow(row)
        return buf.getvalue()

    def summary_table(self) -> str:
        lines = [f"{'method':<20} {'coverage':>17} {'avg size/width':>19} {'P95':>19}  certified"]
        for m in self.methods:
            s = self.summary(m)
            cov, avg, p95 = s["coverage"], s["avg_size"], s["p95_size"]
            lines.append(
                f"{m:<20} {cov['mean']:>8.4f} ± {cov['std']:<6.4f} {avg['mean']:>9.4f} ± {avg['std']:<7.4f}"
                f" {p95['mean']:>9.4f} ± {p95['std']:<7.4f}  {'yes' if s['certified'] else 'no'}"
            )
        return "\n".join(lines)


def _default_pairs(methods: Sequence[str]) -> list[tuple[str, str]]:
    if "dco" not in methods:
        return []
    return [("dco", m) for m in methods if m != "dco"]


def _worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    try:
        return max(1, int(os.environ.get("DCO_WORKERS", "1")))
    except ValueError:
        return 1


def _seed_job(args):
    task, candidates, alpha, methods, cfg, i = args
    return run_seed(task, candidates, alpha, methods, cfg, i)


def run_experiment(
    task,
    candidates: Sequence[Candidate],
    alpha: Alpha,
    methods: Sequence[str],
    n_seeds: int,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> ExperimentReport:
    """Run every method over ``n_seeds`` derived seeds and aggregate.

    Trials are folded in seed order whatever the completion order, so reports
    are identical for any worker count.
    """
    alpha = parse_alpha(alpha)
    methods = list(methods)
    if not methods:
        raise ValueError("no methods requested")
    pairs = [tuple(p) for p in cfg.wilcoxon_pairs] or _default_pairs(methods)
    for a, b in pairs:
        if a not in methods or b not in methods:
            raise ValueError(f"Wilcoxon pair {a}/{b} names a method that is not run")
    _fixed_candidate(candidates, cfg)
    jobs = [(task, list(candidates), alpha, methods, cfg, i) for i in range(n_seeds)]
    workers = _worker_count(cfg)
    if workers > 1 and n_seeds > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_seed_job, jobs, chunksize=max(1, n_seeds // (4 * workers))))
    else:
        results = [_seed_job(j) for j in jobs]
    trials = [t for r in results for t in r]
    config = cfg.to_dict()
    config.update(
        alpha=alpha,
        methods=methods,
        n_seeds=n_seeds,
        candidates=[c.to_dict() for c in candidates],
        wilcoxon_pairs=[list(p) for p in pairs],
    )
    return ExperimentReport(alpha, methods, trials, to_jsonable(config), pairs)


def ablate_split_ratios(task, candidates, alpha, ratio_list, n_seeds, cfg: ExperimentConfig = ExperimentConfig(), methods=("dco",)):
    """One report per tune:cal ratio over the same non-training budget."""
    if not ratio_list:
        raise ValueError("empty ratio list")
    for r in ratio_list:
        parse_ratio(r)
    return [run_experiment(task, candidates, alpha, methods, n_seeds, replace(cfg, tune_ratio=r)) for r in ratio_list]


def sweep_alpha(task, candidates, alpha_list, methods, n_seeds, cfg: ExperimentConfig = ExperimentConfig()):
    """One report per miscoverage level."""
    alphas = [parse_alpha(a) for a in alpha_list]
    return [run_experiment(task, candidates, a, methods, n_seeds, cfg) for a in alphas]
