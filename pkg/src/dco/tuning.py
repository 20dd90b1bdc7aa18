"""Structure selection on the tuning split (DCO-Warmstart) and DirectTune.

For each candidate the smallest grid threshold meeting the empirical
miscoverage constraint is found by binary search; candidates are then ranked by
average set size at that threshold. The tuning threshold only ranks candidates:
callers recalibrate the selected structure on an independent split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .conformal import Alpha, parse_alpha
from .scores import Candidate, Samples, ScoreModel, fit_candidate
from .stats import percentile

__all__ = [
    "ThresholdGrid",
    "GridPolicy",
    "quantile_grid",
    "CandidateRow",
    "TuneResult",
    "DirectTuneResult",
    "empirical_risk",
    "empirical_size",
    "min_feasible_lambda",
    "select_row",
    "evaluate_candidate",
    "dco_tune",
    "direct_tune",
    "tuning_sample_size",
]


@dataclass(frozen=True)
class ThresholdGrid:
    values: np.ndarray
    source: str = "explicit"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("threshold grid must be non-empty")
        if np.any(np.isnan(v)):
            raise ValueError("threshold grid contains NaN")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ValueError("threshold grid must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.size)

    @property
    def max(self) -> float:
        return float(self.values[-1])


def quantile_grid(scores, count: int = 80) -> ThresholdGrid:
    """``count`` empirical quantiles at levels ``(i + 0.5) / count`` plus the maximum."""
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("cannot build a quantile grid from no scores")
    levels = (np.arange(count) + 0.5) / count
    values = np.unique(np.concatenate([np.quantile(s, levels, method="linear"), [s.max()]]))
    return ThresholdGrid(values, source="quantile-of-tune")


@dataclass(frozen=True)
class GridPolicy:
    """How the tuning threshold grid is built for each candidate.

    ``quantile``: :func:`quantile_grid` of the candidate's tuning scores.
    ``scores``: every distinct tuning score.
    ``explicit``: the fixed ``values`` (or ``per_candidate[id]`` when given).
    """

    policy: str = "quantile"
    count: int = 80
    values: tuple | None = None
    per_candidate: Mapping[str, Sequence[float]] | None = None

    def __post_init__(self):
        if self.policy not in ("quantile", "scores", "explicit"):
            raise ValueError(f"unknown grid policy {self.policy!r}")
        if self.policy == "explicit" and self.values is None and self.per_candidate is None:
            raise ValueError("explicit grid policy needs values")

    def build(self, tune_scores, candidate_id: str | None = None) -> ThresholdGrid:
        if self.policy == "quantile":
            return quantile_grid(tune_scores, self.count)
        if self.policy == "scores":
            return ThresholdGrid(np.unique(np.asarray(tune_scores, dtype=float)), source="scores")
        if self.per_candidate is not None and candidate_id in self.per_candidate:
            return ThresholdGrid(self.per_candidate[candidate_id])
        return ThresholdGrid(self.values)

    def to_dict(self) -> dict:
        d = {"policy": self.policy, "count": self.count}
        if self.values is not None:
            d["values"] = list(self.values)
        return d


@dataclass(frozen=True)
class CandidateRow:
    candidate: Candidate
    lambda_min: float | None
    emp_risk: float
    emp_size: float
    p95_size: float
    feasible: bool
    lambda_eval: float  # threshold at which risk and sizes were measured

    def to_dict(self) -> dict:
        p = self.candidate.params
        return {
            "id": self.candidate.id,
            "score_variant": p.get("score_variant"),
            "params": dict(p),
            "lambda": self.lambda_min,
            "lambda_eval": self.lambda_eval,
            "status": "feasible" if self.feasible else "infeasible",
            "emp_risk": self.emp_risk,
            "avg_size": self.emp_size,
            "p95_size": self.p95_size,
        }


@dataclass(frozen=True)
class TuneResult:
    selected: Candidate
    lambda_tune: float
    table: tuple[CandidateRow, ...]
    fallback_used: bool
    alpha: Alpha
    tighten: float = 0.0
    models: Mapping[str, ScoreModel] = field(default_factory=dict, compare=False, repr=False)

    @property
    def selected_row(self) -> CandidateRow:
        return next(r for r in self.table if r.candidate.id == self.selected.id)

    @property
    def selected_model(self) -> ScoreModel:
        return self.models[self.selected.id]

    def to_dict(self) -> dict:
        return {
            "selected": self.selected.id,
            "lambda_tune": self.lambda_tune,
            "lambda_tune_status": "discard before deployment",
            "fallback_used": self.fallback_used,
            "alpha": str(self.alpha) if isinstance(self.alpha, Fraction) else float(self.alpha),
            "tighten": self.tighten,
            "table": [r.to_dict() for r in self.table],
        }


@dataclass(frozen=True)
class DirectTuneResult:
    candidate: Candidate
    lambda_tune: float
    feasible: bool
    model: ScoreModel = field(compare=False, repr=False)
    certified: bool = False


def _risk_from_sorted(sorted_scores: np.ndarray, lam: float) -> Fraction:
    n = sorted_scores.size
    covered = int(np.searchsorted(sorted_scores, lam, side="right"))
    return Fraction(n - covered, n)


def empirical_risk(model: ScoreModel, tune: Samples, lam: float) -> float:
    """Fraction of tuning pairs whose true label falls outside the set at ``lam``."""
    if len(tune) == 0:
        raise ValueError("empty tuning set")
    s = model.scores(tune.X, tune.y)
    return float(np.count_nonzero(s > lam)) / s.size


def empirical_size(model: ScoreModel, tune: Samples, lam: float) -> float:
    if len(tune) == 0:
        raise ValueError("empty tuning set")
    return float(np.mean(model.sizes(tune.X, lam)))


def _effective_alpha(alpha: Alpha, tighten: float):
    # alpha = 0 is allowed here: it asks for zero empirical miscoverage
    a = Fraction(0) if alpha == 0 else parse_alpha(alpha)
    # decimals are read by their shortest repr so that risk == alpha compares exactly
    a = a if isinstance(a, Fraction) else Fraction(repr(a))
    return a - Fraction(repr(float(tighten))) if tighten else a


def _min_feasible_index(sorted_scores: np.ndarray, alpha_eff, grid: ThresholdGrid) -> int | None:
    g = grid.values
    if _risk_from_sorted(sorted_scores, g[-1]) > alpha_eff:
        return None
    lo, hi = 0, g.size - 1  # invariant: g[hi] feasible
    while lo < hi:
        mid = (lo + hi) // 2
        if _risk_from_sorted(sorted_scores, g[mid]) <= alpha_eff:
            hi = mid
        else:
            lo = mid + 1
    return hi


def min_feasible_lambda(model: ScoreModel, tune: Samples, alpha: Alpha, grid: ThresholdGrid, tighten: float = 0.0):
    """Smallest grid threshold with empirical risk ``<= alpha - tighten``, else ``None``."""
    s = np.sort(model.scores(tune.X, tune.y))
    i = _min_feasible_index(s, _effective_alpha(alpha, tighten), grid)
    return None if i is None else float(grid.values[i])


def evaluate_candidate(
    model: ScoreModel, tune: Samples, alpha: Alpha, grid_policy: GridPolicy, tighten: float = 0.0
) -> CandidateRow:
    s = model.scores(tune.X, tune.y)
    grid = grid_policy.build(s, model.candidate.id)
    s_sorted = np.sort(s)
    i = _min_feasible_index(s_sorted, _effective_alpha(alpha, tighten), grid)
    lam = grid.max if i is None else float(grid.values[i])
    sizes = model.sizes(tune.X, lam)
    return CandidateRow(
        candidate=model.candidate,
        lambda_min=None if i is None else lam,
        emp_risk=float(_risk_from_sorted(s_sorted, lam)),
        emp_size=float(np.mean(sizes)),
        p95_size=percentile(sizes, 0.95),
        feasible=i is not None,
        lambda_eval=lam,
    )


def select_row(rows: Sequence[CandidateRow]) -> tuple[CandidateRow, bool]:
    """Pick the tuned row; returns ``(row, fallback_used)``.

    Feasible rows: smallest average size, then P95 size, then threshold, then id.
    Without a feasible row: smallest empirical risk at the grid maximum, then
    smallest average size, then id.
    """
    if not rows:
        raise ValueError("no candidate rows")
    feasible = [r for r in rows if r.feasible]
    if feasible:
        return min(feasible, key=lambda r: (r.emp_size, r.p95_size, r.lambda_min, r.candidate.id)), False
    return min(rows, key=lambda r: (r.emp_risk, r.emp_size, r.candidate.id)), True


def dco_tune(
    task,
    train: Samples,
    tune: Samples,
    candidates: Sequence[Candidate],
    alpha: Alpha,
    grid_policy: GridPolicy = GridPolicy(),
    tighten: float = 0.0,
    seed: int | None = None,
) -> TuneResult:
    """Select a structure on the tuning split.

    Only ``train`` and ``tune`` are passed in; calibration and test rows never
    reach this function. ``tighten > 0`` replaces the constraint by
    ``risk <= alpha - tighten``.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    ids = [c.id for c in candidates]
    if len(set(ids)) != len(ids):
        raise ValueError("candidate ids must be unique")
    models = {c.id: fit_candidate(task, train, c, seed=seed) for c in candidates}
    rows = tuple(evaluate_candidate(models[c.id], tune, alpha, grid_policy, tighten) for c in candidates)
    best, fallback = select_row(rows)
    return TuneResult(
        selected=best.candidate,
        lambda_tune=best.lambda_eval,
        table=rows,
        fallback_used=fallback,
        alpha=Fraction(0) if alpha == 0 else parse_alpha(alpha),
        tighten=tighten,
        models=models,
    )


def direct_tune(
    task,
    train: Samples,
    tune: Samples,
    fixed: Candidate,
    alpha: Alpha,
    grid_policy: GridPolicy = GridPolicy(),
    seed: int | None = None,
) -> DirectTuneResult:
    """Tune the threshold of a fixed structure and deploy it as-is (uncertified).

    When no grid threshold is feasible the grid maximum is returned with
    ``feasible=False``.
    """
    model = fit_candidate(task, train, fixed, seed=seed)
    row = evaluate_candidate(model, tune, alpha, grid_policy)
    return DirectTuneResult(fixed, row.lambda_eval, row.feasible, model)


def tuning_sample_size(eps_r: float, eps_s: float, eta: float, K: int, B: float) -> int:
    """Tuning-split size giving uniform ``eps_r`` / ``eps_s`` control with prob. ``1 - eta``."""
    if not (eps_r > 0 and eps_s > 0 and B > 0 and K >= 1 and 0 < eta < 1):
        raise ValueError("need eps_r, eps_s, B > 0, K >= 1 and 0 < eta < 1")
    log_term = math.log(4.0 * K / eta)
    return math.ceil(max(log_term / (2.0 * eps_r**2), B * B * log_term / (2.0 * eps_s**2)))
