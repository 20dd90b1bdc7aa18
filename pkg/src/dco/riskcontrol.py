"""Coupled BQ/CRC threshold selection with a Dirichlet Monte Carlo risk bound.

For losses ``l_1..l_m`` at threshold ``lam`` and weights ``w ~ Dirichlet(1, ..., 1)``
over ``m + 1`` coordinates, the upper bound is

    L+ = sum_i w_i l_i(lam) + w_{m+1} B

and the selected threshold is the smallest grid value with
``P(L+ <= alpha) >= 1 - delta``, the probability estimated from ``M`` draws.
The same draws are reused across thresholds, which keeps the estimated
probability monotone in ``lam`` when the losses are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .conformal import Alpha, CalibratedRule, parse_alpha
from .scores import Candidate, Samples, ScoreModel, fit_candidate
from .tuning import ThresholdGrid

__all__ = [
    "BqConfig",
    "BqDiagnostics",
    "dirichlet_weights",
    "upper_bound_draws",
    "feasibility_curve",
    "bq_threshold",
    "bq_calibrate",
    "MatchedPhiResult",
    "bq_matched_phi",
    "pool_grid",
]


@dataclass(frozen=True)
class BqConfig:
    delta: float = 0.05
    loss_bound_B: float = 1.0
    mc_draws_M: int = 1000
    rng_seed: int = 0
    common_draws: bool = True

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.loss_bound_B > 0:
            raise ValueError("loss_bound_B must be positive")
        if self.mc_draws_M < 1:
            raise ValueError("mc_draws_M must be >= 1")

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "loss_bound_B": self.loss_bound_B,
            "mc_draws_M": self.mc_draws_M,
            "rng_seed": self.rng_seed,
            "common_draws": self.common_draws,
        }


@dataclass(frozen=True)
class BqDiagnostics:
    selected_lambda: float  # grid maximum when infeasible
    feasible: bool
    feasibility_prob: float
    per_lambda_probs: dict = field(default_factory=dict)
    empirical_risk: float = math.nan
    empirical_margin: float = math.nan

    def to_dict(self, include_curve: bool = False) -> dict:
        d = {
            "selected_lambda": self.selected_lambda,
            "feasible": self.feasible,
            "p_bq": self.feasibility_prob,
            "empirical_risk": self.empirical_risk,
            "empirical_margin": self.empirical_margin,
        }
        if include_curve:
            d["per_lambda_probs"] = [[float(k), float(v)] for k, v in sorted(self.per_lambda_probs.items())]
        return d


def dirichlet_weights(m: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """``M`` draws from the flat Dirichlet on ``m + 1`` coordinates (normalised exponentials)."""
    E = rng.standard_exponential((M, m + 1))
    return E / E.sum(axis=1, keepdims=True)


def upper_bound_draws(W: np.ndarray, losses: np.ndarray, B: float) -> np.ndarray:
    losses = np.asarray(losses, dtype=float)
    return W[:, :-1] @ losses + W[:, -1] * B


def _prob(W, losses, alpha, B) -> float:
    return float(np.mean(upper_bound_draws(W, losses, B) <= alpha))


def _check_losses(losses, m, B):
    if losses.shape != (m,):
        raise ValueError(f"loss vector has shape {losses.shape}, expected ({m},)")
    if np.any(losses < 0) or np.any(losses > B):
        raise ValueError("losses must lie in [0, B]")


def _alpha_value(alpha) -> float:
    return 0.0 if alpha == 0 else float(parse_alpha(alpha))


def feasibility_curve(
    losses_at: Callable[[float], np.ndarray],
    grid: ThresholdGrid,
    alpha: Alpha,
    cfg: BqConfig,
    W: np.ndarray | None = None,
) -> np.ndarray:
    """Estimated ``P(L+ <= alpha)`` at every grid threshold.

    With ``cfg.common_draws`` one weight matrix serves every threshold;
    otherwise each threshold after the first gets fresh draws.
    """
    a = _alpha_value(alpha)
    B = cfg.loss_bound_B
    m = np.asarray(losses_at(grid.values[0])).size
    rng = np.random.default_rng(cfg.rng_seed)
    if W is None:
        W = dirichlet_weights(m, cfg.mc_draws_M, rng)
    else:
        rng.standard_exponential((cfg.mc_draws_M, m + 1))  # keep the stream aligned
    out = np.empty(len(grid))
    for i, lam in enumerate(grid.values):
        if not cfg.common_draws and i > 0:
            W = dirichlet_weights(m, cfg.mc_draws_M, rng)
        losses = np.asarray(losses_at(lam), dtype=float)
        _check_losses(losses, m, B)
        out[i] = _prob(W, losses, a, B)
    return out


def bq_threshold(
    losses_at: Callable[[float], np.ndarray],
    grid: ThresholdGrid,
    alpha: Alpha,
    cfg: BqConfig = BqConfig(),
    full_curve: bool = False,
) -> BqDiagnostics:
    """Smallest grid threshold whose estimated feasibility probability is ``>= 1 - delta``.

    ``losses_at(lam)`` returns per-calibration-point losses in ``[0, B]``,
    non-increasing in ``lam``. With common draws the search is a binary search
    (``full_curve`` evaluates every threshold instead); with fresh draws per
    threshold it is a linear scan. ``alpha = 0`` is accepted and is always
    infeasible because ``L+ > 0`` almost surely.
    """
    a = _alpha_value(alpha)
    target = 1.0 - cfg.delta
    B = cfg.loss_bound_B
    g = grid.values
    cache: dict[float, np.ndarray] = {}

    def losses(lam):
        lam = float(lam)
        if lam not in cache:
            cache[lam] = np.asarray(losses_at(lam), dtype=float)
        return cache[lam]

    m = losses(g[0]).size
    if m < 1:
        raise ValueError("empty calibration pool")
    W = dirichlet_weights(m, cfg.mc_draws_M, np.random.default_rng(cfg.rng_seed))
    probs: dict[float, float] = {}

    if full_curve or not cfg.common_draws:
        curve = feasibility_curve(losses, grid, a, cfg, W=W)
        probs = {float(lam): float(p) for lam, p in zip(g, curve)}
        ok = np.flatnonzero(curve >= target)
        idx = int(ok[0]) if ok.size else None
    else:

        def p_at(i):
            lam = float(g[i])
            if lam not in probs:
                v = losses(lam)
                _check_losses(v, m, B)
                probs[lam] = _prob(W, v, a, B)
            return probs[lam]

        if p_at(g.size - 1) < target:
            idx = None
        else:
            lo, hi = 0, g.size - 1  # invariant: g[hi] feasible
            while lo < hi:
                mid = (lo + hi) // 2
                if p_at(mid) >= target:
                    hi = mid
                else:
                    lo = mid + 1
            idx = hi

    sel = float(g[-1] if idx is None else g[idx])
    sel_losses = losses(sel)
    emp = float(sel_losses.mean())
    upper_q = float(np.quantile(upper_bound_draws(W, sel_losses, B), target))
    return BqDiagnostics(
        selected_lambda=sel,
        feasible=idx is not None,
        feasibility_prob=probs.get(sel, _prob(W, sel_losses, a, B)),
        per_lambda_probs=probs,
        empirical_risk=emp,
        empirical_margin=upper_q - emp,
    )


def pool_grid(scores) -> ThresholdGrid:
    """Every distinct pool score: the only places the empirical losses change."""
    return ThresholdGrid(np.unique(np.asarray(scores, dtype=float)), source="pool-scores")


def bq_calibrate(
    model: ScoreModel,
    pool: Samples,
    alpha: Alpha,
    cfg: BqConfig = BqConfig(),
    grid: ThresholdGrid | None = None,
    full_curve: bool = False,
) -> tuple[CalibratedRule, BqDiagnostics]:
    """Risk-control calibration of a fixed structure on the pooled split.

    Losses are miscoverage indicators. If no grid threshold is feasible the
    deployed threshold is ``+inf`` (the full label space / real line).
    """
    if len(pool) == 0:
        raise ValueError("empty calibration pool")
    s = model.scores(pool.X, pool.y)
    grid = grid if grid is not None else pool_grid(s)
    diag = bq_threshold(lambda lam: (s > lam).astype(float), grid, alpha, cfg, full_curve=full_curve)
    threshold = diag.selected_lambda if diag.feasible else math.inf
    rule = CalibratedRule(model.candidate, threshold, alpha, len(pool), method="risk-control", model=model)
    return rule, diag


@dataclass(frozen=True)
class MatchedPhiResult:
    rule: CalibratedRule
    diagnostics: BqDiagnostics
    pool_sizes: dict  # candidate id -> pool-average set size at its BQ threshold


def bq_matched_phi(
    task,
    train: Samples,
    pool: Samples,
    candidates: Sequence[Candidate],
    alpha: Alpha,
    cfg: BqConfig = BqConfig(),
    seed: int | None = None,
) -> MatchedPhiResult:
    """Exploratory matched-candidate BQ: calibrate every candidate, keep the smallest pool sets."""
    best = None
    sizes = {}
    for cand in candidates:
        model = fit_candidate(task, train, cand, seed=seed)
        rule, diag = bq_calibrate(model, pool, alpha, cfg)
        size = float(np.mean(model.sizes(pool.X, rule.threshold))) if diag.feasible else math.inf
        sizes[cand.id] = size
        key = (size, cand.id)
        if best is None or key < best[0]:
            best = (key, rule, diag)
    return MatchedPhiResult(best[1], best[2], sizes)
