"""Exact split-conformal calibration and prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .scores import Candidate, GaussianPosteriorModel, Samples, ScoreModel, model_from_dict

__all__ = [
    "Alpha",
    "parse_alpha",
    "k_alpha",
    "conformal_quantile",
    "CalibratedRule",
    "calibrate",
    "predict_set",
    "PredictionSet",
    "encode_threshold",
    "decode_threshold",
]

Alpha = Union[float, Fraction, str]

SNAP_TOL = 1e-12


def parse_alpha(alpha: Alpha) -> Union[float, Fraction]:
    """Accept ``"1/5"`` (exact rational), a Fraction, or a decimal."""
    if isinstance(alpha, Fraction):
        value = alpha
    elif isinstance(alpha, str):
        text = alpha.strip()
        value = Fraction(text) if "/" in text else float(text)
    elif isinstance(alpha, (int, float, np.floating)):
        value = float(alpha)
    else:
        raise TypeError(f"unsupported alpha {alpha!r}")
    if not 0 < value < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return value


def k_alpha(m: int, alpha: Alpha) -> int:
    """Rank ``ceil((m + 1)(1 - alpha))`` computed without floating-point off-by-one.

    Rational alphas use exact integer arithmetic; decimals snap products within
    ``1e-12`` (relative) of an integer onto it before taking the ceiling.
    """
    if m < 1:
        raise ValueError("need at least one calibration score")
    a = parse_alpha(alpha)
    if isinstance(a, Fraction):
        prod = (m + 1) * a
        return (m + 1) - (prod.numerator // prod.denominator)
    x = (m + 1) * (1.0 - a)
    r = round(x)
    if abs(x - r) <= SNAP_TOL * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def conformal_quantile(scores, alpha: Alpha) -> float:
    """``S_(k)`` for ``k = k_alpha(m, alpha)``, or ``+inf`` when ``k = m + 1``."""
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empty calibration scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("calibration scores must be finite")
    k = k_alpha(s.size, alpha)
    if k > s.size:
        return math.inf
    return float(np.partition(s, k - 1)[k - 1])


def encode_threshold(t: float):
    return "+inf" if t == math.inf else float(t)


def decode_threshold(v) -> float:
    if v == "+inf":
        return math.inf
    return float(v)


@dataclass(frozen=True)
class CalibratedRule:
    candidate: Candidate
    threshold: float
    alpha: Alpha
    m_cal: int
    method: str = "split-conformal"
    model: ScoreModel | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))

    @property
    def infinite(self) -> bool:
        return self.threshold == math.inf

    def to_dict(self, include_model: bool = True) -> dict:
        d = {
            "candidate_id": self.candidate.id,
            "candidate": self.candidate.to_dict(),
            "alpha": str(self.alpha) if isinstance(self.alpha, Fraction) else float(self.alpha),
            "m_cal": int(self.m_cal),
            "threshold": encode_threshold(self.threshold),
            "method": self.method,
        }
        if include_model and self.model is not None:
            d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedRule":
        cand = Candidate.from_dict(d["candidate"])
        if cand.id != d.get("candidate_id", cand.id):
            raise ValueError("candidate_id does not match the embedded candidate")
        model = None
        if d.get("model") is not None and d["model"].get("family") != "precomputed":
            model = model_from_dict(d["model"])
        return cls(
            candidate=cand,
            threshold=decode_threshold(d["threshold"]),
            alpha=parse_alpha(d["alpha"]),
            m_cal=int(d["m_cal"]),
            method=d.get("method", "split-conformal"),
            model=model,
        )


def calibrate(model: ScoreModel, cal: Samples, alpha: Alpha) -> CalibratedRule:
    """Score every calibration pair and take the exact conformal quantile."""
    if len(cal) == 0:
        raise ValueError("empty calibration set")
    s = model.scores(cal.X, cal.y)
    return CalibratedRule(model.candidate, conformal_quantile(s, alpha), alpha, len(cal), model=model)


@dataclass(frozen=True)
class PredictionSet:
    """An interval ``[lower, upper]`` (regression) or a sorted label list."""

    lower: float | None = None
    upper: float | None = None
    labels: tuple[int, ...] | None = None
    full: bool = False

    @property
    def size(self) -> float:
        if self.labels is not None:
            return float(len(self.labels))
        return float(self.upper - self.lower)

    def contains(self, y) -> bool:
        if self.labels is not None:
            return int(y) in self.labels
        return bool(self.lower <= y <= self.upper)


def predict_set(rule: CalibratedRule, model: ScoreModel, x) -> PredictionSet:
    if rule.candidate.id != model.candidate.id:
        raise ValueError(f"rule candidate {rule.candidate.id!r} does not match model {model.candidate.id!r}")
    X = np.atleast_2d(x)
    if isinstance(model, GaussianPosteriorModel):
        lo, hi = model.intervals(X, rule.threshold)
        return PredictionSet(lower=float(lo[0]), upper=float(hi[0]), full=rule.infinite)
    labels = tuple(model.label_sets(X, rule.threshold)[0])
    return PredictionSet(labels=labels, full=rule.infinite)
