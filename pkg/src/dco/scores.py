"""Candidate structures, synthetic tasks and fitted non-conformity score models.

A candidate ``phi`` fixes the structural choices of a score function. Fitting it
on a training split produces an immutable :class:`ScoreModel` whose score
``S(x, y)`` induces nested sets ``{y : S(x, y) <= lam}``.

Three model families are provided:

* :class:`GaussianPosteriorModel` -- conjugate Bayesian linear regression with
  known noise variance; the score is the negative log posterior predictive
  density and sets are intervals.
* :class:`SoftmaxScorer` -- a shared-variance Gaussian discriminant (a
  multinomial-logit scorer) evaluated under ``T`` fixed feature-dropout masks,
  with either the averaged-probability or the self-weighted ("aoi") score.
* :class:`PrecomputedScores` -- per-label scores read from CSV files.
"""

from __future__ import annotations

import csv
import math
import zlib
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

__all__ = [
    "SchemaError",
    "Params",
    "Candidate",
    "GaussianPredictive",
    "ClassScoreRow",
    "Samples",
    "IndexLog",
    "SyntheticTask",
    "PrecomputedTask",
    "ScoreModel",
    "GaussianPosteriorModel",
    "SoftmaxScorer",
    "PrecomputedScores",
    "ScoreTable",
    "fit_candidate",
    "score",
    "set_size_at",
    "load_precomputed",
    "export_precomputed",
    "model_from_dict",
    "regression_candidates",
    "classification_candidates",
    "PROB_CLAMP",
]

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
PROB_CLAMP = 1e-12
TASK_KINDS = ("regression", "classification", "precomputed")


class SchemaError(ValueError):
    """Raised when an input file does not match its documented schema."""


class Params(Mapping):
    """Read-only parameter map attached to a candidate."""

    def __init__(self, items=None):
        self._d = dict(items or {})

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        return hash(tuple(sorted((k, repr(v)) for k, v in self._d.items())))

    def __eq__(self, other):
        return isinstance(other, Mapping) and dict(self) == dict(other)

    def __repr__(self):
        return f"Params({self._d!r})"


@dataclass(frozen=True)
class Candidate:
    id: str
    kind: str
    params: Params = field(default_factory=Params)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown candidate kind {self.kind!r}")
        if not isinstance(self.params, Params):
            object.__setattr__(self, "params", Params(self.params))

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Candidate":
        return cls(id=str(d["id"]), kind=str(d["kind"]), params=Params(d.get("params", {})))


def regression_candidates(prior_scales=(1.0, 0.02)) -> list[Candidate]:
    return [Candidate(f"prior_{c:g}", "regression", {"prior_scale": float(c)}) for c in prior_scales]


def classification_candidates(
    score_variants=("posterior_nll", "aoi_nll"),
    dropouts=(0.05, 0.10, 0.20, 0.30),
    temperatures=(1.0, 1.5),
    draws: int = 20,
) -> list[Candidate]:
    """The default 16-member classification class (variant x dropout x temperature).

    Temperature plays the part of the head width in the neural setting: it
    changes the sharpness of the per-draw softmax without changing the argmax.
    """
    out = []
    i = 1
    for variant in score_variants:
        for p in dropouts:
            for temp in temperatures:
                params = {"score_variant": variant, "dropout": p, "temperature": temp, "draws": draws}
                out.append(Candidate(f"cand_{i:03d}", "classification", params))
                i += 1
    return out


# ---------------------------------------------------------------------------
# Predictive primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPredictive:
    mean: float
    stddev: float

    def __post_init__(self):
        if not (self.stddev > 0 and math.isfinite(self.stddev)):
            raise ValueError(f"stddev must be positive and finite, got {self.stddev}")

    def logpdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mean) / self.stddev
        return -HALF_LOG_2PI - math.log(self.stddev) - 0.5 * z * z

    def nll(self, y):
        return -self.logpdf(y)

    def half_width(self, lam: float) -> float:
        return float(_half_width(np.float64(self.stddev), lam))

    def interval(self, lam: float) -> tuple[float, float]:
        h = self.half_width(lam)
        return (self.mean - h, self.mean + h)


def _half_width(sd, lam):
    """Half-width of ``{y : -log N(y; mu, sd^2) <= lam}`` (vectorised over sd)."""
    sd = np.asarray(sd, dtype=float)
    if lam == math.inf:
        return np.full(sd.shape, math.inf)
    if lam == -math.inf:
        return np.zeros(sd.shape)
    excess = lam - HALF_LOG_2PI - np.log(sd)
    return np.where(excess > 0.0, sd * np.sqrt(2.0 * np.maximum(excess, 0.0)), 0.0)


@dataclass(frozen=True)
class ClassScoreRow:
    scores: np.ndarray
    true_label: int

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        if not np.all(np.isfinite(s)):
            raise ValueError("class scores must be finite")
        if not 0 <= int(self.true_label) < s.size:
            raise ValueError(f"true_label {self.true_label} out of range for K={s.size}")
        object.__setattr__(self, "scores", s)

    @property
    def class_count(self) -> int:
        return int(self.scores.size)


# ---------------------------------------------------------------------------
# Samples and index instrumentation
# ---------------------------------------------------------------------------


class IndexLog:
    """Records every dataset index materialised into a view."""

    def __init__(self):
        self._seen: set[int] = set()

    def record(self, indices) -> None:
        self._seen.update(int(i) for i in np.asarray(indices).ravel())

    @property
    def indices(self) -> frozenset[int]:
        return frozenset(self._seen)


@dataclass(frozen=True)
class Samples:
    """Labelled rows with their positions in the parent dataset.

    ``X`` is ``(n, d)`` features; for precomputed tasks it is a single column
    holding row positions in the score tables.
    """

    X: np.ndarray
    y: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return int(self.y.shape[0])

    def view(self, idx, log: IndexLog | None = None) -> "Samples":
        idx = np.asarray(idx, dtype=np.int64)
        if log is not None:
            log.record(self.indices[idx])
        return Samples(self.X[idx], self.y[idx], self.indices[idx])

    def union(self, other: "Samples") -> "Samples":
        return Samples(
            np.concatenate([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            np.concatenate([self.indices, other.indices]),
        )


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


@dataclass(frozen=True)
class SyntheticTask:
    """Synthetic data source with hidden generating parameters.

    Regression: ``x ~ N(0, I_d)``, ``y = b + x.theta + noise_scale * eps`` with
    Laplace-distributed coefficients of scale ``signal_scale``.
    Classification: uniform labels, ``x ~ N(mu_y, noise_scale^2 I_d)`` with
    class means drawn from ``N(0, signal_scale^2 I_d)``.
    The generating parameters depend only on ``rng_seed``; each call to
    :meth:`sample` draws fresh rows from its own seed.
    """

    kind: str
    dimension: int = 5
    noise_scale: float = 1.0
    class_count: int = 2
    rng_seed: int = 0
    signal_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise ValueError(f"synthetic task kind must be regression or classification, got {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")
        if self.kind == "classification" and self.class_count < 2:
            raise ValueError("class_count must be >= 2")

    @cached_property
    def true_params(self) -> dict:
        rng = np.random.default_rng([self.rng_seed, 0x5EED])
        if self.kind == "regression":
            theta = rng.laplace(0.0, self.signal_scale, size=self.dimension)
            return {"intercept": float(rng.normal()), "coef": theta}
        means = rng.normal(0.0, self.signal_scale, size=(self.class_count, self.dimension))
        return {"means": means}

    @property
    def max_size(self) -> float:
        return float(self.class_count) if self.kind == "classification" else math.inf

    def sample(self, n: int, seed: int) -> Samples:
        rng = np.random.default_rng(seed)
        if self.kind == "regression":
            X = rng.standard_normal((n, self.dimension))
            tp = self.true_params
            y = tp["intercept"] + X @ tp["coef"] + self.noise_scale * rng.standard_normal(n)
        else:
            y = rng.integers(0, self.class_count, size=n)
            X = self.true_params["means"][y] + self.noise_scale * rng.standard_normal((n, self.dimension))
        return Samples(X, y, np.arange(n, dtype=np.int64))

    def true_mean(self, X) -> np.ndarray:
        tp = self.true_params
        return tp["intercept"] + np.asarray(X, dtype=float) @ tp["coef"]

    def population_risk(self, model: "ScoreModel", lam: float, n_mc: int = 200_000, seed: int = 12345):
        """Population miscoverage ``P(Y not in C(X))`` and its standard error.

        For regression the conditional miscoverage given ``x`` is exact (the set
        is an interval and ``Y | x`` is Gaussian); the outer expectation over
        ``x`` uses Gauss-Hermite quadrature when ``d == 1`` (standard error 0)
        and Monte Carlo over ``x`` otherwise.
        """
        if self.kind == "regression":
            if self.dimension == 1:
                nodes, weights = np.polynomial.hermite_e.hermegauss(200)
                X = nodes[:, None]
                w = weights / weights.sum()
                return float(np.dot(w, self._conditional_miss(model, X, lam))), 0.0
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((n_mc, self.dimension))
            miss = self._conditional_miss(model, X, lam)
            return float(miss.mean()), float(miss.std(ddof=1) / math.sqrt(n_mc))
        data = self.sample(n_mc, seed)
        miss = model.scores(data.X, data.y) > lam
        return float(miss.mean()), float(miss.std(ddof=1) / math.sqrt(n_mc))

    def _conditional_miss(self, model: "GaussianPosteriorModel", X, lam):
        mu, sd = model.predictive(X)
        h = _half_width(sd, lam)
        m = self.true_mean(X)
        s = self.noise_scale
        covered = norm.cdf((mu + h - m) / s) - norm.cdf((mu - h - m) / s)
        return 1.0 - covered


# ---------------------------------------------------------------------------
# Score models
# ---------------------------------------------------------------------------


class ScoreModel:
    """Interface shared by fitted score models (immutable after fit)."""

    candidate: Candidate
    kind: str
    units: str

    def scores(self, X, y) -> np.ndarray:
        raise NotImplementedError

    def sizes(self, X, lam: float) -> np.ndarray:
        raise NotImplementedError

    def max_size(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianPosteriorModel(ScoreModel):
    candidate: Candidate
    coef_mean: np.ndarray  # intercept first
    coef_chol_inv: np.ndarray  # L^{-1} where L L^T is the posterior precision
    noise_var: float
    y_lo: float
    y_hi: float
    grid_points: int = 300

    kind = "regression"
    units = "width"

    def _design(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.hstack([np.ones((X.shape[0], 1)), X])

    def predictive(self, X) -> tuple[np.ndarray, np.ndarray]:
        Z = self._design(X)
        mu = Z @ self.coef_mean
        v = Z @ self.coef_chol_inv.T
        var = self.noise_var + np.einsum("ij,ij->i", v, v)
        return mu, np.sqrt(var)

    def predictive_at(self, x) -> GaussianPredictive:
        mu, sd = self.predictive(np.atleast_2d(x))
        return GaussianPredictive(float(mu[0]), float(sd[0]))

    def scores(self, X, y) -> np.ndarray:
        mu, sd = self.predictive(X)
        z = (np.asarray(y, dtype=float) - mu) / sd
        return HALF_LOG_2PI + np.log(sd) + 0.5 * z * z

    def intervals(self, X, lam: float) -> tuple[np.ndarray, np.ndarray]:
        mu, sd = self.predictive(X)
        h = _half_width(sd, lam)
        return mu - h, mu + h

    def sizes(self, X, lam: float, mode: str = "analytic", grid_points: int | None = None) -> np.ndarray:
        if mode == "analytic":
            _, sd = self.predictive(X)
            return 2.0 * _half_width(sd, lam)
        if mode != "grid":
            raise ValueError(f"unknown size mode {mode!r}")
        grid = self.response_grid(grid_points)
        if lam == math.inf:
            return np.full(np.atleast_2d(X).shape[0], grid[-1] - grid[0])
        mu, sd = self.predictive(X)
        z = (grid[None, :] - mu[:, None]) / sd[:, None]
        inside = HALF_LOG_2PI + np.log(sd)[:, None] + 0.5 * z * z <= lam
        # point count times spacing is within one spacing of the true width
        step = grid[1] - grid[0] if grid.size > 1 else 0.0
        return np.minimum(np.count_nonzero(inside, axis=1) * step, grid[-1] - grid[0])

    def response_grid(self, grid_points: int | None = None) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, grid_points or self.grid_points)

    def max_size(self) -> float:
        return float(self.y_hi - self.y_lo)

    def to_dict(self) -> dict:
        return {
            "family": "gaussian_posterior",
            "candidate": self.candidate.to_dict(),
            "coef_mean": self.coef_mean.tolist(),
            "coef_chol_inv": self.coef_chol_inv.tolist(),
            "noise_var": self.noise_var,
            "y_lo": self.y_lo,
            "y_hi": self.y_hi,
            "grid_points": self.grid_points,
        }


class _LabelScoreModel(ScoreModel):
    """Shared set logic for models that score every label."""

    units = "labels"

    def score_matrix(self, X) -> np.ndarray:
        raise NotImplementedError

    def _matrix(self, X) -> np.ndarray:
        # scores and sizes are usually asked for on the same array in a row
        cached = self.__dict__.get("_last")
        if cached is not None and cached[0] is X:
            return cached[1]
        S = self.score_matrix(X)
        if isinstance(X, np.ndarray):
            object.__setattr__(self, "_last", (X, S))
        return S

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_last", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def scores(self, X, y) -> np.ndarray:
        S = self._matrix(X)
        y = np.asarray(y, dtype=np.int64).ravel()
        return S[np.arange(S.shape[0]), y]

    def sizes(self, X, lam: float) -> np.ndarray:
        S = self._matrix(X)
        return np.count_nonzero(S <= lam, axis=1).astype(float)

    def label_sets(self, X, lam: float) -> list[list[int]]:
        S = self._matrix(X)
        return [np.flatnonzero(row <= lam).tolist() for row in S]


@dataclass(frozen=True, eq=False)
class SoftmaxScorer(_LabelScoreModel):
    candidate: Candidate
    centroids: np.ndarray  # (K, d)
    log_prior: np.ndarray  # (K,)
    scale2: float
    masks: np.ndarray  # (T, d) dropout masks, kept coordinates scaled by 1/sqrt(1-p)
    temperature: float
    score_variant: str
    clamp: float = PROB_CLAMP

    kind = "classification"

    @property
    def class_count(self) -> int:
        return int(self.centroids.shape[0])

    def prob_draws(self, X) -> np.ndarray:
        """Per-draw class probabilities, shape ``(n, T, K)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, (K, d) = X.shape[0], self.centroids.shape
        diff = X[:, None, :] - self.centroids[None, :, :]  # (n, K, d)
        sq = ((diff * diff).reshape(n * K, d) @ (self.masks * self.masks).T).reshape(n, K, -1).transpose(0, 2, 1)
        logits = (self.log_prior[None, None, :] - sq / (2.0 * self.scale2)) / self.temperature
        return np.exp(logits - logsumexp(logits, axis=2, keepdims=True))

    def score_matrix(self, X) -> np.ndarray:
        P = self.prob_draws(X)
        if self.score_variant == "posterior_nll":
            p = P.mean(axis=1)
        else:
            total = P.sum(axis=1)
            p = np.divide((P * P).sum(axis=1), total, out=np.zeros_like(total), where=total > 0)
        return -np.log(np.maximum(p, self.clamp))

    def max_size(self) -> float:
        return float(self.class_count)

    def to_dict(self) -> dict:
        return {
            "family": "softmax",
            "candidate": self.candidate.to_dict(),
            "centroids": self.centroids.tolist(),
            "log_prior": self.log_prior.tolist(),
            "scale2": self.scale2,
            "masks": self.masks.tolist(),
            "temperature": self.temperature,
            "score_variant": self.score_variant,
            "clamp": self.clamp,
        }


@dataclass(frozen=True, eq=False)
class PrecomputedScores(_LabelScoreModel):
    candidate: Candidate
    table: np.ndarray  # (n, K)

    kind = "precomputed"

    @property
    def class_count(self) -> int:
        return int(self.table.shape[1])

    def score_matrix(self, X) -> np.ndarray:
        X = np.asarray(X)
        rows = X.reshape(X.shape[0] if X.ndim else 1, -1)[:, 0].astype(np.int64)
        return self.table[rows]

    def max_size(self) -> float:
        return float(self.class_count)

    def to_dict(self) -> dict:
        return {"family": "precomputed", "candidate": self.candidate.to_dict(), "class_count": self.class_count}


def model_from_dict(d: Mapping) -> ScoreModel:
    family = d.get("family")
    cand = Candidate.from_dict(d["candidate"])
    if family == "gaussian_posterior":
        return GaussianPosteriorModel(
            cand,
            np.asarray(d["coef_mean"], dtype=float),
            np.asarray(d["coef_chol_inv"], dtype=float),
            float(d["noise_var"]),
            float(d["y_lo"]),
            float(d["y_hi"]),
            int(d.get("grid_points", 300)),
        )
    if family == "softmax":
        return SoftmaxScorer(
            cand,
            np.asarray(d["centroids"], dtype=float),
            np.asarray(d["log_prior"], dtype=float),
            float(d["scale2"]),
            np.asarray(d["masks"], dtype=float),
            float(d["temperature"]),
            str(d["score_variant"]),
            float(d.get("clamp", PROB_CLAMP)),
        )
    raise SchemaError(f"model family {family!r} cannot be rebuilt from JSON")


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def fit_candidate(task, train: Samples, cand: Candidate, seed: int | None = None) -> ScoreModel:
    """Fit candidate ``cand`` on the training rows of ``task``.

    ``seed`` only affects randomised structure (the dropout masks of
    classification candidates); by default it is derived from the task seed
    and the candidate id.
    """
    if cand.kind != task.kind:
        raise ValueError(f"candidate kind {cand.kind!r} does not match task kind {task.kind!r}")
    if isinstance(task, PrecomputedTask):
        return PrecomputedScores(cand, task.tables[cand.id].scores)
    if len(train) == 0:
        raise ValueError("empty training set")
    if seed is None:
        seed = task.rng_seed
    if task.kind == "regression":
        return _fit_regression(task, train, cand)
    return _fit_classification(task, train, cand, seed)


def _fit_regression(task: SyntheticTask, train: Samples, cand: Candidate) -> GaussianPosteriorModel:
    c = float(cand.params.get("prior_scale", 1.0))
    if not c > 0:
        raise ValueError("non-positive prior scale")
    intercept_var = float(cand.params.get("intercept_var", 10.0))
    X = np.asarray(train.X, dtype=float)
    y = np.asarray(train.y, dtype=float)
    Z = np.hstack([np.ones((X.shape[0], 1)), X])
    noise_var = float(task.noise_scale) ** 2
    prior_prec = np.full(Z.shape[1], 1.0 / (c * c))
    prior_prec[0] = 1.0 / intercept_var
    precision = Z.T @ Z / noise_var + np.diag(prior_prec)
    L = np.linalg.cholesky(precision)
    L_inv = np.linalg.solve(L, np.eye(L.shape[0]))
    mean = L_inv.T @ (L_inv @ (Z.T @ y / noise_var))
    return GaussianPosteriorModel(
        cand,
        mean,
        L_inv,
        noise_var,
        float(y.min() - 2.0),
        float(y.max() + 2.0),
    )


def _fit_classification(task: SyntheticTask, train: Samples, cand: Candidate, seed: int) -> SoftmaxScorer:
    p = cand.params
    variant = str(p.get("score_variant", "posterior_nll"))
    if variant not in ("posterior_nll", "aoi_nll"):
        raise ValueError(f"unknown score variant {variant!r}")
    dropout = float(p.get("dropout", 0.0))
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    temperature = float(p.get("temperature", 1.0))
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    draws = int(p.get("draws", 20))

    K, d = task.class_count, task.dimension
    X = np.asarray(train.X, dtype=float)
    y = np.asarray(train.y, dtype=np.int64)
    counts = np.bincount(y, minlength=K).astype(float)
    sums = np.zeros((K, d))
    np.add.at(sums, y, X)
    # classes absent from train fall back to the global mean
    centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1.0)[:, None], X.mean(axis=0))
    resid = X - centroids[y]
    scale2 = float(max((resid * resid).sum() / max(X.shape[0] * d - K, 1), 1e-12))
    log_prior = np.log((counts + 1.0) / (counts.sum() + K))

    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, _stable_hash(cand.id)])
    keep = rng.random((draws, d)) >= dropout
    masks = keep / math.sqrt(1.0 - dropout)
    return SoftmaxScorer(cand, centroids, log_prior, scale2, masks, temperature, variant)


# ---------------------------------------------------------------------------
# Pointwise helpers
# ---------------------------------------------------------------------------


def score(model: ScoreModel, x, y) -> float:
    """Non-conformity score of a single pair ``(x, y)``."""
    return float(model.scores(np.atleast_2d(x), np.atleast_1d(y))[0])


def set_size_at(model: ScoreModel, x, lam: float, mode: str = "analytic", grid_points: int | None = None) -> float:
    """Size of ``{y : S(x, y) <= lam}``: interval width or label count."""
    X = np.atleast_2d(x)
    if isinstance(model, GaussianPosteriorModel):
        return float(model.sizes(X, lam, mode=mode, grid_points=grid_points)[0])
    return float(model.sizes(X, lam)[0])


# ---------------------------------------------------------------------------
# Precomputed score files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreTable:
    scores: np.ndarray  # (n, K)
    labels: np.ndarray  # (n,)
    sample_ids: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return int(self.scores.shape[0])

    @property
    def class_count(self) -> int:
        return int(self.scores.shape[1])


def load_precomputed(path, require_labels: bool = True) -> ScoreTable:
    """Read a ``sample_id,true_label,score_0,...,score_{K-1}`` CSV file.

    With ``require_labels=False`` the ``true_label`` column may be absent
    (rows to predict on); labels are then returned as ``-1``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not header or header[0] != "sample_id":
        raise SchemaError(f"{path}: first column must be 'sample_id'")
    has_label = len(header) > 1 and header[1] == "true_label"
    if require_labels and not has_label:
        raise SchemaError(f"{path}: missing 'true_label' column")
    score_cols = header[2:] if has_label else header[1:]
    K = len(score_cols)
    if K < 1 or score_cols != [f"score_{k}" for k in range(K)]:
        raise SchemaError(f"{path}: score columns must be score_0..score_{{K-1}}, got {score_cols}")

    ids, labels = [], []
    table = np.empty((len(rows), K))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
        ids.append(row[0])
        if has_label:
            try:
                lab = int(row[1])
            except ValueError:
                raise SchemaError(f"{path}: row {i + 1}: non-integer label {row[1]!r}") from None
            if not 0 <= lab < K:
                raise SchemaError(f"{path}: row {i + 1}: label {lab} out of range for K={K}")
            labels.append(lab)
        else:
            labels.append(-1)
        cells = row[2:] if has_label else row[1:]
        try:
            table[i] = [float(c) for c in cells]
        except ValueError:
            raise SchemaError(f"{path}: row {i + 1}: non-numeric score cell") from None
    if not np.all(np.isfinite(table)):
        raise SchemaError(f"{path}: scores must be finite")
    return ScoreTable(table, np.asarray(labels, dtype=np.int64), tuple(ids))


def export_precomputed(path, scores, labels, sample_ids=None) -> None:
    """Write a score table in the CSV schema read by :func:`load_precomputed`."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    n, K = scores.shape
    if sample_ids is None:
        sample_ids = [str(i) for i in range(n)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "true_label", *[f"score_{k}" for k in range(K)]])
        for sid, lab, row in zip(sample_ids, labels, scores):
            w.writerow([sid, int(lab), *[repr(float(v)) for v in row]])


@dataclass(frozen=True, eq=False)
class PrecomputedTask:
    """A fixed dataset of per-candidate score tables, one ``<id>.csv`` per candidate."""

    directory: str
    tables: dict[str, ScoreTable] = field(repr=False)

    kind = "precomputed"

    @classmethod
    def from_directory(cls, directory) -> "PrecomputedTask":
        directory = Path(directory)
        files = sorted(directory.glob("*.csv"))
        if not files:
            raise SchemaError(f"{directory}: no candidate CSV files")
        tables = {f.stem: load_precomputed(f) for f in files}
        ref = next(iter(tables.values()))
        for cid, t in tables.items():
            if t.sample_ids != ref.sample_ids or not np.array_equal(t.labels, ref.labels):
                raise SchemaError(f"{cid}.csv: sample ids or labels differ from the other candidates")
            if t.class_count != ref.class_count:
                raise SchemaError(f"{cid}.csv: class count differs from the other candidates")
        return cls(str(directory), tables)

    @property
    def candidates(self) -> list[Candidate]:
        return [Candidate(cid, "precomputed", {}) for cid in self.tables]

    @property
    def n_rows(self) -> int:
        return next(iter(self.tables.values())).n_rows

    @property
    def class_count(self) -> int:
        return next(iter(self.tables.values())).class_count

    @property
    def max_size(self) -> float:
        return float(self.class_count)

    def sample(self, n: int | None = None, seed: Any = None) -> Samples:
        """The full fixed dataset (``n`` and ``seed`` are ignored)."""
        labels = next(iter(self.tables.values())).labels
        idx = np.arange(labels.size, dtype=np.int64)
        return Samples(idx[:, None], labels.copy(), idx)
