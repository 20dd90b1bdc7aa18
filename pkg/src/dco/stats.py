"""Statistical utilities shared by the calibration code and the experiment harness.

Contents: the linear-interpolation percentile used for P95 metrics, a paired
Wilcoxon signed-rank test (exact and normal approximation), a Monte Carlo check
of DKW-style calibration-quantile concentration, and a continued-fraction
regularized incomplete beta function used as an analytic oracle for the
Dirichlet risk bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "percentile",
    "PairedSamples",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "UniformSampler",
    "GaussianSampler",
    "ConcentrationCheck",
    "concentration_bound",
    "check_quantile_concentration",
    "regularized_incomplete_beta",
]


def percentile(values, p: float) -> float:
    """Empirical quantile with linear interpolation at index ``p * (n - 1)``."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return float(np.quantile(arr, p, method="linear"))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedSamples:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if a.shape != b.shape:
            raise ValueError(f"paired samples differ in length: {a.size} vs {b.size}")
        if a.size < 1:
            raise ValueError("paired samples need at least one pair")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return int(self.a.size)

    def differences(self) -> np.ndarray:
        return self.a - self.b


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    statistic: float  # W+, sum of ranks of positive differences
    n_used: int  # pairs left after dropping zero differences
    mode: str
    degenerate: bool = False


def _signed_ranks(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from scipy.stats import rankdata

    absd = np.abs(d)
    ranks = rankdata(absd, method="average")
    return ranks, absd


def _exact_upper_tail(doubled_ranks: np.ndarray, w2: int) -> tuple[float, float]:
    """P(T <= w) and P(T >= w) for T = sum of ranks under random signs.

    Ranks are doubled so that average ranks of ties (half-integers) stay
    integral; the null distribution is built by convolving one rank at a time.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    lower = float(counts[: w2 + 1].sum())
    upper = float(counts[w2:].sum())
    return lower, upper


def wilcoxon_signed_rank(pairs: PairedSamples, mode: str = "auto") -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped before ranking and tied absolute differences
    receive average ranks. ``mode`` is ``"exact"`` (full null distribution of
    the rank sum), ``"normal"`` (normal approximation with tie and continuity
    corrections) or ``"auto"`` (exact for at most 12 non-zero pairs).
    """
    if mode not in ("exact", "normal", "auto"):
        raise ValueError(f"unknown mode {mode!r}")
    d = pairs.differences()
    if not np.all(np.isfinite(d)):
        raise ValueError("paired differences must be finite")
    d = d[d != 0.0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(p_value=1.0, statistic=0.0, n_used=0, mode=mode, degenerate=True)
    if mode == "auto":
        mode = "exact" if n <= 12 else "normal"

    ranks, absd = _signed_ranks(d)
    w_plus = float(ranks[d > 0].sum())

    if mode == "exact":
        doubled = np.rint(2.0 * ranks).astype(int)
        w2 = int(round(2.0 * w_plus))
        lower, upper = _exact_upper_tail(doubled, w2)
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(p_value=p, statistic=w_plus, n_used=n, mode="exact")

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(absd, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0.0:
        return WilcoxonResult(p_value=1.0, statistic=w_plus, n_used=n, mode="normal", degenerate=True)
    dev = max(abs(w_plus - mean) - 0.5, 0.0)
    z = dev / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(p_value=p, statistic=w_plus, n_used=n, mode="normal")


# ---------------------------------------------------------------------------
# Quantile concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformSampler:
    low: float = 0.0
    high: float = 1.0

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=shape)

    def quantile(self, p: float) -> float:
        return self.low + p * (self.high - self.low)

    def density_floor(self, q: float, t: float) -> float:
        return 1.0 / (self.high - self.low)


@dataclass(frozen=True)
class GaussianSampler:
    mean: float = 0.0
    stddev: float = 1.0

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.normal(self.mean, self.stddev, size=shape)

    def quantile(self, p: float) -> float:
        from scipy.stats import norm

        return float(norm.ppf(p, loc=self.mean, scale=self.stddev))

    def density_floor(self, q: float, t: float) -> float:
        """Smallest density on ``[q - t, q + t]``."""
        from scipy.stats import norm

        far = max(abs(q - t - self.mean), abs(q + t - self.mean))
        return float(norm.pdf(far, scale=self.stddev))


@dataclass(frozen=True)
class ConcentrationCheck:
    t: float
    density_floor_c: float
    m_cal: int
    alpha: float
    bound: float
    observed_rate: float
    trials: int
    slack: float
    passed: bool
    vacuous: bool


def concentration_bound(m: int, c: float, t: float) -> float:
    """``2 exp(-2 m (c t - 2/m)_+^2)`` capped at one."""
    gap = max(c * t - 2.0 / m, 0.0)
    return min(1.0, 2.0 * math.exp(-2.0 * m * gap * gap))


def check_quantile_concentration(
    sampler,
    alpha: float,
    m_cal: int,
    t: float,
    c: float,
    trials: int,
    seed: int = 0,
    chunk: int = 1000,
) -> ConcentrationCheck:
    """Monte Carlo rate of ``|q_hat - q*| > t`` against the concentration bound.

    ``sampler`` must expose ``draw(rng, shape)`` and ``quantile(p)``. The check
    passes when the observed exceedance rate is at most the bound plus three
    binomial standard errors (evaluated at the bound).
    """
    from .conformal import k_alpha

    if t <= 0 or c <= 0:
        raise ValueError("t and c must be positive")
    k = k_alpha(m_cal, alpha)
    if k > m_cal:
        raise ValueError(f"k_alpha={k} exceeds m={m_cal}; the quantile is infinite")
    bound = concentration_bound(m_cal, c, t)
    vacuous = c * t <= 2.0 / m_cal
    slack = 3.0 * math.sqrt(bound * (1.0 - bound) / trials)
    if vacuous:
        return ConcentrationCheck(t, c, m_cal, float(alpha), 1.0, 0.0, 0, 0.0, True, True)

    q_star = sampler.quantile(1.0 - float(alpha))
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        draws = sampler.draw(rng, (b, m_cal))
        q_hat = np.partition(draws, k - 1, axis=1)[:, k - 1]
        exceed += int(np.count_nonzero(np.abs(q_hat - q_star) > t))
        done += b
    rate = exceed / trials
    return ConcentrationCheck(
        t=t,
        density_floor_c=c,
        m_cal=m_cal,
        alpha=float(alpha),
        bound=bound,
        observed_rate=rate,
        trials=trials,
        slack=slack,
        passed=rate <= bound + slack,
        vacuous=False,
    )


# ---------------------------------------------------------------------------
# Regularized incomplete beta
# ---------------------------------------------------------------------------

_TINY = 1e-300


def _beta_continued_fraction(x: float, a: float, b: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    # modified Lentz evaluation
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``.

    Evaluated by continued fraction on whichever of ``(x, a, b)`` and
    ``(1 - x, b, a)`` converges faster.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(x, a, b) / a
    return 1.0 - front * _beta_continued_fraction(1.0 - x, b, a) / b

