"""Sample planning and confidence intervals for pass-rate experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .overlap import count_passes

METHODS = ("hoeffding", "clopper_pearson", "wald")
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class ConfidenceInterval:
    estimate: float
    lower: float
    upper: float
    level: float
    method: str

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError(f"confidence level {self.level} outside (0, 1)")
        if not self.lower <= self.estimate <= self.upper:
            raise ValueError(f"estimate {self.estimate} outside [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha={alpha} outside (0, 1)")


def _check_counts(m_p: int, m: int):
    if m < 1 or not 0 <= m_p <= m:
        raise ValueError(f"invalid counts m_p={m_p}, m={m}")


def hoeffding_samples(epsilon: float, alpha: float) -> int:
    """Smallest m with 2 exp(-m eps^2 / 2) <= alpha."""
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon={epsilon} outside (0, 1]")
    _check_alpha(alpha)
    x = 2 * math.log(2 / alpha) / epsilon**2
    # absorb floating-point noise so exact integers are not pushed up by one
    return max(1, math.ceil(x - 1e-9 * max(1.0, x)))


def hoeffding_epsilon(m: int, alpha: float) -> float:
    if m < 1:
        raise ValueError("m must be at least 1")
    _check_alpha(alpha)
    return math.sqrt(2 * math.log(2 / alpha) / m)


def hoeffding_interval(m_p: int, m: int, alpha: float) -> ConfidenceInterval:
    """Interval on F = 2p - 1 with the half-width of the Hoeffding bound."""
    _check_counts(m_p, m)
    f = 2 * m_p / m - 1
    eps = hoeffding_epsilon(m, alpha)
    return ConfidenceInterval(f, f - eps, f + eps, 1 - alpha, "hoeffding")


# ---- binomial tails ----

def betainc(a, b, x) -> np.ndarray:
    """Regularized incomplete beta I_x(a, b)."""
    return special.betainc(a, b, np.clip(x, 0.0, 1.0))


def binom_cdf(k, m, p) -> np.ndarray:
    """P(X <= k) for X ~ Binomial(m, p)."""
    k, m, p = np.broadcast_arrays(np.asarray(k, float), np.asarray(m, float), np.asarray(p, float))
    out = np.where(k >= m, 1.0, 0.0)
    inner = (k >= 0) & (k < m)
    if np.any(inner):
        out = out.astype(float)
        out[inner] = betainc(m[inner] - k[inner], k[inner] + 1, 1 - p[inner])
    return out


def binom_sf(k, m, p) -> np.ndarray:
    """P(X >= k)."""
    return 1.0 - binom_cdf(np.asarray(k) - 1, m, p)


def _solve_decreasing(f, target, n_pts: int, tol: float = ROOT_TOL) -> np.ndarray:
    """Roots in [0, 1] of decreasing ``f(p) = target``, vectorized.

    Each round takes a secant step inside the bracket and then a bisection
    step, so the bracket at least halves every round.
    """
    lo, hi = np.zeros(n_pts), np.ones(n_pts)
    flo, fhi = f(lo) - target, f(hi) - target

    def shrink(mid, lo, hi, flo, fhi):
        fm = f(mid) - target
        pos = fm > 0
        return (np.where(pos, mid, lo), np.where(pos, hi, mid),
                np.where(pos, fm, flo), np.where(pos, fhi, fm))

    def done(lo, hi):
        # tolerance relative to the nearer end of [0, 1]: tiny roots need tiny brackets
        scale = np.minimum(np.minimum(hi, 1 - lo), 1.0)
        return np.all((hi - lo < tol * scale) | (hi - lo <= 4 * np.spacing(hi)))

    for _ in range(400):
        with np.errstate(divide="ignore", invalid="ignore"):
            sec = lo - flo * (hi - lo) / (fhi - flo)
        ok = np.isfinite(sec) & (sec > lo) & (sec < hi)
        lo, hi, flo, fhi = shrink(np.where(ok, sec, 0.5 * (lo + hi)), lo, hi, flo, fhi)
        if done(lo, hi):
            break
        lo, hi, flo, fhi = shrink(0.5 * (lo + hi), lo, hi, flo, fhi)
        if done(lo, hi):
            break
    return 0.5 * (lo + hi)


def cp_bounds(m_p, m, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Clopper-Pearson (p_lower, p_upper) for arrays of counts."""
    _check_alpha(alpha)
    m_p, m = np.broadcast_arrays(np.atleast_1d(np.asarray(m_p, float)), np.atleast_1d(np.asarray(m, float)))
    if np.any(m < 1) or np.any(m_p < 0) or np.any(m_p > m):
        raise ValueError("invalid counts")
    n = m_p.size
    # upper: P(X <= m_p; p) = alpha/2, decreasing in p
    upper = _solve_decreasing(lambda p: binom_cdf(m_p, m, p), alpha / 2, n)
    upper = np.where(m_p >= m, 1.0, upper)
    # lower: P(X >= m_p; p) = alpha/2, increasing in p
    lower = _solve_decreasing(lambda p: -binom_sf(m_p, m, p), -alpha / 2, n)
    lower = np.where(m_p <= 0, 0.0, lower)
    return lower, upper


def clopper_pearson(m_p: int, m: int, alpha: float) -> ConfidenceInterval:
    """Exact binomial interval on the pass probability."""
    _check_counts(m_p, m)
    lo, hi = cp_bounds(m_p, m, alpha)
    p = m_p / m
    return ConfidenceInterval(p, float(min(lo[0], p)), float(max(hi[0], p)), 1 - alpha, "clopper_pearson")


def _binom_weights(m: int, p: float, span: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes j and their binomial probabilities, truncated to mean +- span sigma."""
    if p in (0.0, 1.0):
        j = np.array([int(round(p * m))])
        return j, np.ones(1)
    sd = math.sqrt(m * p * (1 - p))
    lo = max(0, int(math.floor(m * p - span * sd - 2)))
    hi = min(m, int(math.ceil(m * p + span * sd + 2)))
    j = np.arange(lo, hi + 1)
    logc = (math.lgamma(m + 1) - np.vectorize(math.lgamma)(j + 1.0)
            - np.vectorize(math.lgamma)(m - j + 1.0))
    logw = logc + j * math.log(p) + (m - j) * math.log1p(-p)
    w = np.exp(logw)
    return j, w


def expected_cp_width(m: int, p_succ: float, alpha: float) -> float:
    """Binomial-weighted mean of the Clopper-Pearson width p_upper - p_lower."""
    if m < 1 or not 0 <= p_succ <= 1:
        raise ValueError("invalid m or p_succ")
    j, w = _binom_weights(m, p_succ)
    lo, hi = cp_bounds(j, np.full(len(j), m), alpha)
    return float(np.sum(w * (hi - lo)))


# ---- normal approximation ----

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)


def normal_quantile(q: float) -> float:
    """Standard normal quantile: rational approximation refined by one Halley step."""
    if not 0 < q < 1:
        raise ValueError(f"quantile level {q} outside (0, 1)")
    plow = 0.02425
    if q < plow:
        r = math.sqrt(-2 * math.log(q))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1)
    elif q > 1 - plow:
        r = math.sqrt(-2 * math.log(1 - q))
        x = -(((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1)
    else:
        r = (q - 0.5) ** 2
        s = q - 0.5
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - q
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def wald_interval(m_p: int, m: int, alpha: float) -> ConfidenceInterval:
    _check_counts(m_p, m)
    _check_alpha(alpha)
    p = m_p / m
    h = normal_quantile(1 - alpha / 2) * math.sqrt(p * (1 - p) / m)
    return ConfidenceInterval(p, max(0.0, p - h), min(1.0, p + h), 1 - alpha, "wald")


def expected_wald_width(m: int, p_succ: float, alpha: float) -> float:
    j, w = _binom_weights(m, p_succ)
    z = normal_quantile(1 - alpha / 2)
    ph = j / m
    h = z * np.sqrt(ph * (1 - ph) / m)
    width = np.minimum(1.0, ph + h) - np.maximum(0.0, ph - h)
    return float(np.sum(w * width))


# ---- resampling and fidelity intervals ----

def bootstrap_stderr(values: Sequence[float], resamples: int = 1000, rng=None) -> float:
    """Standard deviation of bootstrap-resampled means.

    Values are sorted first, so the result depends only on the multiset of
    values and the seed, not on their order.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2:
        raise ValueError("bootstrap needs at least two values")
    if resamples < 100:
        raise ValueError("use at least 100 resamples")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    if v[0] == v[-1]:
        # resampled means of a constant differ only by rounding
        return 0.0
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    idx = g.integers(0, v.size, size=(resamples, v.size))
    return float(np.std(v[idx].mean(axis=1), ddof=1))


def fidelity_interval(records: Iterable, alpha: float = 0.05, method: str = "clopper_pearson") -> ConfidenceInterval:
    """Interval on F = 2 p - 1 from pass/fail records."""
    m_p, m = count_passes(records)
    if m == 0:
        raise ValueError("no trial records")
    return fidelity_interval_from_counts(m_p, m, alpha, method)


def fidelity_interval_from_counts(m_p: int, m: int, alpha: float = 0.05,
                                  method: str = "clopper_pearson") -> ConfidenceInterval:
    if method == "hoeffding":
        return hoeffding_interval(m_p, m, alpha)
    if method == "clopper_pearson":
        ci = clopper_pearson(m_p, m, alpha)
    elif method == "wald":
        ci = wald_interval(m_p, m, alpha)
    else:
        raise ValueError(f"unknown interval method {method!r}")
    return ConfidenceInterval(2 * ci.estimate - 1, 2 * ci.lower - 1, 2 * ci.upper - 1, ci.level, method)


def cp_coverage(p: float, m: int, alpha: float, experiments: int, rng=None) -> tuple[float, float]:
    """Monte-Carlo coverage of Clopper-Pearson intervals and its standard error."""
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    k = g.binomial(m, p, size=experiments)
    uniq, inv = np.unique(k, return_inverse=True)
    lo, hi = cp_bounds(uniq, np.full(len(uniq), m), alpha)
    hit = (lo[inv] <= p) & (p <= hi[inv])
    c = float(hit.mean())
    return c, math.sqrt(max(c * (1 - c), 1e-12) / experiments)
