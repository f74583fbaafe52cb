"""Statistical primitives used to compare noisy proxy scores.

Mann-Whitney U-test (exact null distribution for small tie-free samples,
tie-corrected normal approximation otherwise), the variance-over-mean
coefficient of variation, Kendall tau-b and MinMax normalization.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats as _sps

EXACT_MAX_SIZE = 20
MEAN_TOL = 1e-12


class Alternative(str, enum.Enum):
    FIRST_GREATER = "first_greater"
    SECOND_GREATER = "second_greater"
    TWO_SIDED = "two_sided"


class DegenerateMeanError(ValueError):
    """Sample mean too close to zero for a variance/mean ratio."""


@dataclass(frozen=True)
class TestResult:
    u_first: float
    u_second: float
    p_value: float
    alternative: Alternative
    method_used: str  # "exact" | "normal_approx"

    __test__ = False  # keep pytest from collecting this class


def _as_finite(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must contain at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@lru_cache(maxsize=None)
def _null_counts(n: int, m: int) -> tuple[int, ...]:
    """Number of rank splits giving U = 0..n*m for tie-free samples.

    Uses the recurrence f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u),
    split on whether the largest observation belongs to the first sample.
    """
    if n == 0 or m == 0:
        return (1,)
    with_first = _null_counts(n - 1, m)
    without_first = _null_counts(n, m - 1)
    out = [0] * (n * m + 1)
    for u, c in enumerate(without_first):
        out[u] += c
    for u, c in enumerate(with_first):
        out[u + m] += c
    return tuple(out)


@lru_cache(maxsize=None)
def _null_cdf_table(n: int, m: int) -> np.ndarray:
    counts = _null_counts(n, m)
    total = math.comb(n + m, n)
    cum = 0
    cdf = np.empty(len(counts))
    for u, c in enumerate(counts):
        cum += c
        cdf[u] = cum / total
    return cdf


def exact_u_null_cdf(n: int, m: int, u: float) -> float:
    """P(U <= u) under the null hypothesis for tie-free samples of sizes n, m."""
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    if not (0 <= u <= n * m):
        raise ValueError(f"u={u} outside [0, {n * m}]")
    return float(_null_cdf_table(n, m)[int(math.floor(u))])


def _exact_sf(n: int, m: int, u: float) -> float:
    """P(U >= u) for integer u."""
    k = int(math.ceil(u))
    if k <= 0:
        return 1.0
    return float(1.0 - _null_cdf_table(n, m)[k - 1])


def _u_statistic(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    ys = np.sort(y)
    lo = np.searchsorted(ys, x, side="left")
    hi = np.searchsorted(ys, x, side="right")
    u = float(lo.sum()) + 0.5 * float((hi - lo).sum())
    pooled = np.sort(np.concatenate([x, ys]))
    has_ties = bool(np.any(pooled[1:] == pooled[:-1]))
    return u, has_ties


def _approx_sf(u: float, n: int, m: int, pooled: np.ndarray) -> float:
    """Upper-tail normal approximation with tie and continuity correction."""
    N = n + m
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    var = n * m / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return 1.0
    z = (u - n * m / 2.0 - 0.5) / math.sqrt(var)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(x: Sequence[float], y: Sequence[float],
                   alt: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Mann-Whitney U-test of ``x`` against ``y``.

    ``u_first`` counts pairs with x > y plus half the ties. The exact null
    distribution is used when both samples have at most 20 values and the
    pooled data is tie-free; otherwise a tie-corrected normal approximation
    with a 0.5 continuity correction is used.
    """
    alt = Alternative(alt)
    x = _as_finite(x, "x")
    y = _as_finite(y, "y")
    n, m = x.size, y.size
    u1, has_ties = _u_statistic(x, y)
    u2 = n * m - u1

    if not has_ties and n <= EXACT_MAX_SIZE and m <= EXACT_MAX_SIZE:
        method = "exact"
        p_first = _exact_sf(n, m, u1)
        p_second = _exact_sf(n, m, u2)
    else:
        method = "normal_approx"
        pooled = np.concatenate([x, y])
        p_first = _approx_sf(u1, n, m, pooled)
        p_second = _approx_sf(u2, n, m, pooled)

    if alt is Alternative.FIRST_GREATER:
        p = p_first
    elif alt is Alternative.SECOND_GREATER:
        p = p_second
    else:
        p = min(1.0, 2.0 * min(p_first, p_second))
    p = min(1.0, max(0.0, p))
    return TestResult(u1, u2, p, alt, method)


def one_sided_pvalues(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(p for x stochastically greater, p for y stochastically greater).

    Same decision rule as :func:`mann_whitney_u` without argument checks;
    used on hot paths where inputs are already validated arrays.
    """
    n, m = x.size, y.size
    u1, has_ties = _u_statistic(x, y)
    u2 = n * m - u1
    if not has_ties and n <= EXACT_MAX_SIZE and m <= EXACT_MAX_SIZE:
        return _exact_sf(n, m, u1), _exact_sf(n, m, u2)
    pooled = np.concatenate([x, y])
    return _approx_sf(u1, n, m, pooled), _approx_sf(u2, n, m, pooled)


def coefficient_of_variation(samples: Sequence[float], convention: str = "paper") -> float:
    """Dispersion of a sample set.

    ``convention="paper"`` gives variance / mean (the variance-scaled form used
    throughout this package); ``"conventional"`` gives std / mean. The variance
    uses the unbiased n-1 denominator.
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError("coefficient of variation needs at least 2 samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values")
    mean = float(arr.mean())
    if abs(mean) < MEAN_TOL:
        raise DegenerateMeanError(f"mean {mean!r} is within {MEAN_TOL} of zero")
    # constant samples: exact zero rather than rounding residue of the mean
    var = 0.0 if np.all(arr == arr[0]) else float(np.var(arr, ddof=1))
    if convention == "paper":
        return var / mean
    if convention == "conventional":
        return math.sqrt(var) / mean
    raise ValueError(f"unknown CV convention {convention!r}")


def kendall_tau_b(pairs) -> float:
    """Kendall tau-b with tie corrections in both variables."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least 2 (x, y) pairs")
    x, y = arr[:, 0], arr[:, 1]
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("tau-b undefined when a variable is constant")
    return float(_sps.kendalltau(x, y, variant="b").statistic)


def minmax_normalize(values: Sequence[float]) -> list[float]:
    """Map values linearly onto [0, 1]; a zero range maps everything to 0.5."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("cannot normalize an empty list")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return [0.5] * arr.size
    return ((arr - lo) / (hi - lo)).tolist()
