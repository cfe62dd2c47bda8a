"""Non-parametric comparison kit: Mann-Whitney U, Vargha-Delaney A12,
Wilcoxon signed-rank and the paired effect size R+ / (R+ + R-).

Exact p-values come from the permutation distribution of the rank statistic
(midranks for ties), built by dynamic programming over doubled ranks so that
every count is an integer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

EXACT_MWU_MAX_N = 20  # n_x + n_y
EXACT_WILCOXON_MAX_N = 12
_TOL = 1e-9  # slack when comparing rank statistics that are multiples of 0.5


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p_value: float
    method: str


@dataclass(frozen=True)
class WilcoxonResult:
    r_plus: float
    r_minus: float
    p_value: float
    n: int
    method: str


@dataclass(frozen=True)
class ComparisonResult:
    test: str
    statistic: float
    p_value: float
    effect: float
    effect_class: str
    n_x: int
    n_y: int
    r_plus: Optional[float] = None
    r_minus: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _sample(values, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValidationError(f"sample {name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"sample {name} contains non-finite values")
    return a


def midranks(values) -> np.ndarray:
    """1-based ranks, tied values share the average of their positions."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(values) -> float:
    _, counts = np.unique(np.asarray(values), return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _normal_two_sided(deviation: float, sigma: float) -> float:
    if sigma <= 0:
        return 1.0
    z = max(abs(deviation) - 0.5, 0.0) / sigma
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


# -- Mann-Whitney --------------------------------------------------------------


def _subset_sum_counts(weights: Sequence[int], k: int) -> np.ndarray:
    """counts[s] = number of k-subsets of ``weights`` summing to s."""
    total = int(sum(weights))
    table = np.zeros((k + 1, total + 1), dtype=np.int64)
    table[0, 0] = 1
    for w in weights:
        for j in range(k, 0, -1):
            table[j, w:] += table[j - 1, : total + 1 - w]
    return table[k]


def _mwu_exact_p(ranks: np.ndarray, n_x: int, u_obs: float) -> float:
    doubled = [int(round(2 * r)) for r in ranks]
    counts = _subset_sum_counts(doubled, n_x)
    n_y = len(ranks) - n_x
    offset = n_x * (n_x + 1)  # 2 * n_x(n_x+1)/2
    mu = n_x * n_y / 2.0
    dev_obs = abs(u_obs - mu)
    hits = 0
    for s2 in np.flatnonzero(counts):
        u = (s2 - offset) / 2.0
        if abs(u - mu) >= dev_obs - _TOL:
            hits += int(counts[s2])
    return hits / math.comb(len(ranks), n_x)


def mann_whitney_u(x, y, method: str = "auto") -> MannWhitneyResult:
    """U for ``x`` (x wins + half ties) and its two-sided p-value.

    ``method="auto"`` enumerates exactly when ``n_x + n_y <= 20`` and otherwise
    uses the normal approximation with tie and continuity corrections.
    """
    xs, ys = _sample(x, "x"), _sample(y, "y")
    nx, ny = xs.size, ys.size
    pooled = np.concatenate([xs, ys])
    ranks = midranks(pooled)
    u = float(ranks[:nx].sum() - nx * (nx + 1) / 2.0)
    if method == "auto":
        method = "exact" if nx + ny <= EXACT_MWU_MAX_N else "normal"
    if method == "exact":
        p = _mwu_exact_p(ranks, nx, u)
    elif method == "normal":
        n = nx + ny
        var = nx * ny / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1))) if n > 1 else 0.0
        p = _normal_two_sided(u - nx * ny / 2.0, math.sqrt(max(var, 0.0)))
    else:
        raise ValidationError(f"unknown method {method!r}")
    return MannWhitneyResult(u, min(p, 1.0), method)


def vargha_delaney_a12(x, y) -> float:
    """Probability that a draw from ``x`` exceeds one from ``y``, ties counted half."""
    xs, ys = _sample(x, "x"), _sample(y, "y")
    greater = np.count_nonzero(xs[:, None] > ys[None, :])
    equal = np.count_nonzero(xs[:, None] == ys[None, :])
    return (greater + 0.5 * equal) / (xs.size * ys.size)


def classify_a12(a: float) -> str:
    if not 0.0 <= a <= 1.0:
        raise ValidationError(f"effect size {a} outside [0, 1]")
    if a <= 0.29 or a >= 0.71:
        return "large"
    if a <= 0.36 or a >= 0.64:
        return "medium"
    if a <= 0.44 or a >= 0.56:
        return "small"
    return "negligible"


# -- Wilcoxon signed-rank ----------------------------------------------------------


def _wilcoxon_exact_p(ranks: np.ndarray, r_plus: float) -> float:
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for w in doubled:
        counts[w:] = counts[w:] + counts[: total + 1 - w].copy()
    mu2 = total / 2.0
    dev_obs = abs(2 * r_plus - mu2)
    hits = sum(int(counts[s]) for s in np.flatnonzero(counts) if abs(s - mu2) >= dev_obs - 2 * _TOL)
    return hits / 2 ** len(ranks)


def wilcoxon_signed_rank(diffs, method: str = "auto") -> WilcoxonResult:
    """Signed-rank test on paired differences; zero differences are dropped."""
    d = _sample(diffs, "diffs")
    d = d[d != 0.0]
    if d.size == 0:
        raise ValidationError("all paired differences are zero: no signal")
    ranks = midranks(np.abs(d))
    r_plus = float(ranks[d > 0].sum())
    r_minus = float(ranks[d < 0].sum())
    n = d.size
    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "normal"
    if method == "exact":
        p = _wilcoxon_exact_p(ranks, r_plus)
    elif method == "normal":
        var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
        p = _normal_two_sided(r_plus - n * (n + 1) / 4.0, math.sqrt(max(var, 0.0)))
    else:
        raise ValidationError(f"unknown method {method!r}")
    return WilcoxonResult(r_plus, r_minus, min(p, 1.0), n, method)


def e_hat(r_plus: float, r_minus: float) -> float:
    denom = r_plus + r_minus
    if not denom > 0:
        raise ValidationError("rank sums are both zero")
    return r_plus / denom


# -- convenience -------------------------------------------------------------------


def compare_unpaired(x, y) -> ComparisonResult:
    mw = mann_whitney_u(x, y)
    a = vargha_delaney_a12(x, y)
    return ComparisonResult("mann-whitney-u", mw.u, mw.p_value, a, classify_a12(a), len(x), len(y))


def compare_paired(x, y) -> ComparisonResult:
    xs, ys = _sample(x, "x"), _sample(y, "y")
    if xs.size != ys.size:
        raise ValidationError("paired samples differ in length")
    w = wilcoxon_signed_rank(xs - ys)
    e = e_hat(w.r_plus, w.r_minus)
    return ComparisonResult(
        "wilcoxon-signed-rank", w.r_plus, w.p_value, e, classify_a12(e), xs.size, ys.size, w.r_plus, w.r_minus
    )


def describe(values) -> dict:
    """The summary columns used in the comparison tables."""
    a = _sample(values, "values")
    return {
        "n": int(a.size),
        "median": float(np.median(a)),
        "p5": float(np.percentile(a, 5)),
        "q1": float(np.percentile(a, 25)),
        "q3": float(np.percentile(a, 75)),
        "mean": float(a.mean()),
    }
