"""Regression metrics, pane-ranking quality, and significance tests.

All operations are pure functions over numpy arrays and are safe for
arbitrary parallel use. Conventions fixed here so results reproduce
across implementations:

* R^2 = 1 - sum((y - yhat)^2) / sum((y - ybar)^2); when the labels have
  zero variance the value is 1 for a perfect fit and flagged undefined
  (NaN, with a reason) otherwise.
* nDCG gain is linear in the engagement level by default (levels 0-10
  make exponential gains explode); discount is 1/log2(rank + 1) with
  1-based ranks. Queries whose panes are all zero-engagement contribute
  1.0 unless excluded.
* Model-vs-model significance is a paired two-sided t-test over
  per-sample losses; group comparisons use Welch's two-sample t-test
  because the compared groups have unequal sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import EmptyInput, LengthMismatch


@dataclass(frozen=True, slots=True)
class RegressionScores:
    mae: float
    mse: float
    r2: float  # NaN when undefined (zero-variance labels with nonzero error)
    n: int
    r2_undefined_reason: str | None = None

    def __post_init__(self) -> None:
        if self.mae < 0 or self.mse < 0:
            raise ValueError("mae and mse must be >= 0")
        if self.mae**2 > self.mse + 1e-12:
            raise ValueError(f"mae^2 <= mse violated: {self.mae**2} > {self.mse}")
        if not math.isnan(self.r2) and self.r2 > 1 + 1e-12:
            raise ValueError(f"r2 must be <= 1, got {self.r2}")


@dataclass(frozen=True, slots=True)
class SignificanceResult:
    statistic: float
    p_value: float
    test: str
    pairing: str
    degenerate: bool = False
    group_means: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class PaneScore:
    pane_id: str
    engagement: float
    score: float


@dataclass(frozen=True)
class RankedPaneList:
    """Per-query pane lists with true engagements and predicted scores."""

    groups: dict[str, tuple[PaneScore, ...]]

    def __post_init__(self) -> None:
        if not self.groups:
            raise EmptyInput("RankedPaneList needs at least one query")
        for query, panes in self.groups.items():
            if len(panes) < 2:
                raise ValueError(f"query {query!r} has {len(panes)} panes; need >= 2")


def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    if arr.size == 0:
        raise EmptyInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def regression_scores(y, yhat) -> RegressionScores:
    """MAE, MSE and the coefficient of determination for one prediction run."""
    y = _as_finite_array(y, "y")
    yhat = _as_finite_array(yhat, "yhat")
    if len(y) != len(yhat):
        raise LengthMismatch(f"|y|={len(y)} vs |yhat|={len(yhat)}")
    err = y - yhat
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    reason = None
    if ss_tot == 0.0:
        if ss_res == 0.0:
            r2 = 1.0
        else:
            r2 = float("nan")
            reason = "labels have zero variance and predictions are not exact"
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RegressionScores(mae=mae, mse=mse, r2=r2, n=len(y), r2_undefined_reason=reason)


def _gain(engagements: np.ndarray, gain: str) -> np.ndarray:
    if gain == "linear":
        return engagements
    if gain == "exponential":
        return np.power(2.0, engagements) - 1.0
    raise ValueError(f"unknown gain {gain!r}")


def _dcg(gains: np.ndarray, k: int) -> float:
    top = gains[:k]
    discounts = 1.0 / np.log2(np.arange(2, len(top) + 2))
    return float(np.sum(top * discounts))


def ndcg_at_k(
    panes: RankedPaneList,
    k: int,
    gain: str = "linear",
    zero_engagement_queries: str = "perfect",
) -> float:
    """Mean nDCG@k over queries.

    The predicted ranking sorts panes by score descending (ties broken by
    pane id); the ideal ranking sorts by true engagement descending.
    ``zero_engagement_queries`` is "perfect" (contribute 1.0, the default)
    or "exclude".
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if zero_engagement_queries not in ("perfect", "exclude"):
        raise ValueError(f"unknown policy {zero_engagement_queries!r}")
    values = []
    for query, group in panes.groups.items():
        engagements = np.array([p.engagement for p in group], dtype=np.float64)
        if not engagements.any():
            if zero_engagement_queries == "perfect":
                values.append(1.0)
            continue
        by_score = sorted(group, key=lambda p: (-p.score, p.pane_id))
        gains_pred = _gain(np.array([p.engagement for p in by_score]), gain)
        gains_ideal = np.sort(_gain(engagements, gain))[::-1]
        values.append(_dcg(gains_pred, k) / _dcg(gains_ideal, k))
    if not values:
        raise EmptyInput("no queries left to score")
    return float(np.mean(values))


def _two_sided_p(t_stat: float, df: float) -> float:
    return float(2.0 * sps.t.sf(abs(t_stat), df))


def significance(errors_a, errors_b, mode: str = "paired") -> SignificanceResult:
    """Paired two-sided t-test over per-sample loss differences.

    Zero-variance differences are degenerate: p = 1 when the common
    difference is 0 (identical errors), else p = 0.
    """
    if mode != "paired":
        raise ValueError(f"unsupported mode {mode!r}")
    a = _as_finite_array(errors_a, "errors_a")
    b = _as_finite_array(errors_b, "errors_b")
    if len(a) != len(b):
        raise LengthMismatch(f"paired test needs equal lengths: {len(a)} vs {len(b)}")
    diff = a - b
    n = len(diff)
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        if mean == 0.0:
            return SignificanceResult(0.0, 1.0, "paired-t", "paired", degenerate=True)
        stat = math.copysign(math.inf, mean)
        return SignificanceResult(stat, 0.0, "paired-t", "paired", degenerate=True)
    stat = mean / (sd / math.sqrt(n))
    return SignificanceResult(stat, _two_sided_p(stat, n - 1), "paired-t", "paired")


def group_comparison(values_a, values_b, mode: str = "two-sample") -> SignificanceResult:
    """Welch's two-sample t-test (unequal sizes and variances), means reported.

    A singleton group contributes zero variance. When both variance terms
    vanish the test is degenerate: p = 1 for equal means, else p = 0.
    """
    if mode != "two-sample":
        raise ValueError(f"unsupported mode {mode!r}")
    a = _as_finite_array(values_a, "values_a")
    b = _as_finite_array(values_b, "values_b")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    means = (mean_a, mean_b)
    var_a = float(a.var(ddof=1)) if len(a) > 1 else 0.0
    var_b = float(b.var(ddof=1)) if len(b) > 1 else 0.0
    se2 = var_a / len(a) + var_b / len(b)
    if se2 == 0.0:
        if mean_a == mean_b:
            return SignificanceResult(
                0.0, 1.0, "welch-t", "two-sample", degenerate=True, group_means=means
            )
        stat = math.copysign(math.inf, mean_a - mean_b)
        return SignificanceResult(
            stat, 0.0, "welch-t", "two-sample", degenerate=True, group_means=means
        )
    stat = (mean_a - mean_b) / math.sqrt(se2)
    df_num = se2**2
    df_den = 0.0
    if var_a > 0 and len(a) > 1:
        df_den += (var_a / len(a)) ** 2 / (len(a) - 1)
    if var_b > 0 and len(b) > 1:
        df_den += (var_b / len(b)) ** 2 / (len(b) - 1)
    df = df_num / df_den
    return SignificanceResult(
        stat, _two_sided_p(stat, df), "welch-t", "two-sample", group_means=means
    )
