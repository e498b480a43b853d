"""Evaluation of gradual anomaly scores against binary labels.

Scores follow detector semantics throughout: a LOW score is anomalous, and a
case is predicted anomalous at threshold ``t`` iff ``score <= t``. Anomalies
are the positive class.

ROC curves have one point per distinct score plus the origin. Tied scores
form a single (diagonal) step, so the trapezoid AUC equals the Mann-Whitney
statistic with ties counted as one half. PR AUC uses step-wise interpolation
(average precision).

Bootstrap resamples are stratified (anomalies and normals resampled
separately) and resample ``k`` draws from a Philox stream keyed by
``(seed, k)``, so results do not depend on how resamples are spread over
workers.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

MIN_RESAMPLES = 100


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray  # bool, True = anomaly

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        y = np.asarray(self.labels, dtype=bool)
        if s.shape != y.shape or s.ndim != 1:
            raise MetricsError("scores and labels must be 1-d and of equal length")
        if not np.all(np.isfinite(s)):
            raise MetricsError("scores must be finite")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_groups(cls, anomaly_scores, normal_scores) -> ScoredLabels:
        a = np.asarray(anomaly_scores, dtype=np.float64)
        b = np.asarray(normal_scores, dtype=np.float64)
        return cls(np.concatenate([a, b]), np.r_[np.ones(len(a), bool), np.zeros(len(b), bool)])

    @property
    def positives(self) -> int:
        return int(self.labels.sum())

    @property
    def negatives(self) -> int:
        return int((~self.labels).sum())

    def require_both(self):
        if self.positives == 0 or self.negatives == 0:
            raise MetricsError("need at least one anomaly and one normal case")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricsError("confusion counts must be non-negative")


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # -inf for the origin

    def rows(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray
    interpolation: str = "step"

    def rows(self):
        return list(zip(self.recall.tolist(), self.precision.tolist()))


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lo: float
    hi: float
    level: float = 0.95
    resamples: int = 10000

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "resamples": self.resamples,
        }


@dataclass(frozen=True)
class RocBand:
    fpr: np.ndarray
    tpr: np.ndarray  # point-estimate curve on the grid
    lo: np.ndarray
    hi: np.ndarray
    level: float

    def rows(self):
        return list(zip(*(a.tolist() for a in (self.fpr, self.tpr, self.lo, self.hi))))


# ------------------------------------------------------------------ sweep


class _Sweep:
    """Scores sorted once; cumulative counts per distinct-score group.

    Group ``j`` holds all cases whose score equals ``thresholds[j]``; with
    integer case weights the same structure yields any bootstrap resample's
    counts in O(n).
    """

    def __init__(self, sl: ScoredLabels):
        order = np.argsort(sl.scores, kind="stable")
        s = sl.scores[order]
        new = np.r_[True, s[1:] != s[:-1]]
        group_sorted = np.cumsum(new) - 1
        self.group = np.empty(len(s), dtype=np.int64)
        self.group[order] = group_sorted
        self.thresholds = s[new]
        self.G = len(self.thresholds)
        self.labels = sl.labels
        self.pos_groups = self.group[sl.labels]
        self.neg_groups = self.group[~sl.labels]
        self.P = len(self.pos_groups)
        self.N = len(self.neg_groups)

    def counts(self, pos_w=None, neg_w=None):
        # float64 keeps products such as the MCC denominator from overflowing
        tp = np.bincount(self.pos_groups, weights=pos_w, minlength=self.G).cumsum(dtype=np.float64)
        fp = np.bincount(self.neg_groups, weights=neg_w, minlength=self.G).cumsum(dtype=np.float64)
        return tp, fp


def _roc_points(tp, fp, P, N):
    return np.r_[0.0, fp / N], np.r_[0.0, tp / P]


def _trapezoid(x, y) -> float:
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1])) / 2)


def _area_between(x, y, x0, x1) -> float:
    """Area under the piecewise-linear (x, y) over [x0, x1]; x non-decreasing."""
    xa, xb, ya, yb = x[:-1], x[1:], y[:-1], y[1:]
    lo = np.maximum(xa, x0)
    hi = np.minimum(xb, x1)
    keep = (hi > lo) & (xb > xa)
    xa, xb, ya, yb, lo, hi = xa[keep], xb[keep], ya[keep], yb[keep], lo[keep], hi[keep]
    slope = (yb - ya) / (xb - xa)
    y_lo = ya + slope * (lo - xa)
    y_hi = ya + slope * (hi - xa)
    return float(np.sum((hi - lo) * (y_lo + y_hi)) / 2)


def _average_precision(tp, fp, P) -> float:
    recall = tp / P
    denom = tp + fp
    precision = np.divide(tp, denom, out=np.zeros_like(recall), where=denom > 0)
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def _focus_bounds(rng, focus: str) -> tuple[float, float]:
    a, b = sorted(float(v) for v in rng)
    if not (0 <= a <= 1 and 0 <= b <= 1):
        raise MetricsError(f"range {rng} not within [0, 1]")
    if b - a <= 0:
        raise MetricsError("partial AUC range has zero width")
    if focus not in ("specificity", "sensitivity"):
        raise MetricsError(f"focus must be specificity or sensitivity, got {focus!r}")
    return 1 - b, 1 - a


def _partial(fpr, tpr, rng, focus, standardized) -> float:
    x0, x1 = _focus_bounds(rng, focus)
    if focus == "sensitivity":
        # Swap roles: the curve as specificity over (1 - sensitivity).
        fpr, tpr = (1 - tpr)[::-1], (1 - fpr)[::-1]
    area = _area_between(fpr, tpr, x0, x1)
    if not standardized:
        return area
    max_area = x1 - x0
    min_area = (x1 * x1 - x0 * x0) / 2
    return 0.5 * (1 + (area - min_area) / (max_area - min_area))


# ------------------------------------------------------------ operations


def confusion(sl: ScoredLabels, threshold: float) -> ConfusionMatrix:
    pred = sl.scores <= threshold
    y = sl.labels
    return ConfusionMatrix(
        tp=int(np.sum(pred & y)),
        fp=int(np.sum(pred & ~y)),
        fn=int(np.sum(~pred & y)),
        tn=int(np.sum(~pred & ~y)),
    )


def roc_curve(sl: ScoredLabels) -> RocCurve:
    sl.require_both()
    sw = _Sweep(sl)
    tp, fp = sw.counts()
    fpr, tpr = _roc_points(tp, fp, sw.P, sw.N)
    return RocCurve(fpr, tpr, np.r_[-np.inf, sw.thresholds])


def roc_auc(sl: ScoredLabels) -> tuple[RocCurve, float]:
    curve = roc_curve(sl)
    return curve, _trapezoid(curve.fpr, curve.tpr)


def partial_auc(
    curve: RocCurve,
    rng: Sequence[float] = (0.9, 1.0),
    focus: str = "specificity",
    standardized: bool = True,
) -> float:
    """Area over a specificity (or sensitivity) band, optionally McClish-standardized.

    The standardized value maps the chance diagonal to 0.5 and a perfect
    curve to 1.
    """
    return _partial(curve.fpr, curve.tpr, rng, focus, standardized)


def pr_auc(sl: ScoredLabels) -> tuple[PrCurve, float]:
    sl.require_both()
    sw = _Sweep(sl)
    tp, fp = sw.counts()
    recall = tp / sw.P
    precision = tp / (tp + fp)
    curve = PrCurve(
        np.r_[0.0, recall], np.r_[precision[0], precision], np.r_[-np.inf, sw.thresholds]
    )
    return curve, _average_precision(tp, fp, sw.P)


def _ratio(num, den) -> Optional[float]:
    return None if den == 0 else num / den


def threshold_metrics(cm: ConfusionMatrix) -> dict[str, Optional[float]]:
    """Table of thresholded metrics; ``None`` marks an undefined value (zero denominator).

    F1 is 2tp / (2tp + fp + fn).
    """
    tp, fp, fn, tn = cm.tp, cm.fp, cm.fn, cm.tn
    n = tp + fp + fn + tn
    mcc_den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    kappa_den = (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn)
    return {
        "sensitivity": _ratio(tp, tp + fn),
        "specificity": _ratio(tn, tn + fp),
        "precision": _ratio(tp, tp + fp),
        "accuracy": _ratio(tp + tn, n),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
        "mcc": None if mcc_den == 0 else (tp * tn - fp * fn) / math.sqrt(mcc_den),
        "kappa": _ratio(2 * (tp * tn - fn * fp), kappa_den),
    }


def best_threshold(sl: ScoredLabels, criterion: str = "youden") -> tuple[float, dict]:
    """Distinct-score threshold maximizing Youden's J or MCC.

    Ties go to the smaller threshold (fewer predicted anomalies).
    """
    sl.require_both()
    criterion = criterion.lower()
    sw = _Sweep(sl)
    tp, fp = sw.counts()
    P, N = sw.P, sw.N
    fn, tn = P - tp, N - fp
    if criterion == "youden":
        # J * P * N is an exact integer, so ties are detected exactly
        value = tp * N - fp * P
        j = int(np.argmax(value))
    elif criterion == "mcc":
        den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        with np.errstate(invalid="ignore", divide="ignore"):
            value = np.where(den > 0, (tp * tn - fp * fn) / np.sqrt(den), -np.inf)
        # equal MCC values can differ in the last bits; take the first near-maximum
        best = value.max()
        j = int(np.argmax(value >= best - 1e-12 * abs(best)))
    else:
        raise MetricsError(f"unknown criterion {criterion!r}")
    thr = float(sw.thresholds[j])
    metrics = threshold_metrics(confusion(sl, thr))
    metrics["youden"] = metrics["sensitivity"] + metrics["specificity"] - 1
    return thr, metrics


# ------------------------------------------------------------- bootstrap


@dataclass(frozen=True)
class Statistic:
    """A curve statistic computed from cumulative (tp, fp) counts."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray, float, float], float]

    def __call__(self, tp, fp, P, N) -> float:
        return self.fn(tp, fp, P, N)


def _roc_stat(tp, fp, P, N):
    return _trapezoid(*_roc_points(tp, fp, P, N))


def _pr_stat(tp, fp, P, N):
    return _average_precision(tp, fp, P)


def partial_auc_statistic(rng=(0.9, 1.0), focus="specificity", standardized=True) -> Statistic:
    _focus_bounds(rng, focus)

    def fn(tp, fp, P, N):
        fpr, tpr = _roc_points(tp, fp, P, N)
        return _partial(fpr, tpr, rng, focus, standardized)

    return Statistic(f"partial_auc_{focus}_{rng[0]}_{rng[1]}", fn)


STATISTICS = {
    "roc_auc": Statistic("roc_auc", _roc_stat),
    "pr_auc": Statistic("pr_auc", _pr_stat),
    "pauc_spec": partial_auc_statistic((0.9, 1.0), "specificity"),
    "pauc_sens": partial_auc_statistic((0.9, 1.0), "sensitivity"),
}


def _resolve(statistic) -> Statistic:
    if isinstance(statistic, Statistic):
        return statistic
    try:
        return STATISTICS[statistic]
    except KeyError:
        raise MetricsError(f"unknown statistic {statistic!r}") from None


def _resample_weights(seed: int, k: int, P: int, N: int):
    rng = np.random.Generator(np.random.Philox(key=[seed % 2**64, k]))
    pos = np.bincount(rng.integers(0, P, P), minlength=P).astype(np.float64)
    neg = np.bincount(rng.integers(0, N, N), minlength=N).astype(np.float64)
    return pos, neg


def _check_resamples(resamples: int):
    if resamples < MIN_RESAMPLES:
        raise MetricsError(f"need at least {MIN_RESAMPLES} resamples, got {resamples}")


def _map_resamples(fn, resamples: int, workers: int) -> np.ndarray:
    """``fn(k)`` for every resample index, in index order."""
    if workers <= 1:
        return np.array([fn(k) for k in range(resamples)])
    blocks = np.array_split(np.arange(resamples), workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = ex.map(lambda ks: [fn(int(k)) for k in ks], blocks)
        return np.array([v for part in parts for v in part])


def bootstrap_distribution(
    sl: ScoredLabels, statistic="roc_auc", resamples=10000, seed=0, workers=1
) -> np.ndarray:
    sl.require_both()
    _check_resamples(resamples)
    stat = _resolve(statistic)
    sw = _Sweep(sl)

    def one(k):
        pos_w, neg_w = _resample_weights(seed, k, sw.P, sw.N)
        tp, fp = sw.counts(pos_w, neg_w)
        return stat(tp, fp, sw.P, sw.N)

    return _map_resamples(one, resamples, workers)


def bootstrap_ci(
    sl: ScoredLabels,
    statistic="roc_auc",
    resamples: int = 10000,
    seed: int = 0,
    level: float = 0.95,
    workers: int = 1,
) -> BootstrapCI:
    """Stratified percentile bootstrap interval."""
    if not 0 < level < 1:
        raise MetricsError("level must lie in (0, 1)")
    stat = _resolve(statistic)
    dist = bootstrap_distribution(sl, stat, resamples, seed, workers)
    sw = _Sweep(sl)
    point = stat(*sw.counts(), sw.P, sw.N)
    alpha = 1 - level
    lo, hi = np.quantile(dist, [alpha / 2, 1 - alpha / 2])
    return BootstrapCI(float(point), float(lo), float(hi), level, resamples)


def tpr_at(curve_fpr, curve_tpr, grid) -> np.ndarray:
    """ROC curve read at fixed fpr values (linear interpolation).

    Where the curve jumps vertically the upper point is used; fpr = 0 maps
    to tpr = 0.
    """
    fpr = np.asarray(curve_fpr)
    tpr = np.asarray(curve_tpr)
    last = np.r_[fpr[1:] != fpr[:-1], True]
    out = np.interp(grid, fpr[last], tpr[last])
    out[np.asarray(grid) == 0] = 0.0
    return out


def roc_band(
    sl: ScoredLabels,
    resamples: int = 10000,
    fpr_grid: Sequence[float] = tuple(np.linspace(0, 1, 101)),
    seed: int = 0,
    level: float = 0.95,
    workers: int = 1,
) -> RocBand:
    """Vertical-averaging band: percentile interval of bootstrap tpr at each grid fpr."""
    grid = np.asarray(fpr_grid, dtype=np.float64)
    if grid.size == 0:
        raise MetricsError("empty fpr grid")
    if np.any((grid < 0) | (grid > 1)):
        raise MetricsError("fpr grid values must lie in [0, 1]")
    sl.require_both()
    _check_resamples(resamples)
    sw = _Sweep(sl)

    def one(k):
        pos_w, neg_w = _resample_weights(seed, k, sw.P, sw.N)
        tp, fp = sw.counts(pos_w, neg_w)
        return tpr_at(*_roc_points(tp, fp, sw.P, sw.N), grid)

    curves = _map_resamples(one, resamples, workers)
    alpha = 1 - level
    lo, hi = np.quantile(curves, [alpha / 2, 1 - alpha / 2], axis=0)
    point = tpr_at(*_roc_points(*sw.counts(), sw.P, sw.N), grid)
    return RocBand(grid, point, lo, hi, level)


def pauc_diff_test(
    sl_a: ScoredLabels,
    sl_b: ScoredLabels,
    rng: Sequence[float] = (0.9, 1.0),
    focus: str = "specificity",
    resamples: int = 10000,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Two-sided paired bootstrap p-value for a standardized partial AUC difference.

    Both score vectors are resampled with the same case indices.
    p = 2 * min(P(diff <= 0), P(diff >= 0)), clamped to [2 / resamples, 1].
    """
    if sl_a.labels.shape != sl_b.labels.shape or not np.array_equal(sl_a.labels, sl_b.labels):
        raise MetricsError("paired test needs both score sets on the same labeled cases")
    sl_a.require_both()
    _check_resamples(resamples)
    stat = partial_auc_statistic(rng, focus, True)
    sa, sb = _Sweep(sl_a), _Sweep(sl_b)

    def one(k):
        pos_w, neg_w = _resample_weights(seed, k, sa.P, sa.N)
        a = stat(*sa.counts(pos_w, neg_w), sa.P, sa.N)
        b = stat(*sb.counts(pos_w, neg_w), sb.P, sb.N)
        return a - b

    diff = _map_resamples(one, resamples, workers)
    p = 2 * min(np.mean(diff <= 0), np.mean(diff >= 0))
    return float(min(1.0, max(2 / resamples, p)))
