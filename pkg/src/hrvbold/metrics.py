"""Evaluation metrics, per-scan scoring, paired testing, ROI comparisons.

The four reconstruction metrics are MAE, MSE, Pearson correlation, and
dynamic time warping distance. Pearson is undefined on constant series
and reported as None; aggregates exclude undefined values and count the
exclusions instead of coercing them to zero.

The paired configuration test is the Wilcoxon signed-rank test: exact
distribution (dynamic program over doubled ranks, which handles average
ranks for ties) up to n = 25 non-zero differences, normal approximation
with continuity and tie corrections above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError

EXACT_WILCOXON_MAX_N = 25


def _as_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValidationError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise ValidationError("empty sequences")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValidationError("non-finite values in metric input")
    return p, t


def mae(pred, truth) -> float:
    p, t = _as_pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def mse(pred, truth) -> float:
    p, t = _as_pair(pred, truth)
    d = p - t
    return float(np.mean(d * d))


def pearson(x, y) -> float | None:
    """Sample correlation; None when either series is constant."""
    a, b = _as_pair(x, y)
    if len(a) < 2:
        raise ValidationError("pearson needs length >= 2")
    da = a - np.mean(a)
    db = b - np.mean(b)
    va = float(np.dot(da, da))
    vb = float(np.dot(db, db))
    if va == 0.0 or vb == 0.0:
        return None
    return float(np.dot(da, db) / np.sqrt(va * vb))


def spearman(x, y) -> float | None:
    """Rank correlation (average ranks for ties)."""
    a, b = _as_pair(x, y)
    if len(a) < 2:
        raise ValidationError("spearman needs length >= 2")
    return pearson(rankdata(a), rankdata(b))


def dtw(x, y) -> float:
    """Dynamic time warping distance with absolute-difference local cost.

    Classic unconstrained dynamic program,
    cost(i,j) = |x_i - y_j| + min(up, left, diagonal),
    O(n*m) time and O(min(n, m)) memory.
    """
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) == 0 or len(b) == 0:
        raise ValidationError("dtw needs two non-empty 1-D sequences")
    if len(b) > len(a):
        a, b = b, a
    m = len(b)
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(len(a)):
        cur[0] = np.inf
        ai = a[i]
        row = np.abs(ai - b)
        for j in range(1, m + 1):
            cur[j] = row[j - 1] + min(prev[j], cur[j - 1], prev[j - 1])
        prev, cur = cur, prev
    return float(prev[m])


@dataclass(frozen=True)
class ScanEvaluation:
    """The four metrics for one scan plus the measured series' spread."""

    scan_id: str
    mae: float
    mse: float
    pearson_r: float | None
    dtw: float
    hrv_std: float
    n_frames: int

    def as_row(self) -> dict:
        return {"scan_id": self.scan_id, "mae": self.mae, "mse": self.mse,
                "pearson_r": self.pearson_r, "dtw": self.dtw,
                "hrv_std": self.hrv_std, "n_frames": self.n_frames}


def evaluate_scan(scan_id: str, pred: np.ndarray,
                  measured: np.ndarray) -> ScanEvaluation:
    """Score a prediction against the measured series on their overlap.

    ``pred`` may contain NaN outside the predictable frame range; only
    frames where both series are finite are compared.
    """
    pred = np.asarray(pred, dtype=np.float64)
    measured = np.asarray(measured, dtype=np.float64)
    if pred.shape != measured.shape:
        raise ValidationError("prediction and measured series lengths differ")
    mask = np.isfinite(pred) & np.isfinite(measured)
    if not np.any(mask):
        raise ValidationError(f"scan {scan_id}: no overlapping frames to evaluate")
    p = pred[mask]
    t = measured[mask]
    return ScanEvaluation(scan_id=scan_id, mae=mae(p, t), mse=mse(p, t),
                          pearson_r=pearson(p, t), dtw=dtw(p, t),
                          hrv_std=float(np.std(t)), n_frames=int(mask.sum()))


@dataclass(frozen=True)
class VariabilityAnalysis:
    """Relationship between measured HRV spread and reconstruction accuracy."""

    slope: float
    intercept: float
    pearson_corr: float | None
    spearman_corr: float | None
    n_used: int
    n_excluded: int
    points: tuple[tuple[str, float, float], ...]  # (scan_id, hrv_std, r)


def variability_accuracy_analysis(evals: Sequence[ScanEvaluation]) -> VariabilityAnalysis:
    usable = [e for e in sorted(evals, key=lambda e: e.scan_id)
              if e.pearson_r is not None]
    if len(usable) < 3:
        raise ValidationError(f"need >= 3 scans with defined correlation, "
                              f"got {len(usable)}")
    stds = np.array([e.hrv_std for e in usable])
    rs = np.array([e.pearson_r for e in usable])
    corr = pearson(stds, rs)
    rho = spearman(stds, rs)
    if corr is None:
        slope, intercept = 0.0, float(np.mean(rs))
    else:
        slope, intercept = (float(c) for c in np.polyfit(stds, rs, 1))
    return VariabilityAnalysis(
        slope=slope, intercept=intercept, pearson_corr=corr, spearman_corr=rho,
        n_used=len(usable), n_excluded=len(evals) - len(usable),
        points=tuple((e.scan_id, e.hrv_std, float(e.pearson_r)) for e in usable))


@dataclass(frozen=True)
class PairedTestResult:
    p_value: float
    statistic: float          # signed-rank sum of positive differences
    median_diff: float
    direction: str            # "a_greater", "b_greater", or "none"
    n_effective: int          # non-zero differences
    method: str               # "exact" or "normal"


def _exact_signed_rank_p(w_plus: float, ranks: np.ndarray) -> float:
    """Exact two-sided p via a dynamic program over doubled ranks.

    Average ranks are half-integers, so doubling makes every achievable
    rank sum an integer and the count table exact.
    """
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] += counts[:total + 1 - r].copy()
    n_assign = 2.0 ** len(ranks)
    w2 = int(np.rint(2.0 * w_plus))
    p_low = counts[:w2 + 1].sum() / n_assign
    p_high = counts[w2:].sum() / n_assign
    return float(min(1.0, 2.0 * min(p_low, p_high)))


def _normal_signed_rank_p(w_plus: float, ranks: np.ndarray) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    diff = w_plus - mean
    z = (diff - 0.5 * np.sign(diff)) / math.sqrt(var)
    return float(min(1.0, math.erfc(abs(z) / math.sqrt(2.0))))


def paired_test(metric_a: Sequence[float], metric_b: Sequence[float]) -> PairedTestResult:
    """Wilcoxon signed-rank test on matched per-scan metric values.

    Zero differences are dropped; ties in |difference| get average ranks.
    Two-sided p; for a shifted-by-a-constant pair of length n this gives
    exactly 2 / 2^n.
    """
    a, b = _as_pair(metric_a, metric_b)
    if len(a) < 6:
        raise ValidationError(f"paired test needs >= 6 pairs, got {len(a)}")
    d = a - b
    median_diff = float(np.median(d))
    nz = d[d != 0]
    if len(nz) == 0:
        return PairedTestResult(p_value=1.0, statistic=0.0, median_diff=0.0,
                                direction="none", n_effective=0, method="exact")
    ranks = rankdata(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    if len(nz) <= EXACT_WILCOXON_MAX_N:
        p = _exact_signed_rank_p(w_plus, ranks)
        method = "exact"
    else:
        p = _normal_signed_rank_p(w_plus, ranks)
        method = "normal"
    if median_diff > 0:
        direction = "a_greater"
    elif median_diff < 0:
        direction = "b_greater"
    else:
        direction = "a_greater" if w_plus > ranks.sum() / 2.0 else "b_greater"
    return PairedTestResult(p_value=p, statistic=w_plus, median_diff=median_diff,
                            direction=direction, n_effective=len(nz), method=method)


METRIC_FIELDS = ("mae", "mse", "pearson_r", "dtw")


@dataclass(frozen=True)
class ConfigComparison:
    labels: tuple[str, ...]
    per_scan: Mapping[str, tuple[ScanEvaluation, ...]]
    summary: Mapping[str, Mapping[str, dict]]
    best_label: str
    improvement_pct: Mapping[str, float]
    p_matrix: Mapping[tuple[str, str], PairedTestResult | None]


def _metric_summary(evals: Sequence[ScanEvaluation], metric: str) -> dict:
    values = [getattr(e, metric) for e in evals]
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    excluded = len(values) - len(defined)
    if len(defined) == 0:
        return {"mean": None, "median": None, "n_excluded": excluded}
    return {"mean": float(np.mean(defined)),
            "median": float(np.median(defined)),
            "n_excluded": excluded}


def compare_configs(evals_by_config: Mapping[str, Sequence[ScanEvaluation]],
                    ) -> ConfigComparison:
    """Aggregate per-config metrics, rank by mean correlation, and run the
    pairwise signed-rank matrix on per-scan correlations.

    All configurations must cover the same scan set; improvement
    percentages are computed on matched scans only, as
    (best mean r - other mean r) / other mean r x 100.
    """
    labels = tuple(sorted(evals_by_config))
    if len(labels) < 2:
        raise ValidationError("need at least two configurations to compare")
    per_scan = {}
    scan_sets = {}
    for label in labels:
        evals = tuple(sorted(evals_by_config[label], key=lambda e: e.scan_id))
        per_scan[label] = evals
        scan_sets[label] = [e.scan_id for e in evals]
    reference = scan_sets[labels[0]]
    for label in labels[1:]:
        if scan_sets[label] != reference:
            raise ValidationError(f"configuration {label} covers a different "
                                  f"scan set than {labels[0]}")

    summary = {label: {m: _metric_summary(per_scan[label], m)
                       for m in METRIC_FIELDS} for label in labels}

    mean_r = {label: summary[label]["pearson_r"]["mean"] for label in labels}
    defined_means = {l: v for l, v in mean_r.items() if v is not None}
    if not defined_means:
        raise ValidationError("no configuration has a defined mean correlation")
    best_label = max(sorted(defined_means), key=lambda l: defined_means[l])
    improvement = {}
    for label in labels:
        other = mean_r[label]
        if label == best_label or other is None or other == 0:
            improvement[label] = 0.0
        else:
            improvement[label] = 100.0 * (mean_r[best_label] - other) / other

    common = [sid for sid in reference
              if all(e.pearson_r is not None
                     for lab in labels
                     for e in per_scan[lab] if e.scan_id == sid)]
    r_of = {label: {e.scan_id: e.pearson_r for e in per_scan[label]}
            for label in labels}
    p_matrix: dict[tuple[str, str], PairedTestResult | None] = {}
    for i, la in enumerate(labels):
        for lb in labels[i + 1:]:
            va = [r_of[la][sid] for sid in common]
            vb = [r_of[lb][sid] for sid in common]
            try:
                result = paired_test(va, vb)
            except ValidationError:
                result = None
            p_matrix[(la, lb)] = result
    return ConfigComparison(labels=labels, per_scan=per_scan, summary=summary,
                            best_label=best_label, improvement_pct=improvement,
                            p_matrix=p_matrix)
