"""Classification metrics, t-based confidence intervals and paired t-tests."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special


@dataclass
class MetricSet:
    accuracy: float
    macro_f1: float
    n_eval: int
    auroc: float | None = None
    auprc: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def get(self, name: str) -> float | None:
        return getattr(self, name)


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size < 1:
        raise ValueError("need at least one prediction")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred == truth))


def doubled_ranks(x) -> np.ndarray:
    """Twice the 1-based average ranks of ``x``; integers even with ties."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    out = np.empty(x.size, dtype=np.int64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        out[order[i:j + 1]] = (i + 1) + (j + 1)
        i = j + 1
    return out


def mann_whitney_u2(scores, truth) -> tuple[int, int, int]:
    """Return ``(2U, n_pos, n_neg)`` with ``U`` the tie-corrected Mann-Whitney count."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth have different lengths")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative samples")
    r2 = int(doubled_ranks(scores)[truth].sum())
    return r2 - n_pos * (n_pos + 1), n_pos, n_neg


def auroc(scores, truth) -> float:
    u2, n_pos, n_neg = mann_whitney_u2(scores, truth)
    return u2 / (2 * n_pos * n_neg)


def auprc(scores, truth) -> float:
    """Step-wise average precision; tied scores share a single threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth have different lengths")
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise ValueError("AUPRC needs at least one positive sample")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    t = truth[order]
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp = tp[last], fp[last]
    recall = tp / n_pos
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def macro_f1(pred, truth, n_classes: int) -> float:
    """Unweighted mean of per-class F1.

    A class that appears in neither ``pred`` nor ``truth`` scores 0 and
    triggers a warning.
    """
    pred, truth = _pair(pred, truth)
    f1 = np.zeros(n_classes)
    empty = []
    for c in range(n_classes):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        if denom == 0:
            empty.append(c)
        else:
            f1[c] = 2 * tp / denom
    if empty:
        warnings.warn(f"classes {empty} absent from predictions and truth; F1 set to 0", stacklevel=2)
    return float(f1.mean())


def evaluate(proba, truth, n_classes: int) -> MetricSet:
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth)
    pred = np.argmax(proba, axis=1)
    ms = MetricSet(
        accuracy=accuracy(pred, truth),
        macro_f1=macro_f1(pred, truth, n_classes),
        n_eval=int(truth.size),
    )
    if n_classes == 2 and 0 < np.sum(truth == 1) < truth.size:
        ms.auroc = auroc(proba[:, 1], truth == 1)
        ms.auprc = auprc(proba[:, 1], truth == 1)
    return ms


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularised incomplete beta function."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(1.0 - tail if t > 0 else tail)


def t_quantile(q: float, df: float) -> float:
    return float(special.stdtrit(df, q))


def mean_ci(x, level: float = 0.95) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=np.float64)
    mean = float(x.mean())
    if x.size < 2:
        return mean, mean, mean
    half = t_quantile(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
    return mean, mean - half, mean + half


def stars(p: float) -> str:
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


@dataclass
class PairedComparison:
    mean_a: float
    mean_b: float
    mean_diff: float
    ci95_a: tuple[float, float]
    ci95_b: tuple[float, float]
    t_stat: float
    p_value: float
    n_pairs: int
    degenerate: bool = False

    @property
    def stars(self) -> str:
        return stars(self.p_value)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ci95_a"] = list(self.ci95_a)
        d["ci95_b"] = list(self.ci95_b)
        d["stars"] = self.stars
        return d


def paired_ttest(a, b) -> PairedComparison:
    """Two-sided paired t-test of ``a`` against ``b`` (differences ``a - b``).

    With zero spread in the differences the statistic is undefined; the
    result is then flagged degenerate with p=1 for a zero mean difference
    and p=0 otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples differ in length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    diff = a - b
    md = float(diff.mean())
    sd = float(diff.std(ddof=1))
    ma, lo_a, hi_a = mean_ci(a)
    mb, lo_b, hi_b = mean_ci(b)
    if sd == 0.0:
        t = 0.0 if md == 0 else math.copysign(math.inf, md)
        p = 1.0 if md == 0 else 0.0
        degenerate = True
    else:
        t = md / (sd / math.sqrt(n))
        p = 2.0 * t_cdf(-abs(t), n - 1)
        degenerate = False
    return PairedComparison(ma, mb, md, (lo_a, hi_a), (lo_b, hi_b), t, min(p, 1.0), n, degenerate)
