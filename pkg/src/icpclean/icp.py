"""Conformal p-values against a trusted calibration set and rule-based cleaning.

The calibration reference is marginal: every calibration sample contributes
the nonconformity of its own (trusted) label, regardless of class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cpsc import CpscModel
from .dataset import Dataset


class CleaningError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CalibrationScores:
    scores: np.ndarray

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.size < 1:
            raise ValueError("calibration needs at least one score")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "_sorted", np.sort(s))

    @property
    def size(self) -> int:
        return self.scores.size

    def count_at_least(self, alpha) -> np.ndarray:
        """Number of calibration scores >= each entry of ``alpha``."""
        alpha = np.asarray(alpha, dtype=np.float64)
        return self.size - np.searchsorted(self._sorted, alpha, side="left")


@dataclass(frozen=True, eq=False)
class PValueMatrix:
    """Conformal p-values ``(count + 1) / (size + 1)`` stored as integer counts.

    Keeping the numerators as integers makes every entry an exact rational.
    """

    counts: np.ndarray
    size: int
    sample_ids: tuple[str, ...]

    @property
    def values(self) -> np.ndarray:
        return (self.counts + 1) / (self.size + 1)

    def fraction(self, i: int, y: int) -> Fraction:
        return Fraction(int(self.counts[i, y]) + 1, self.size + 1)

    def __len__(self):
        return self.counts.shape[0]


def calibrate(model: CpscModel, calibration: Dataset) -> CalibrationScores:
    return CalibrationScores(model.nonconformity(calibration.features, calibration.labels))


def p_values_from_alpha(cal: CalibrationScores, alpha, sample_ids=None) -> PValueMatrix:
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    ids = tuple(sample_ids) if sample_ids is not None else tuple(str(i) for i in range(len(alpha)))
    return PValueMatrix(cal.count_at_least(alpha).astype(np.int64), cal.size, ids)


def p_values(model: CpscModel, cal: CalibrationScores, proper: Dataset) -> PValueMatrix:
    return p_values_from_alpha(cal, model.nonconformity_all(proper.features), proper.sample_ids)


@dataclass(frozen=True)
class CleaningPolicy:
    detection_threshold: float = 0.5
    outlier_cutoff: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.detection_threshold < 1.0:
            raise ValueError(f"detection_threshold must lie in (0, 1), got {self.detection_threshold}")
        if not 0.0 < self.outlier_cutoff < self.detection_threshold:
            raise ValueError(
                f"outlier_cutoff must lie in (0, detection_threshold), got {self.outlier_cutoff}"
            )


KEEP, RELABEL, REMOVE = "keep", "relabel", "remove"


@dataclass(frozen=True)
class Verdict:
    action: str
    new_label: int | None = None


@dataclass
class Correctness:
    wrong_before: int
    wrong_after: int
    corrections_made: int

    def to_dict(self):
        return {
            "wrong_before": self.wrong_before,
            "wrong_after": self.wrong_after,
            "corrections_made": self.corrections_made,
        }


@dataclass
class CleaningReport:
    sample_ids: tuple[str, ...]
    original_labels: np.ndarray
    verdicts: list[Verdict]
    classes: tuple[str, ...]
    correctness: Correctness | None = None

    @property
    def corrections_total(self) -> int:
        return sum(v.action == RELABEL for v in self.verdicts)

    @property
    def outliers(self) -> int:
        return sum(v.action == REMOVE for v in self.verdicts)

    @property
    def corrections_by_class(self) -> dict[str, int]:
        out = {c: 0 for c in self.classes}
        for lab, v in zip(self.original_labels, self.verdicts):
            if v.action == RELABEL:
                out[self.classes[lab]] += 1
        return out

    def final_labels(self) -> np.ndarray:
        """Label of every input row after cleaning; -1 marks removed rows."""
        out = np.array(self.original_labels, dtype=np.int64)
        for i, v in enumerate(self.verdicts):
            if v.action == RELABEL:
                out[i] = v.new_label
            elif v.action == REMOVE:
                out[i] = -1
        return out

    def to_dict(self) -> dict:
        verdicts = {}
        for sid, v in zip(self.sample_ids, self.verdicts):
            if v.action == RELABEL:
                verdicts[sid] = {"verdict": RELABEL, "new_label": self.classes[v.new_label]}
            else:
                verdicts[sid] = {"verdict": v.action}
        doc = {
            "verdicts": verdicts,
            "counts": {
                "corrections_total": self.corrections_total,
                "corrections_by_class": self.corrections_by_class,
                "outliers": self.outliers,
            },
        }
        if self.correctness is not None:
            doc["correctness"] = self.correctness.to_dict()
        return doc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def decide(counts_row: np.ndarray, size: int, original: int, policy: CleaningPolicy) -> Verdict:
    """Apply the outlier rule, then the wrong-label rule, to one row of p-value counts."""
    p = (counts_row + 1) / (size + 1)
    if p.max() < policy.outlier_cutoff:
        return Verdict(REMOVE)
    others = np.delete(p, original)
    if others.max() - p[original] > policy.detection_threshold:
        top = p.max()
        # original cannot tie at the top here: some other label beats it by > threshold
        return Verdict(RELABEL, int(np.flatnonzero(p == top)[0]))
    return Verdict(KEEP)


def clean(proper: Dataset, pvals: PValueMatrix, policy: CleaningPolicy) -> tuple[Dataset, CleaningReport]:
    if len(pvals) != proper.n or pvals.sample_ids != proper.sample_ids:
        raise ValueError("p-value matrix is not aligned with the proper training set")
    verdicts = [
        decide(pvals.counts[i], pvals.size, int(proper.labels[i]), policy) for i in range(proper.n)
    ]
    report = CleaningReport(proper.sample_ids, proper.labels.copy(), verdicts, proper.label_space.classes)
    final = report.final_labels()
    keep = np.flatnonzero(final >= 0)
    if keep.size == 0:
        raise CleaningError("every proper training sample was flagged as an outlier")
    cleaned = proper.take(keep).with_labels(final[keep])
    return cleaned, report


def assess_correctness(report: CleaningReport, noisy_labels, true_labels) -> Correctness:
    """Count truly wrong labels before and after cleaning.

    ``noisy_labels`` and ``true_labels`` are aligned with the rows the
    report covers. Removed rows no longer count as wrong after cleaning.
    """
    noisy = np.asarray(noisy_labels, dtype=np.int64)
    truth = np.asarray(true_labels, dtype=np.int64)
    if not (noisy.shape == truth.shape == (len(report.verdicts),)):
        raise ValueError("label views are not aligned with the cleaning report")
    if np.any(noisy != report.original_labels):
        raise ValueError("noisy labels differ from the labels the report was built on")
    final = report.final_labels()
    survived = final >= 0
    return Correctness(
        wrong_before=int(np.sum(noisy != truth)),
        wrong_after=int(np.sum(survived & (final != truth))),
        corrections_made=report.corrections_total,
    )
