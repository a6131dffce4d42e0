"""Shrunken-centroids probabilistic classifier used as the nonconformity model.

The model keeps one pooled per-feature scale ``s`` and uses it for the
standardised contrasts, for rebuilding the shrunken centroids and for the
distance term of the discriminant score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, LabelSpace


@dataclass(frozen=True)
class CpscConfig:
    delta: float = 0.0
    temperature: float = 1.0
    variance_floor: float = 1e-8

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not self.variance_floor > 0:
            raise ValueError(f"variance_floor must be > 0, got {self.variance_floor}")


@dataclass(frozen=True, eq=False)
class CpscModel:
    overall_centroid: np.ndarray
    shrunken_centroids: np.ndarray
    pooled_scale: np.ndarray
    log_priors: np.ndarray
    label_space: LabelSpace
    config: CpscConfig

    @property
    def n_classes(self) -> int:
        return self.shrunken_centroids.shape[0]

    @property
    def n_features(self) -> int:
        return self.shrunken_centroids.shape[1]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X, single

    def discriminatory_scores(self, X) -> np.ndarray:
        """Log prior minus half the scaled squared distance to each shrunken centroid."""
        X, single = self._check(X)
        inv_var = 1.0 / self.pooled_scale**2
        out = np.empty((X.shape[0], self.n_classes))
        for m in range(self.n_classes):
            diff = X - self.shrunken_centroids[m]
            out[:, m] = self.log_priors[m] - 0.5 * (diff * diff) @ inv_var
        return out[0] if single else out

    def predict_proba(self, X) -> np.ndarray:
        scores = self.discriminatory_scores(X) / self.config.temperature
        z = scores - scores.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def nonconformity_all(self, X) -> np.ndarray:
        """Nonconformity of every sample paired with every candidate label."""
        return alpha_from_proba(self.predict_proba(X))

    def nonconformity(self, X, labels) -> np.ndarray:
        A = np.atleast_2d(self.nonconformity_all(X))
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if labels.shape[0] != A.shape[0]:
            raise ValueError(f"{labels.shape[0]} labels for {A.shape[0]} samples")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("label id out of range")
        out = A[np.arange(A.shape[0]), labels]
        return out if np.ndim(X) > 1 else out[0]

    def to_dict(self) -> dict:
        return {
            "overall_centroid": self.overall_centroid.tolist(),
            "shrunken_centroids": self.shrunken_centroids.tolist(),
            "pooled_scale": self.pooled_scale.tolist(),
            "log_priors": self.log_priors.tolist(),
            "classes": list(self.label_space.classes),
            "config": {
                "delta": self.config.delta,
                "temperature": self.config.temperature,
                "variance_floor": self.config.variance_floor,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CpscModel":
        return cls(
            overall_centroid=np.array(doc["overall_centroid"], dtype=np.float64),
            shrunken_centroids=np.array(doc["shrunken_centroids"], dtype=np.float64),
            pooled_scale=np.array(doc["pooled_scale"], dtype=np.float64),
            log_priors=np.array(doc["log_priors"], dtype=np.float64),
            label_space=LabelSpace(tuple(doc["classes"])),
            config=CpscConfig(**doc["config"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CpscModel":
        return cls.from_dict(json.loads(text))


def alpha_from_proba(P) -> np.ndarray:
    """Map class probabilities to nonconformity: 0.5 - (p_y - max_{other} p) / 2."""
    P = np.asarray(P, dtype=np.float64)
    if P.shape[-1] < 2:
        raise ValueError("nonconformity needs at least two classes")
    out = np.empty_like(P)
    for y in range(P.shape[-1]):
        rest = np.delete(P, y, axis=-1).max(axis=-1)
        out[..., y] = 0.5 - (P[..., y] - rest) / 2.0
    return out


def soft_threshold(d, delta: float) -> np.ndarray:
    return np.sign(d) * np.maximum(np.abs(d) - delta, 0.0)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # lexsort keys run last-to-first: label is primary, then column 0, 1, ...
    keys = [X[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [y]
    return np.lexsort(keys)


def shrinkage_contrasts(train: Dataset, variance_floor: float = 1e-8):
    """Class centroids, overall centroid, pooled scale and raw contrasts.

    Rows are sorted into a canonical (label, features) order before any
    summation, so the result does not depend on the row order of ``train``.
    """
    m = train.n_classes
    n = train.n
    counts = train.class_counts()
    if np.any(counts == 0):
        missing = [train.label_space.classes[c] for c in np.flatnonzero(counts == 0)]
        raise ValueError(f"classes without training samples: {missing}")
    if m < 2:
        raise ValueError("shrunken centroids need at least two classes")
    if n <= m:
        raise ValueError(f"need more samples than classes (n={n}, M={m})")
    order = _canonical_order(train.features, train.labels)
    X = train.features[order]
    y = train.labels[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    centroids = np.add.reduceat(X, starts, axis=0) / counts[:, None]
    overall = X.sum(axis=0) / n
    resid = X - centroids[y]
    variance = np.maximum((resid * resid).sum(axis=0) / (n - m), variance_floor)
    scale = np.sqrt(variance)
    contrasts = (centroids - overall) / scale
    return centroids, overall, scale, contrasts, counts


def fit(train: Dataset, config: CpscConfig | None = None) -> CpscModel:
    config = config or CpscConfig()
    _, overall, scale, contrasts, counts = shrinkage_contrasts(train, config.variance_floor)
    shrunk = overall + scale * soft_threshold(contrasts, config.delta)
    return CpscModel(
        overall_centroid=overall,
        shrunken_centroids=shrunk,
        pooled_scale=scale,
        log_priors=np.log(counts / train.n),
        label_space=train.label_space,
        config=config,
    )


def discriminatory_scores(model: CpscModel, x) -> np.ndarray:
    return model.discriminatory_scores(x)


def predict_proba(model: CpscModel, x) -> np.ndarray:
    return model.predict_proba(x)


def nonconformity(model: CpscModel, x, label) -> float | np.ndarray:
    return model.nonconformity(x, label)
