"""Optional stages run before any model fitting: z-scoring, SMOTE, L1 feature selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dataset import DataError, Dataset


@dataclass(frozen=True)
class SmoteConfig:
    enabled: bool = False
    k_neighbors: int = 5

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass(frozen=True)
class L1Config:
    enabled: bool = False
    c_grid: tuple[float, ...] = (0.05, 0.1, 1.0, 10.0)
    # fixes C instead of tuning it jointly with the cleaning grid
    freeze_c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        if not self.c_grid or any(c <= 0 for c in self.c_grid):
            raise ValueError("c_grid entries must be > 0")
        if self.freeze_c is not None and self.freeze_c <= 0:
            raise ValueError("freeze_c must be > 0")

    @property
    def grid(self) -> tuple[float, ...]:
        return (self.freeze_c,) if self.freeze_c is not None else self.c_grid


@dataclass(frozen=True)
class PreprocessConfig:
    standardize: bool = False
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    l1_select: L1Config = field(default_factory=L1Config)


def standardize_fit_apply(fit_on: Dataset, apply_to, floor: float = 1e-8):
    """Z-score every dataset in ``apply_to`` with statistics of ``fit_on``.

    Returns ``(transformed, means, scales)``.
    """
    means = fit_on.features.mean(axis=0)
    scales = np.maximum(fit_on.features.std(axis=0), floor)
    out = [ds.with_features((ds.features - means) / scales, ds.feature_names) for ds in apply_to]
    return out, means, scales


def smote_oversample(
    ds: Dataset, cfg: SmoteConfig | None = None, seed: int = 0, id_prefix: str = "smote"
) -> Dataset:
    """Oversample every non-majority class up to the majority count.

    Each synthetic point is ``x + u * (z - x)`` for a random member ``x``
    of the class, one of its ``k`` nearest same-class neighbours ``z`` and
    ``u ~ U[0, 1)``. Original rows are kept unchanged and come first.
    Synthetic ids are ``"{id_prefix}:{class}:{i}"``.
    """
    cfg = cfg or SmoteConfig(enabled=True)
    rng = np.random.default_rng(seed)
    counts = ds.class_counts()
    target = counts.max()
    new_X, new_y, new_ids = [], [], []
    for c in range(ds.n_classes):
        deficit = int(target - counts[c])
        if deficit == 0 or counts[c] == 0:
            continue
        if counts[c] < 2:
            raise DataError(
                f"class {ds.label_space.classes[c]!r} has a single sample; SMOTE needs neighbours"
            )
        P = ds.features[ds.labels == c]
        k = min(cfg.k_neighbors, P.shape[0] - 1)
        d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k]
        base = rng.integers(0, P.shape[0], size=deficit)
        pick = neighbours[base, rng.integers(0, k, size=deficit)]
        u = rng.random(deficit)[:, None]
        new_X.append(P[base] + u * (P[pick] - P[base]))
        new_y.append(np.full(deficit, c))
        name = ds.label_space.classes[c]
        new_ids.extend(f"{id_prefix}:{name}:{i}" for i in range(deficit))
    if not new_X:
        return ds
    taken = set(ds.sample_ids)
    if taken.intersection(new_ids):
        raise DataError("synthetic sample ids collide with existing ids")
    return Dataset(
        np.vstack([ds.features, *new_X]),
        np.concatenate([ds.labels, *new_y]),
        ds.label_space,
        ds.sample_ids + tuple(new_ids),
        ds.feature_names,
    )


@dataclass(frozen=True)
class FeatureMask:
    selected: np.ndarray
    source_c: float

    def __post_init__(self):
        sel = np.array(self.selected, dtype=bool)
        if not sel.any():
            raise ValueError("feature mask selects no features")
        sel.flags.writeable = False
        object.__setattr__(self, "selected", sel)

    @property
    def indices(self) -> list[int]:
        return np.flatnonzero(self.selected).tolist()

    def apply(self, ds: Dataset) -> Dataset:
        if ds.d != self.selected.size:
            raise ValueError(f"mask width {self.selected.size} does not match {ds.d} features")
        idx = self.indices
        return ds.with_features(ds.features[:, idx], [ds.feature_names[j] for j in idx])

    def to_json(self) -> str:
        return json.dumps({"n_features": int(self.selected.size), "indices": self.indices, "source_c": self.source_c})

    @classmethod
    def from_json(cls, text: str) -> "FeatureMask":
        doc = json.loads(text)
        sel = np.zeros(doc["n_features"], dtype=bool)
        sel[doc["indices"]] = True
        return cls(sel, doc["source_c"])


def _l1_logistic(X, y, C, tol=1e-6, max_iter=1000):
    """Binary L1-penalised logistic regression by FISTA.

    Minimises ``C * sum(logloss) + ||w||_1`` with an unpenalised intercept.
    Returns ``(w, b, n_iter)``.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    lipschitz = 0.25 * C * np.linalg.norm(Xa, 2) ** 2
    step = 1.0 / max(lipschitz, 1e-12)
    theta = np.zeros(d + 1)
    z = theta.copy()
    t = 1.0
    for it in range(1, max_iter + 1):
        grad = C * (Xa.T @ (expit(Xa @ z) - y))
        nxt = z - step * grad
        nxt[:d] = np.sign(nxt[:d]) * np.maximum(np.abs(nxt[:d]) - step, 0.0)
        change = np.max(np.abs(nxt - theta))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = nxt + ((t - 1.0) / t_next) * (nxt - theta)
        theta, t = nxt, t_next
        if change <= tol * max(1.0, np.max(np.abs(theta))):
            break
    return theta[:d], theta[d], it


def l1_select(train: Dataset, c: float, tol: float = 1e-6, max_iter: int = 1000) -> FeatureMask:
    """Select features with a nonzero coefficient in an L1 logistic fit.

    Binary problems use one model; more classes use one-vs-rest and keep a
    feature if any of the per-class models uses it.
    """
    if c <= 0:
        raise ValueError("c must be > 0")
    present = np.flatnonzero(train.class_counts())
    if present.size < 2:
        raise ValueError("L1 selection needs at least two classes")
    targets = [1] if train.n_classes == 2 else list(present)
    coef = np.zeros((len(targets), train.d))
    for row, cls in enumerate(targets):
        y = (train.labels == cls).astype(np.float64)
        coef[row], _, _ = _l1_logistic(train.features, y, c, tol, max_iter)
    selected = np.any(np.abs(coef) > 1e-10, axis=0)
    if not selected.any():
        raise ValueError(f"L1 penalty at C={c} removes every feature; use a larger C")
    return FeatureMask(selected, float(c))
