"""Downstream classifiers: equal-covariance LDA and L2-penalised logistic regression."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import log_softmax, softmax

from .dataset import Dataset


def _softmax_rows(Z):
    return softmax(Z, axis=1)


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Gaussian discriminant with a shared covariance.

    The within-class scatter is factorised by SVD; directions whose singular
    value falls below ``rank_tolerance`` times the largest are dropped, so a
    singular covariance (duplicated columns, D > n) is handled without ridge
    shrinkage.
    """

    class_means: np.ndarray
    scalings: np.ndarray
    log_priors: np.ndarray
    rank_tolerance: float = 1e-10

    kind = "lda"

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = X @ self.scalings
        M = self.class_means @ self.scalings
        d2 = ((Z[:, None, :] - M[None, :, :]) ** 2).sum(axis=2)
        return self.log_priors - 0.5 * d2

    def predict_proba(self, X) -> np.ndarray:
        return _softmax_rows(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "class_means": self.class_means.tolist(),
            "scalings": self.scalings.tolist(),
            "log_priors": self.log_priors.tolist(),
            "rank_tolerance": self.rank_tolerance,
        }


def lda_fit(train: Dataset, rank_tolerance: float = 1e-10) -> LdaModel:
    X, y, m = train.features, train.labels, train.n_classes
    counts = train.class_counts()
    if m < 2 or np.count_nonzero(counts) < 2:
        raise ValueError("LDA needs at least two classes")
    if np.any(counts < 2):
        bad = [train.label_space.classes[c] for c in np.flatnonzero(counts < 2)]
        raise ValueError(f"LDA needs at least two samples per class; short classes: {bad}")
    means = np.vstack([X[y == c].mean(axis=0) for c in range(m)])
    Xc = X - means[y]
    std = Xc.std(axis=0)
    std[std == 0] = 1.0
    _, S, Vt = np.linalg.svd(Xc / std / np.sqrt(train.n - m), full_matrices=False)
    rank = int(np.sum(S > rank_tolerance * S[0])) if S.size and S[0] > 0 else 0
    if rank == 0:
        raise ValueError("within-class scatter is zero; LDA is undefined")
    scalings = (Vt[:rank] / std).T / S[:rank]
    return LdaModel(means, scalings, np.log(counts / train.n), rank_tolerance)


@dataclass(frozen=True, eq=False)
class LrModel:
    """Linear softmax model; binary problems store a single weight row."""

    weights: np.ndarray
    intercepts: np.ndarray
    converged: bool = True
    n_iter: int = 0
    objective_history: tuple = field(default=(), repr=False)

    kind = "lr"

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = X @ self.weights.T + self.intercepts
        if self.weights.shape[0] == 1:
            Z = np.hstack([np.zeros_like(Z), Z])
        return Z

    def predict_proba(self, X) -> np.ndarray:
        return _softmax_rows(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "intercepts": self.intercepts.tolist(),
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def _binary_objective(params, X, y, C):
    w, b = params[:-1], params[-1]
    z = X @ w + b
    # log(1 + exp(-s z)) with s = +-1, written stably
    s = 2.0 * y - 1.0
    loss = np.logaddexp(0.0, -s * z).sum()
    f = 0.5 * w @ w + C * loss
    r = -s * np.exp(-np.logaddexp(0.0, s * z))
    g = np.empty_like(params)
    g[:-1] = w + C * (X.T @ r)
    g[-1] = C * r.sum()
    return f, g


def _multinomial_objective(params, X, Y, C):
    m, d = Y.shape[1], X.shape[1]
    W = params[: m * d].reshape(m, d)
    b = params[m * d:]
    Z = X @ W.T + b
    L = log_softmax(Z, axis=1)
    f = 0.5 * np.sum(W * W) - C * np.sum(Y * L)
    R = C * (np.exp(L) - Y)
    g = np.concatenate([(W + R.T @ X).ravel(), R.sum(axis=0)])
    return f, g


def lr_fit(train: Dataset, C: float = 1.0, tol: float = 1e-6, max_iter: int = 1000) -> LrModel:
    """Minimise ``0.5 ||W||^2 + C * NLL`` with L-BFGS; the intercept is unpenalised.

    Two classes use the logistic form, more classes the multinomial form.
    Failure to converge within ``max_iter`` is reported through a warning and
    the ``converged`` flag; the last iterate is still returned.
    """
    X, y, m = train.features, train.labels, train.n_classes
    if np.count_nonzero(train.class_counts()) < 2:
        raise ValueError("logistic regression needs at least two classes")
    d = X.shape[1]
    if m == 2:
        fun, args, size = _binary_objective, (X, y.astype(np.float64), C), d + 1
    else:
        Y = np.eye(m)[y]
        fun, args, size = _multinomial_objective, (X, Y, C), m * (d + 1)
    n = X.shape[0]

    def scaled(params, *a):
        # dividing by n keeps the minimiser and makes gtol scale-free
        f, g = fun(params, *a)
        return f / n, g / n

    history = [scaled(np.zeros(size), *args)[0]]
    res = optimize.minimize(
        scaled,
        np.zeros(size),
        args=args,
        jac=True,
        method="L-BFGS-B",
        callback=lambda intermediate_result: history.append(intermediate_result.fun),
        options={"gtol": tol, "maxiter": max_iter},
    )
    converged = bool(res.success) or float(np.max(np.abs(res.jac))) <= 10 * tol
    if not converged:
        warnings.warn(f"logistic regression did not converge: {res.message}", RuntimeWarning, stacklevel=2)
    if m == 2:
        W, b = res.x[:-1].reshape(1, d), res.x[-1:]
    else:
        W, b = res.x[: m * d].reshape(m, d), res.x[m * d:]
    return LrModel(W, b, converged, int(res.nit), tuple(history))


CLASSIFIERS = {"lda": lda_fit, "lr": lr_fit}


def fit_classifier(kind: str, train: Dataset):
    try:
        return CLASSIFIERS[kind](train)
    except KeyError:
        raise ValueError(f"unknown classifier {kind!r}; choose from {sorted(CLASSIFIERS)}") from None


def model_to_json(model) -> str:
    return json.dumps(model.to_dict())
