"""PLS-DA: PLS1 regression onto 0/1 class codes, thresholded."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..core import ConvergenceFailure, DegenerateClass, GridMismatch, InvalidConfig


@dataclass(frozen=True)
class PlsdaConfig:
    n_components: int = 2
    max_iterations: int = 500
    tolerance: float = 1e-9
    threshold: float = 0.5

    def __post_init__(self):
        if self.n_components < 0 or self.max_iterations < 1 or self.tolerance <= 0:
            raise InvalidConfig("invalid PLS-DA configuration")


@dataclass
class PlsModel:
    x_mean: np.ndarray
    y_mean: float
    weights: np.ndarray  # W, (n_features, A)
    loadings: np.ndarray  # P, (n_features, A)
    y_loadings: np.ndarray  # q, (A,)
    coef: np.ndarray  # b, (n_features,)
    intercept: float
    threshold: float
    train_scores: Optional[np.ndarray] = None  # T, (n_samples, A)
    train_response: Optional[np.ndarray] = None

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.coef):
            raise GridMismatch(f"expected {len(self.coef)} features, got {X.shape[-1]}")
        return X @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {
            "kind": "plsda",
            "x_mean": self.x_mean.tolist(),
            "y_mean": self.y_mean,
            "weights": self.weights.tolist(),
            "loadings": self.loadings.tolist(),
            "y_loadings": self.y_loadings.tolist(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlsModel":
        p = len(d["coef"])
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(
            x_mean=arr("x_mean"), y_mean=float(d["y_mean"]),
            weights=arr("weights").reshape(p, -1), loadings=arr("loadings").reshape(p, -1),
            y_loadings=arr("y_loadings"), coef=arr("coef"),
            intercept=float(d["intercept"]), threshold=float(d["threshold"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def plsda_fit(features, labels, config: PlsdaConfig = PlsdaConfig()) -> PlsModel:
    """NIPALS PLS1 on mean-centred data.

    For each component the weight vector is iterated to convergence
    (``w ∝ Xᵀu``, ``t = Xw``, ``u = y q / q²``), X and y are deflated by the
    scores, and the coefficient vector is ``W (PᵀW)⁻¹ q``.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise InvalidConfig("features must be (n_samples, n_features) aligned with labels")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateClass("PLS-DA needs both classes")
    n, p = X.shape
    A = config.n_components
    if A > min(n - 1, p):
        raise InvalidConfig(f"n_components={A} exceeds min(n_samples - 1, n_features)={min(n - 1, p)}")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    E = X - x_mean
    f = y - y_mean
    W = np.zeros((p, A))
    P = np.zeros((p, A))
    T = np.zeros((n, A))
    q = np.zeros(A)
    for a in range(A):
        u = f.copy()
        t_old = None
        for _ in range(config.max_iterations):
            w = E.T @ u
            norm = np.linalg.norm(w)
            if norm == 0:
                raise ConvergenceFailure(f"component {a}: X carries no information about y")
            w /= norm
            t = E @ w
            tt = t @ t
            qa = (f @ t) / tt
            u = f * (qa / (qa * qa)) if qa != 0 else f
            if t_old is not None and np.linalg.norm(t - t_old) <= config.tolerance * max(1.0, np.linalg.norm(t)):
                break
            t_old = t
        else:
            raise ConvergenceFailure(f"component {a} did not converge in {config.max_iterations} iterations")
        pa = E.T @ t / tt
        E = E - np.outer(t, pa)
        f = f - qa * t
        W[:, a], P[:, a], T[:, a], q[a] = w, pa, t, qa
    if A:
        coef = W @ np.linalg.solve(P.T @ W, q)
    else:
        coef = np.zeros(p)
    intercept = float(y_mean - x_mean @ coef)
    return PlsModel(
        x_mean=x_mean, y_mean=y_mean, weights=W, loadings=P, y_loadings=q, coef=coef,
        intercept=intercept, threshold=config.threshold, train_scores=T,
        train_response=y_mean + T @ q,
    )


def plsda_predict(model: PlsModel, features):
    """Return ``(labels, scores)``; label is 1 where score >= threshold."""
    scores = model.decision_function(features)
    return (scores >= model.threshold).astype(int), scores


class PLSDAClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, n_components=2, threshold=0.5, max_iterations=500, tolerance=1e-9):
        self.n_components = n_components
        self.threshold = threshold
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.array([0, 1])
        cfg = PlsdaConfig(int(self.n_components), int(self.max_iterations),
                          float(self.tolerance), float(self.threshold))
        self.model_ = plsda_fit(X, y, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_array(X))

    def predict(self, X):
        return (self.decision_function(X) >= self.model_.threshold).astype(int)
