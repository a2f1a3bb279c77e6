"""PCA score-space confidence ellipse used to reject generated outliers."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..core import InvalidConfig, ZeroVariance


def chi2_quantile(confidence: float, dof: int = 2) -> float:
    """Squared-Mahalanobis radius enclosing ``confidence`` of a Gaussian.

    For two degrees of freedom the CDF is ``1 - exp(-x / 2)``, which inverts
    in closed form.
    """
    if not 0.0 < confidence < 1.0:
        raise InvalidConfig("confidence must lie in (0, 1)")
    if dof == 2:
        return -2.0 * math.log1p(-confidence)
    from scipy.stats import chi2

    return float(chi2.ppf(confidence, dof))


class EllipseFilter(OutlierMixin, BaseEstimator):
    """Confidence ellipse in the leading principal-component scores.

    ``fit`` runs PCA on the reference data (eigendecomposition of the
    sample covariance) and stores the score-space centre and covariance.
    ``predict`` returns +1 for rows inside the ellipse and -1 otherwise.
    """

    def __init__(self, n_components=2, confidence=0.95):
        self.n_components = n_components
        self.confidence = confidence

    def fit(self, X, y=None):
        X = check_array(X)
        k = int(self.n_components)
        if X.shape[0] < 3:
            raise InvalidConfig("the ellipse needs at least 3 reference samples")
        if not 1 <= k <= X.shape[1]:
            raise InvalidConfig(f"n_components must lie in [1, {X.shape[1]}]")
        self.mean_ = X.mean(axis=0)
        cov = np.cov(X - self.mean_, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
        eigval, eigvec = np.linalg.eigh(cov)
        order = np.argsort(eigval)[::-1][:k]
        self.explained_variance_ = eigval[order]
        self.components_ = eigvec[:, order].T
        scores = self._scores(X)
        self.center_ = scores.mean(axis=0)
        self.covariance_ = np.atleast_2d(np.cov(scores, rowvar=False, ddof=1))
        scale = max(float(np.trace(cov)), np.finfo(float).tiny)
        if np.linalg.eigvalsh(self.covariance_).min() <= 1e-12 * scale:
            raise ZeroVariance("reference scores have a singular covariance")
        self.precision_ = np.linalg.inv(self.covariance_)
        self.threshold_ = chi2_quantile(self.confidence, k)
        self.n_features_in_ = X.shape[1]
        return self

    def _scores(self, X):
        return (X - self.mean_) @ self.components_.T

    def transform(self, X):
        check_is_fitted(self, "threshold_")
        return self._scores(check_array(X))

    def mahalanobis(self, X) -> np.ndarray:
        """Squared Mahalanobis distance of each row's scores from the centre."""
        d = self.transform(X) - self.center_
        return np.einsum("ij,jk,ik->i", d, self.precision_, d)

    def contains(self, X) -> np.ndarray:
        return self.mahalanobis(X) <= self.threshold_

    def predict(self, X):
        return np.where(self.contains(X), 1, -1)


def fit_ellipse(data, n_components: int = 2, confidence: float = 0.95) -> EllipseFilter:
    return EllipseFilter(n_components=n_components, confidence=confidence).fit(data)


def filter_generated(generated, ellipse: EllipseFilter) -> np.ndarray:
    """Keep the rows of ``generated`` whose scores fall inside ``ellipse``."""
    generated = np.asarray(generated, dtype=float)
    if generated.size == 0:
        return generated.reshape(0, ellipse.n_features_in_)
    return generated[ellipse.contains(generated)]
