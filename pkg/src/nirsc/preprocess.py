"""Standard Normal Variate scatter correction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .core import Dataset, InvalidConfig, ZeroVariance


@dataclass(frozen=True)
class SnvConfig:
    variance_epsilon: float = 1e-12

    def __post_init__(self):
        if not self.variance_epsilon > 0:
            raise InvalidConfig("variance_epsilon must be positive")


def _snv_rows(X: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=1, keepdims=True)
    centered = X - mean
    std = np.sqrt(np.sum(centered**2, axis=1, keepdims=True) / (X.shape[1] - 1))
    bad = std[:, 0] <= eps
    return centered / np.where(bad[:, None], 1.0, std), bad


def snv(spectrum, config: SnvConfig = SnvConfig()) -> np.ndarray:
    """Centre a spectrum on its mean and scale by its sample (n-1) std.

    Accepts any length >= 2; a 2-D input is normalised row by row.
    """
    x = np.asarray(spectrum, dtype=float)
    X = np.atleast_2d(x)
    if X.shape[1] < 2:
        raise InvalidConfig("SNV needs at least two wavelengths")
    if not np.all(np.isfinite(X)):
        raise InvalidConfig("SNV input must be finite")
    out, bad = _snv_rows(X, config.variance_epsilon)
    if bad.any():
        raise ZeroVariance(f"spectrum row {int(np.flatnonzero(bad)[0])} has zero variance")
    return out.reshape(x.shape)


def snv_dataset(dataset: Dataset, config: SnvConfig = SnvConfig()) -> Dataset:
    """Apply :func:`snv` to every record; ids, labels and order are kept."""
    if len(dataset) == 0:
        return dataset
    out, bad = _snv_rows(dataset.spectra, config.variance_epsilon)
    if bad.any():
        rid = dataset.ids[int(np.flatnonzero(bad)[0])]
        raise ZeroVariance(f"record {rid} has a zero-variance spectrum")
    return dataset.with_spectra(out)


class SNV(TransformerMixin, BaseEstimator):
    """Row-wise SNV as a stateless scikit-learn transformer."""

    def __init__(self, variance_epsilon=1e-12):
        self.variance_epsilon = variance_epsilon

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        return snv(X, SnvConfig(self.variance_epsilon))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
