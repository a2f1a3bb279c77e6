"""SMOTE oversampling of the minority class."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_X_y

from ..core import (
    Dataset,
    DegenerateClass,
    InvalidConfig,
    check_random_state,
    synthetic_records,
)
from ..preprocess import snv_dataset


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0
    gap_range: tuple[float, float] = (0.0, 1.0)
    # one gap per attribute instead of one per synthetic row
    per_attribute_gap: bool = False

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise InvalidConfig("k_neighbors must be >= 1")
        lo, hi = self.gap_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidConfig("gap_range must satisfy 0 <= lo <= hi <= 1")


class SmoteSamples(NamedTuple):
    samples: np.ndarray
    base: np.ndarray
    neighbor: np.ndarray
    gap: np.ndarray


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (Euclidean, ties by index)."""
    sq = np.sum(X**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_samples(minority, n_to_generate: int, config: SmoteConfig = SmoteConfig()) -> SmoteSamples:
    """Generate synthetic rows with their (base, neighbour, gap) provenance."""
    X = np.asarray(minority, dtype=float)
    if X.ndim != 2:
        raise InvalidConfig("minority samples must be a 2-D matrix")
    if n_to_generate < 0:
        raise InvalidConfig("n_to_generate must be >= 0")
    if config.k_neighbors >= len(X):
        raise InvalidConfig(
            f"k_neighbors={config.k_neighbors} needs more than {len(X)} minority samples"
        )
    rng = check_random_state(config.seed)
    nn = nearest_neighbors(X, config.k_neighbors)
    base = rng.integers(0, len(X), size=n_to_generate)
    neighbor = nn[base, rng.integers(0, config.k_neighbors, size=n_to_generate)]
    lo, hi = config.gap_range
    shape = (n_to_generate, X.shape[1]) if config.per_attribute_gap else (n_to_generate, 1)
    gap = lo + (hi - lo) * rng.random(shape)
    samples = X[base] + gap * (X[neighbor] - X[base])
    return SmoteSamples(samples, base, neighbor, gap if config.per_attribute_gap else gap[:, 0])


def smote(minority, n_to_generate: int, config: SmoteConfig = SmoteConfig()) -> np.ndarray:
    return smote_samples(minority, n_to_generate, config).samples


def _minority(y: np.ndarray) -> tuple[int, int]:
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DegenerateClass("both classes are needed to balance")
    order = np.argsort(counts, kind="stable")
    minority = classes[order[0]]
    return int(minority), int(counts.max() - counts.min())


def smote_resample(X, y, config: SmoteConfig = SmoteConfig()):
    """Balance ``(X, y)``; returns ``(X, y, synthetic_mask)`` with originals first."""
    X, y = np.asarray(X, dtype=float), np.asarray(y)
    minority, deficit = _minority(y)
    if deficit == 0:
        return X, y, np.zeros(len(y), dtype=bool)
    new = smote(X[y == minority], deficit, config)
    return (
        np.vstack([X, new]),
        np.concatenate([y, np.full(deficit, minority, dtype=y.dtype)]),
        np.concatenate([np.zeros(len(y), dtype=bool), np.ones(deficit, dtype=bool)]),
    )


def balance_with_smote(
    train: Dataset, space: str = "raw", config: SmoteConfig = SmoteConfig()
) -> Dataset:
    """Oversample the minority class of ``train`` up to the majority count.

    ``space`` picks where interpolation happens: ``"raw"`` spectra or
    ``"snv"``-normalised spectra (the returned dataset is then in SNV space).
    Feature-space SMOTE works on matrices via :func:`smote_resample`.
    """
    if space not in ("raw", "snv"):
        raise InvalidConfig(f"unknown SMOTE space {space!r}")
    data = snv_dataset(train) if space == "snv" else train
    minority, deficit = _minority(data.labels)
    if deficit == 0:
        return data
    new = smote(data.spectra[data.labels == minority], deficit, config)
    return data.concat(synthetic_records(new, minority, "smote-", data.grid))


class SMOTESampler(BaseEstimator):
    """``fit_resample`` interface in the style of imbalanced-learn."""

    def __init__(self, k_neighbors=5, random_state=0):
        self.k_neighbors = k_neighbors
        self.random_state = random_state

    def fit_resample(self, X, y):
        X, y = check_X_y(X, y)
        X_res, y_res, mask = smote_resample(
            X, y, SmoteConfig(k_neighbors=self.k_neighbors, seed=self.random_state)
        )
        self.synthetic_mask_ = mask
        return X_res, y_res
