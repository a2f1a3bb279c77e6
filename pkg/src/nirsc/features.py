"""Statistical features over spectral windows.

A spectrum is cut into ``window_count`` (optionally overlapping) windows and
twelve summary statistics are computed per window. Columns are ordered
window-major, then by :data:`FEATURE_KINDS`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import DEFAULT_GRID, Dataset, EmptyDataset, InvalidConfig, WavelengthGrid

FEATURE_KINDS: tuple[str, ...] = (
    "mean",
    "median",
    "std",
    "kurtosis",
    "skewness",
    "max",
    "min",
    "peak",
    "peak_to_peak",
    "rms",
    "variance",
    "crest_factor",
)

# search bounds used by the tuner; direct calls accept any count
WINDOW_COUNT_BOUNDS = (5, 50)


@dataclass(frozen=True)
class WindowSpec:
    window_count: int = 5
    overlap_fraction: float = 0.0
    feature_mask: tuple[str, ...] = field(default=FEATURE_KINDS)

    def __post_init__(self):
        if self.window_count < 1:
            raise InvalidConfig("window_count must be >= 1")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise InvalidConfig("overlap_fraction must lie in [0, 1)")
        mask = tuple(self.feature_mask)
        unknown = set(mask) - set(FEATURE_KINDS)
        if unknown:
            raise InvalidConfig(f"unknown feature kinds: {sorted(unknown)}")
        if not mask:
            raise InvalidConfig("feature_mask is empty")
        # canonical order regardless of how the caller listed them
        object.__setattr__(self, "feature_mask", tuple(k for k in FEATURE_KINDS if k in mask))


def plan_windows(signal_length: int, spec: WindowSpec) -> list[tuple[int, int]]:
    """Return ``(start, length)`` for each window.

    The nominal length ``m`` is the largest one for which ``window_count``
    windows at stride ``max(1, floor(m * (1 - overlap)))`` fit in the
    signal. Windows are clipped to the signal and the last one is extended
    to the final sample.
    """
    n, o = spec.window_count, spec.overlap_fraction
    m = math.floor(signal_length / (1.0 + (n - 1) * (1.0 - o)) + 1e-9)
    if m < 2:
        raise InvalidConfig(
            f"{n} windows over {signal_length} points leave windows shorter than 2"
        )
    stride = max(1, math.floor(m * (1.0 - o) + 1e-9))
    windows = []
    for i in range(n):
        start = i * stride
        end = signal_length if i == n - 1 else min(start + m, signal_length)
        if end - start < 2:
            raise InvalidConfig(f"window {i} is shorter than 2 after clipping")
        windows.append((start, end - start))
    return windows


def _moments(W: np.ndarray):
    mean = W.mean(axis=1)
    centered = W - mean[:, None]
    sq = centered**2
    m2 = sq.mean(axis=1)
    std = np.sqrt(m2)
    return mean, centered, sq, m2, std


def window_statistics(W: np.ndarray, mask: Sequence[str] = FEATURE_KINDS) -> np.ndarray:
    """Statistics of each row of ``W`` (rows = windows), columns per ``mask``.

    ``std`` uses the population form and ``variance`` the ``m - 1`` form.
    Constant rows (and rows whose spread underflows) give skewness and
    kurtosis 0; an all-zero row gives crest factor 0.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    m = W.shape[1]
    if m < 2:
        raise InvalidConfig("windows need at least two points")
    mean, centered, sq, m2, std = _moments(W)
    # std can underflow to 0 for tiny but non-constant windows; treat as constant
    constant = (W.max(axis=1) == W.min(axis=1)) | (std == 0)
    safe = np.where(constant, 1.0, std)
    z = centered / safe[:, None]  # standardise first so sigma**4 cannot underflow
    out = {}
    out["mean"] = mean
    out["median"] = np.median(W, axis=1)
    out["std"] = std
    out["kurtosis"] = np.where(constant, 0.0, (z**4).mean(axis=1))
    out["skewness"] = np.where(constant, 0.0, (z**3).mean(axis=1))
    out["max"] = W.max(axis=1)
    out["min"] = W.min(axis=1)
    out["peak"] = np.abs(W).max(axis=1)
    out["peak_to_peak"] = out["max"] - out["min"]
    out["rms"] = np.sqrt((W**2).mean(axis=1))
    out["variance"] = sq.sum(axis=1) / (m - 1)
    rms = out["rms"]
    out["crest_factor"] = np.where(rms == 0, 0.0, out["peak"] / np.where(rms == 0, 1.0, rms))
    return np.column_stack([out[k] for k in mask])


def window_features(values, mask: Sequence[str] = FEATURE_KINDS) -> dict[str, float]:
    """Named statistics of a single window."""
    mask = WindowSpec(feature_mask=tuple(mask)).feature_mask
    row = window_statistics(np.asarray(values, dtype=float)[None, :], mask)[0]
    return dict(zip(mask, row.tolist()))


class FeatureColumn(NamedTuple):
    kind: str
    start: int
    end: int  # exclusive
    start_nm: float
    end_nm: float

    @property
    def name(self) -> str:
        return f"{self.kind}[{self.start}:{self.end}]_{self.start_nm:.1f}-{self.end_nm:.1f}nm"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    columns: tuple[FeatureColumn, ...]
    ids: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", *self.names])
            ids = self.ids or tuple(str(i) for i in range(len(self.values)))
            for rid, row in zip(ids, self.values):
                writer.writerow([rid, *map(repr, row.tolist())])


def feature_columns(spec: WindowSpec, grid: WavelengthGrid = DEFAULT_GRID) -> list[FeatureColumn]:
    wl = grid.wavelengths
    cols = []
    for start, length in plan_windows(grid.count, spec):
        end = start + length
        for kind in spec.feature_mask:
            cols.append(FeatureColumn(kind, start, end, float(wl[start]), float(wl[end - 1])))
    return cols


def extract_matrix(X: np.ndarray, spec: WindowSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    blocks = [
        window_statistics(X[:, s : s + m], spec.feature_mask)
        for s, m in plan_windows(X.shape[1], spec)
    ]
    return np.hstack(blocks) if blocks else np.empty((len(X), 0))


def extract_features(dataset: Dataset, spec: WindowSpec = WindowSpec()) -> FeatureMatrix:
    if len(dataset) == 0:
        raise EmptyDataset("cannot extract features from an empty dataset")
    values = extract_matrix(dataset.spectra, spec)
    return FeatureMatrix(values, tuple(feature_columns(spec, dataset.grid)), tuple(dataset.ids))


class WindowFeatures(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer wrapping :func:`extract_matrix`.

    Parameters
    ----------
    window_count : int
        Number of windows per spectrum.
    overlap : float
        Fraction of each window shared with the next one.
    features : sequence of str, optional
        Subset of :data:`FEATURE_KINDS`; all of them when ``None``.
    """

    def __init__(self, window_count=5, overlap=0.0, features=None):
        self.window_count = window_count
        self.overlap = overlap
        self.features = features

    def _spec(self) -> WindowSpec:
        mask = FEATURE_KINDS if self.features is None else tuple(self.features)
        return WindowSpec(int(self.window_count), float(self.overlap), mask)

    def fit(self, X, y=None):
        X = check_array(X)
        self.spec_ = self._spec()
        self.windows_ = plan_windows(X.shape[1], self.spec_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidConfig(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        return extract_matrix(X, self.spec_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "spec_")
        grid: Optional[WavelengthGrid] = (
            DEFAULT_GRID if self.n_features_in_ == DEFAULT_GRID.count
            else WavelengthGrid(count=self.n_features_in_)
        )
        return np.array([c.name for c in feature_columns(self.spec_, grid)], dtype=object)
