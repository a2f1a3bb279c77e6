"""Model-agnostic Shapley feature attributions by permutation sampling.

For a sample ``x``, a permutation ``pi`` of the features and a background
row ``b``, features are switched from ``b`` to ``x`` in the order ``pi``;
each switch credits the change in model output to the switched feature.
Averaging over permutations (and background rows) estimates the Shapley
values of the game ``v(S) = E_b f(x_S, b_~S)``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import InvalidConfig, check_random_state, derive_seed

MAX_EXACT_FEATURES = 8
_CHUNK_ELEMENTS = 2_000_000


@dataclass
class ShapleyEstimate:
    """Attributions ``values[i, j]`` of feature ``j`` for sample ``i``.

    ``baseline`` is the mean model output over the background set and
    ``std_error`` the per-sample Monte-Carlo standard error of the
    attribution sum (zero under exhaustive enumeration).
    """

    values: np.ndarray
    baseline: float
    outputs: np.ndarray
    std_error: np.ndarray
    n_permutations: int
    seed: Optional[int]
    exact: bool = False
    feature_names: Optional[list] = None

    @property
    def efficiency_residual(self) -> np.ndarray:
        return self.values.sum(axis=1) + self.baseline - self.outputs

    def names(self) -> list[str]:
        if self.feature_names is not None:
            return list(self.feature_names)
        return [f"x{j}" for j in range(self.values.shape[1])]


def sample_background(X, n: int = 100, seed: int = 0) -> np.ndarray:
    """Up to ``n`` rows of ``X`` drawn without replacement."""
    X = np.asarray(X, dtype=float)
    if len(X) <= n:
        return X.copy()
    idx = np.sort(check_random_state(seed).choice(len(X), size=n, replace=False))
    return X[idx]


def _path_contributions(predictor, x, bases, perms) -> np.ndarray:
    """Marginal contributions, shape ``(len(perms), p)``, for one sample.

    Row ``k`` walks from ``bases[k]`` to ``x`` in the order ``perms[k]``.
    """
    K, p = perms.shape
    out = np.empty((K, p))
    steps = np.arange(p + 1)[:, None]
    chunk = max(1, _CHUNK_ELEMENTS // ((p + 1) * p))
    for lo in range(0, K, chunk):
        hi = min(K, lo + chunk)
        ranks = np.argsort(perms[lo:hi], axis=1)  # position of each feature in its permutation
        mask = ranks[:, None, :] < steps[None, :, :]  # (k, p+1, p): feature already switched
        b = bases[lo:hi, None, :]
        Z = np.where(mask, x[None, None, :], b)
        f = np.asarray(predictor(Z.reshape(-1, p)), dtype=float).reshape(hi - lo, p + 1)
        delta = np.diff(f, axis=1)  # delta[k, j]: contribution of feature perms[k, j]
        np.put_along_axis(out[lo:hi], perms[lo:hi], delta, axis=1)
    return out


def shapley_attributions(
    predictor: Callable[[np.ndarray], np.ndarray],
    background,
    samples,
    n_permutations: int = 128,
    seed: int = 0,
    exact: bool = False,
    feature_names: Optional[Sequence[str]] = None,
) -> ShapleyEstimate:
    """Estimate Shapley attributions of ``predictor`` at each row of ``samples``.

    Parameters
    ----------
    predictor : callable
        Maps an ``(n, p)`` array to ``n`` real outputs (for example a
        decision function). Must act row-wise.
    background : array-like of shape (m, p)
        Reference rows that stand in for "feature absent".
    samples : array-like of shape (n, p)
    n_permutations : int
        Permutations per sample; each pairs with a random background row.
    exact : bool
        Enumerate every permutation against every background row. Only
        for ``p <= 8``; attributions then satisfy efficiency up to
        rounding and ignored features get exactly zero.
    """
    B = np.atleast_2d(np.asarray(background, dtype=float))
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    if B.size == 0 or len(B) == 0:
        raise InvalidConfig("the background set is empty")
    if B.shape[1] != S.shape[1]:
        raise InvalidConfig(f"background has {B.shape[1]} features, samples have {S.shape[1]}")
    p = S.shape[1]
    if feature_names is not None and len(feature_names) != p:
        raise InvalidConfig("feature_names length differs from the feature count")
    base_out = np.asarray(predictor(B), dtype=float)
    if base_out.shape != (len(B),):
        raise InvalidConfig("predictor must return one value per row")
    baseline = float(base_out.mean())
    outputs = np.asarray(predictor(S), dtype=float)

    values = np.zeros(S.shape)
    std_error = np.zeros(len(S))
    if exact:
        if p > MAX_EXACT_FEATURES:
            raise InvalidConfig(f"exact enumeration is limited to {MAX_EXACT_FEATURES} features")
        perms_all = np.array(list(itertools.permutations(range(p))), dtype=np.int64)
        perms = np.repeat(perms_all, len(B), axis=0)
        bases = np.tile(B, (len(perms_all), 1))
        for i, x in enumerate(S):
            values[i] = _path_contributions(predictor, x, bases, perms).mean(axis=0)
        return ShapleyEstimate(values, baseline, outputs, std_error, len(perms_all), None,
                               True, None if feature_names is None else list(feature_names))

    if n_permutations < 1:
        raise InvalidConfig("n_permutations must be >= 1")
    for i, x in enumerate(S):
        rng = check_random_state(derive_seed(seed, i))
        perms = np.argsort(rng.random((n_permutations, p)), axis=1)
        pick = rng.integers(len(B), size=n_permutations)
        contrib = _path_contributions(predictor, x, B[pick], perms)
        values[i] = contrib.mean(axis=0)
        # each walk's contributions sum to f(x) - f(b_k); only the base varies
        if n_permutations > 1:
            std_error[i] = base_out[pick].std(ddof=1) / math.sqrt(n_permutations)
    return ShapleyEstimate(values, baseline, outputs, std_error, n_permutations, seed, False,
                           None if feature_names is None else list(feature_names))


def importance_ranking(estimate: ShapleyEstimate) -> list[tuple[str, float]]:
    """Features by descending mean ``|attribution|``; ties keep feature order."""
    if estimate.values.size == 0:
        raise InvalidConfig("empty estimate")
    score = np.abs(estimate.values).mean(axis=0)
    order = sorted(range(len(score)), key=lambda j: (-score[j], j))
    names = estimate.names()
    return [(names[j], float(score[j])) for j in order]


def write_attributions(estimate: ShapleyEstimate, path, sample_ids: Optional[Sequence[str]] = None) -> None:
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(estimate.values))]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + estimate.names())
        for rid, row in zip(ids, estimate.values):
            w.writerow([rid] + [repr(float(v)) for v in row])


def write_ranking(ranking: list[tuple[str, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_abs_attribution"])
        for r, (name, v) in enumerate(ranking, 1):
            w.writerow([r, name, repr(v)])
