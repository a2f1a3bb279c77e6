"""Hyperparameter search with a fixed trial budget.

Two samplers are available. ``"random"`` draws every trial uniformly.
``"tpe"`` starts with uniform draws and then switches to a density-ratio
sampler: past trials are split at the top-``gamma`` quantile of the
objective, candidates are drawn from kernels around the good points, and the
candidate maximising ``l(x) / g(x)`` is kept.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .core import InvalidConfig, NirscError, check_random_state, derive_seed
from .features import FEATURE_KINDS, WINDOW_COUNT_BOUNDS

GAMMA = 0.25
N_CANDIDATES = 24


class Dimension:
    """One named search dimension. Continuous kinds map to the unit interval."""

    name: str

    def sample(self, rng: np.random.Generator):
        raise NotImplementedError

    def contains(self, value) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Real(Dimension):
    name: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise InvalidConfig(f"{self.name}: low > high")

    def to_unit(self, v: float) -> float:
        span = self.high - self.low
        return 0.5 if span == 0 else (v - self.low) / span

    def from_unit(self, u: float) -> float:
        return float(min(self.high, max(self.low, self.low + u * (self.high - self.low))))

    def sample(self, rng):
        return self.from_unit(rng.random())

    def contains(self, value) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class LogReal(Real):
    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise InvalidConfig(f"{self.name}: log dimensions need 0 < low <= high")

    def to_unit(self, v: float) -> float:
        lo, hi = math.log(self.low), math.log(self.high)
        return 0.5 if hi == lo else (math.log(v) - lo) / (hi - lo)

    def from_unit(self, u: float) -> float:
        lo, hi = math.log(self.low), math.log(self.high)
        return float(min(self.high, max(self.low, math.exp(lo + u * (hi - lo)))))


@dataclass(frozen=True)
class Int(Dimension):
    """Integers ``low, low + step, ..., <= high``."""

    name: str
    low: int
    high: int
    step: int = 1

    def __post_init__(self):
        if self.step < 1 or self.low > self.high:
            raise InvalidConfig(f"{self.name}: need step >= 1 and low <= high")

    @property
    def n_values(self) -> int:
        return (self.high - self.low) // self.step + 1

    def to_unit(self, v: int) -> float:
        n = self.n_values
        return 0.5 if n == 1 else ((v - self.low) // self.step) / (n - 1)

    def from_unit(self, u: float) -> int:
        n = self.n_values
        k = int(round(min(1.0, max(0.0, u)) * (n - 1)))
        return self.low + k * self.step

    def sample(self, rng):
        return self.low + int(rng.integers(self.n_values)) * self.step

    def contains(self, value) -> bool:
        return (
            isinstance(value, (int, np.integer))
            and self.low <= value <= self.high
            and (value - self.low) % self.step == 0
        )


@dataclass(frozen=True)
class Categorical(Dimension):
    name: str
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise InvalidConfig(f"{self.name}: no choices")
        object.__setattr__(self, "choices", tuple(self.choices))

    def sample(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]

    def contains(self, value) -> bool:
        return any(value == c and type(value) is type(c) for c in self.choices)

    def index(self, value) -> int:
        return self.choices.index(value)


@dataclass(frozen=True)
class SearchSpace:
    """Named dimensions plus fixed values merged into every point."""

    dimensions: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise InvalidConfig("duplicate dimension names")

    def __len__(self) -> int:
        return len(self.dimensions)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def __add__(self, other: "SearchSpace") -> "SearchSpace":
        return SearchSpace(self.dimensions + other.dimensions, {**self.fixed, **other.fixed})

    def contains(self, point: dict) -> bool:
        return all(d.contains(point[d.name]) for d in self.dimensions)

    def complete(self, point: dict) -> dict:
        return {**self.fixed, **point}


def lightgbm_space() -> SearchSpace:
    """LightGBM-style ranges. Leaves are searched on a step of 20."""
    return SearchSpace(
        (
            Real("class_weight", 1.0, 15.0),
            Int("n_trees", 10, 100),
            LogReal("learning_rate", 0.01, 1.0),
            Int("max_leaves", 20, 5000, step=20),
            Int("max_depth", 3, 12),
        ),
        fixed={"min_samples_leaf": 20},
    )


def xgboost_space() -> SearchSpace:
    return SearchSpace(
        (
            Real("class_weight", 1.0, 25.0),
            Int("max_depth", 1, 15),
            Int("n_trees", 10, 100),
            LogReal("learning_rate", 0.01, 1.0),
            Real("colsample_by_tree", 0.5, 1.0),
            Real("subsample", 0.1, 1.0),
            Real("l1_alpha", 0.0, 20.0),
            Real("l2_lambda", 0.0, 20.0),
        ),
        fixed={"min_child_weight": 1.0, "max_leaves": 2**15},
    )


def feature_space(mask: bool = True, max_overlap: float = 0.5) -> SearchSpace:
    """Window count, overlap and (optionally) one on/off switch per statistic.

    A point that switches every statistic off keeps the full set.
    """
    dims = [Int("window_count", *WINDOW_COUNT_BOUNDS), Real("overlap_fraction", 0.0, max_overlap)]
    if mask:
        dims += [Categorical(f"use_{k}", (False, True)) for k in FEATURE_KINDS]
    return SearchSpace(tuple(dims))


def plsda_space(max_components: int = 20) -> SearchSpace:
    return SearchSpace((Int("n_components", 1, max_components),))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    point: dict
    objective: float
    seed: int

    def to_row(self) -> list:
        return [self.trial, json.dumps(_plain(self.point), sort_keys=True), repr(self.objective)]


def _plain(point: dict) -> dict:
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in point.items()}


def n_startup(budget: int) -> int:
    return max(10, math.ceil(0.2 * budget))


def _bandwidth(u: np.ndarray) -> float:
    # Silverman-style rule on the unit interval, kept away from 0 and 1
    n = len(u)
    s = float(np.std(u)) if n > 1 else 0.0
    return float(np.clip(1.06 * max(s, 0.05) * n ** (-0.2), 0.03, 0.5))


def _log_density_continuous(
    u: np.ndarray, centers: np.ndarray, bw: float, weights: Optional[np.ndarray] = None
) -> np.ndarray:
    """Log of a Gaussian-kernel mixture over ``centers`` plus one uniform component.

    ``weights`` (summing to ``len(centers)``) scale the kernels; the uniform
    component always carries weight one.
    """
    w = np.ones(len(centers)) if weights is None else weights
    z = (u[:, None] - centers[None, :]) / bw
    k = np.exp(-0.5 * z * z) / (bw * math.sqrt(2 * math.pi))
    dens = (k @ w + 1.0) / (len(centers) + 1)
    return np.log(dens)


def _categorical_probs(dim: Categorical, values: Sequence) -> np.ndarray:
    counts = np.ones(len(dim.choices))
    for v in values:
        counts[dim.index(v)] += 1
    return counts / counts.sum()


def sample_point(
    space: SearchSpace,
    seed: int,
    history: Sequence[TrialRecord] = (),
    budget: int = 200,
    gamma: float = GAMMA,
    n_candidates: int = N_CANDIDATES,
) -> dict:
    """Draw the next point given the trials so far.

    Uniform while fewer than ``max(10, 20% of budget)`` trials exist,
    density-ratio sampling afterwards.
    """
    if len(space) == 0:
        raise InvalidConfig("the search space has no dimensions")
    rng = check_random_state(seed)
    if len(history) < n_startup(budget):
        return {d.name: d.sample(rng) for d in space.dimensions}

    order = sorted(range(len(history)), key=lambda i: (-history[i].objective, i))
    n_good = max(1, math.ceil(gamma * len(history)))
    good = [history[i].point for i in order[:n_good]]
    bad = [history[i].point for i in order[n_good:]] or good
    # linear rank weights (best first, mean one) pull the good density toward the best trials
    good_weights = 2.0 * np.arange(n_good, 0, -1) / (n_good + 1)

    score = np.zeros(n_candidates)
    columns: dict[str, list] = {}
    for d in space.dimensions:
        g_vals = [p[d.name] for p in good]
        b_vals = [p[d.name] for p in bad]
        if isinstance(d, Categorical):
            pg, pb = _categorical_probs(d, g_vals), _categorical_probs(d, b_vals)
            idx = rng.choice(len(d.choices), size=n_candidates, p=pg)
            score += np.log(pg[idx]) - np.log(pb[idx])
            columns[d.name] = [d.choices[i] for i in idx]
            continue
        gu = np.array([d.to_unit(v) for v in g_vals])
        bu = np.array([d.to_unit(v) for v in b_vals])
        bw_g, bw_b = _bandwidth(gu), _bandwidth(bu)
        # draw from the good mixture: either a kernel around a good point or the prior
        probs = np.append(good_weights, 1.0) / (len(gu) + 1)
        pick = rng.choice(len(gu) + 1, size=n_candidates, p=probs)
        u = np.where(
            pick < len(gu),
            gu[np.minimum(pick, len(gu) - 1)] + bw_g * rng.standard_normal(n_candidates),
            rng.random(n_candidates),
        )
        values = [d.from_unit(x) for x in np.clip(u, 0.0, 1.0)]
        # score the decoded (rounded/clipped) values so ties are consistent
        uu = np.array([d.to_unit(v) for v in values])
        score += (_log_density_continuous(uu, gu, bw_g, good_weights)
                  - _log_density_continuous(uu, bu, bw_b))
        columns[d.name] = values
    best = int(np.argmax(score))
    return {d.name: columns[d.name][best] for d in space.dimensions}


@dataclass
class OptimizationResult:
    best: TrialRecord
    history: list

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "params", "objective"])
        for t in self.history:
            w.writerow(t.to_row())
        return buf.getvalue()

    def write_history(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.history_csv())

    def best_json(self) -> str:
        return json.dumps(
            {"trial": self.best.trial, "objective": self.best.objective,
             "params": _plain(self.best.point)},
            indent=2, sort_keys=True,
        )

    def write_best(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.best_json() + "\n")


def _evaluate(objective, point, trial):
    try:
        value = float(objective(point))
    except NirscError as exc:
        raise type(exc)(f"trial {trial}: {exc}") from exc
    if not math.isfinite(value):
        raise InvalidConfig(f"trial {trial}: objective returned {value}")
    return value


def optimize(
    space: SearchSpace,
    objective: Callable[[dict], float],
    budget: int = 200,
    seed: int = 0,
    sampler: str = "tpe",
    jobs: int = 1,
    callback: Optional[Callable[[TrialRecord], Any]] = None,
) -> OptimizationResult:
    """Run exactly ``budget`` trials and return the maximising one.

    ``objective`` receives the sampled point merged with ``space.fixed``.
    Ties go to the earliest trial. With ``sampler="random"`` trials are
    independent and ``jobs`` of them may run concurrently.
    """
    if budget < 1:
        raise InvalidConfig("budget must be >= 1")
    if sampler not in ("tpe", "random"):
        raise InvalidConfig(f"unknown sampler {sampler!r}")
    history: list[TrialRecord] = []
    if sampler == "random":
        seeds = [derive_seed(seed, t) for t in range(budget)]
        points = [space.complete(sample_point(space, s, (), budget)) for s in seeds]
        if jobs == 1:
            values = [_evaluate(objective, p, t) for t, p in enumerate(points)]
        else:
            from joblib import Parallel, delayed

            values = Parallel(n_jobs=jobs, backend="threading")(
                delayed(_evaluate)(objective, p, t) for t, p in enumerate(points)
            )
        history = [TrialRecord(t, p, v, s) for t, (p, v, s) in enumerate(zip(points, values, seeds))]
        if callback:
            for rec in history:
                callback(rec)
    else:
        for t in range(budget):
            s = derive_seed(seed, t)
            point = space.complete(sample_point(space, s, history, budget))
            rec = TrialRecord(t, point, _evaluate(objective, point, t), s)
            history.append(rec)
            if callback:
                callback(rec)
    best = max(history, key=lambda r: (r.objective, -r.trial))
    return OptimizationResult(best, history)


def model_space(spec, family: str = "lightgbm") -> SearchSpace:
    """Search space for ``spec``: model dimensions, plus the window dimensions
    when the arm extracts features."""
    if spec.model == "plsda":
        space = plsda_space()
    elif family == "lightgbm":
        space = lightgbm_space()
    elif family == "xgboost":
        space = xgboost_space()
    else:
        raise InvalidConfig(f"unknown model family {family!r}")
    if spec.preprocessing == "snv_features":
        space = space + feature_space()
    return space


def cv_objective(train, plan, spec, metric: str = "bacc", cache: Optional[dict] = None):
    """Objective mapping a point to the mean CV ``metric`` of ``spec.with_point(point)``.

    GAN augmentation does not depend on the tuned values, so one cache is
    shared by every trial.
    """
    from .evaluation import METRIC_NAMES, run_cv

    if metric not in METRIC_NAMES:
        raise InvalidConfig(f"metric must be one of {METRIC_NAMES}")
    cache = {} if cache is None else cache

    def objective(point: dict) -> float:
        return run_cv(train, plan, spec.with_point(point), augmentation_cache=cache).mean(metric)

    return objective


def tune_pipeline(
    train, plan, spec, budget: int = 200, seed: int = 0, metric: str = "bacc",
    family: str = "lightgbm", sampler: str = "tpe", cache: Optional[dict] = None,
    space: Optional[SearchSpace] = None,
):
    """Tune ``spec`` on ``train`` by cross-validation; returns ``(best spec, result)``."""
    space = model_space(spec, family) if space is None else space
    result = optimize(space, cv_objective(train, plan, spec, metric, cache), budget, seed, sampler)
    return spec.with_point(result.best.point), result
