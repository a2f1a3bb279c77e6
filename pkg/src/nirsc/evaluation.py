"""Confusion-matrix metrics, cross-validation and result tables."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, InvalidConfig, LeakageError, NirscError, derive_seed
from .ingest import FoldPlan
from .pipeline import FittedPipeline, PipelineSpec, augment_spectra, fit_pipeline

METRIC_NAMES = ("acc", "bacc", "recall", "precision", "f_score")
METRIC_LABELS = {"acc": "ACC", "bacc": "BACC", "recall": "Recall",
                 "precision": "Precision", "f_score": "F-Score"}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(y_true, y_pred) -> ConfusionCounts:
    """Counts with cancer (1) as the positive class."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise InvalidConfig("y_true and y_pred must be 1-D and of equal length")
    if not (np.isin(t, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise InvalidConfig("labels must be binary 0/1")
    return ConfusionCounts(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


@dataclass(frozen=True)
class MetricSet:
    acc: float
    bacc: float
    recall: float
    precision: float
    f_score: float
    specificity: float
    undefined: tuple = ()

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES + ("specificity",)}


def _ratio(num: float, den: float, name: str, undefined: list) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def metrics(counts: ConfusionCounts) -> MetricSet:
    """Accuracy, balanced accuracy, recall, precision and F-score.

    Precision is TP / (TP + FP); TN / (TN + FP) is reported separately as
    ``specificity``. Any 0/0 ratio evaluates to 0 and is listed in
    ``undefined``.
    """
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    if counts.total <= 0:
        raise InvalidConfig("metrics need at least one evaluated sample")
    undefined: list = []
    recall = _ratio(tp, tp + fn, "recall", undefined)
    specificity = _ratio(tn, tn + fp, "specificity", undefined)
    precision = _ratio(tp, tp + fp, "precision", undefined)
    f_score = _ratio(2 * recall * precision, recall + precision, "f_score", undefined)
    return MetricSet(
        acc=(tp + tn) / counts.total,
        bacc=(recall + specificity) / 2,
        recall=recall,
        precision=precision,
        f_score=f_score,
        specificity=specificity,
        undefined=tuple(undefined),
    )


def format_pm(mean: float, std: float, digits: int = 3) -> str:
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


@dataclass
class FoldResult:
    fold: int
    counts: ConfusionCounts
    metrics: MetricSet
    n_train: int
    n_validation: int
    n_synthetic: int
    overlap: int  # augmentation-visible ids that are also validation ids


@dataclass
class EvalReport:
    """Per-fold metrics of one cross-validated pipeline.

    Statistics are cross-validation (validation-fold) statistics; the
    standard deviation uses ``n - 1``.
    """

    descriptor: dict
    folds: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(f.metrics, name) for f in self.folds])

    def mean(self, name: str) -> float:
        return float(self.values(name).mean())

    def std(self, name: str) -> float:
        v = self.values(name)
        return float(v.std(ddof=1)) if len(v) > 1 else 0.0

    def summary(self) -> dict:
        return {k: {"mean": self.mean(k), "std": self.std(k)} for k in METRIC_NAMES}

    def formatted(self) -> dict:
        return {k: format_pm(self.mean(k), self.std(k)) for k in METRIC_NAMES}

    @property
    def leakage_violations(self) -> int:
        return sum(f.overlap for f in self.folds)

    def to_dict(self) -> dict:
        return {
            "descriptor": self.descriptor,
            "statistic": "cross-validation mean and sample std over folds",
            "summary": self.summary(),
            "formatted": self.formatted(),
            "folds": [
                {
                    "fold": f.fold,
                    "counts": asdict(f.counts),
                    "metrics": f.metrics.as_dict(),
                    "n_train": f.n_train,
                    "n_validation": f.n_validation,
                    "n_synthetic": f.n_synthetic,
                    "leakage_overlap": f.overlap,
                }
                for f in self.folds
            ],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls(descriptor=d["descriptor"], warnings=list(d.get("warnings", [])))
        for f in d["folds"]:
            m = f["metrics"]
            rep.folds.append(FoldResult(
                fold=f["fold"], counts=ConfusionCounts(**f["counts"]),
                metrics=MetricSet(**m), n_train=f["n_train"],
                n_validation=f["n_validation"], n_synthetic=f["n_synthetic"],
                overlap=f["leakage_overlap"],
            ))
        return rep

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def describe(spec: PipelineSpec, name: Optional[str] = None) -> dict:
    return {
        "name": name or spec.model,
        "arm": spec.arm,
        "preprocessing": spec.preprocessing,
        "augmentation": spec.augmentation,
        "model": spec.model,
        "params": spec.to_dict()["params"],
        "window": spec.to_dict()["window"] if spec.preprocessing == "snv_features" else None,
        "seed": spec.seed,
    }


def _check_leakage(pipe: FittedPipeline, validation: Dataset) -> int:
    overlap = len(pipe.visible_ids & set(validation.ids.tolist()))
    if overlap or validation.synthetic.any():
        raise LeakageError(
            f"{overlap} augmentation-visible ids reached the validation fold"
        )
    return overlap


def run_cv(
    train: Dataset,
    plan: FoldPlan,
    spec: PipelineSpec,
    name: Optional[str] = None,
    augmentation_cache: Optional[dict] = None,
    jobs: int = 1,
) -> EvalReport:
    """Cross-validate ``spec`` over ``plan``.

    Augmentation sees only each fold's training part. ``augmentation_cache``
    (a dict) lets repeated calls reuse per-fold GAN output; it is keyed by
    fold and the augmentation settings of ``spec``.
    """
    if train.synthetic.any():
        raise InvalidConfig("cross-validation input must not contain synthetic rows")
    splits = list(plan.split(train))

    def one(fold: int, tr_idx, va_idx) -> FoldResult:
        tr, va = train.subset(tr_idx), train.subset(va_idx)
        seed = derive_seed(spec.seed, fold)
        try:
            augmented = None
            if spec.augmentation == "gan":
                key = (fold, json.dumps(spec.to_dict()["gan"], sort_keys=True),
                       json.dumps(spec.to_dict()["filter"], sort_keys=True), spec.seed)
                if augmentation_cache is not None and key in augmentation_cache:
                    augmented = augmentation_cache[key]
                else:
                    augmented = augment_spectra(tr, spec, seed)
                    if augmentation_cache is not None:
                        augmentation_cache[key] = augmented
            pipe = fit_pipeline(tr, spec, seed=seed, augmented=augmented)
            overlap = _check_leakage(pipe, va)
            counts = confusion(va.labels, pipe.predict(va))
        except NirscError as exc:
            raise type(exc)(f"fold {fold}: {exc}") from exc
        return FoldResult(fold, counts, metrics(counts), len(tr), len(va), pipe.n_synthetic, overlap)

    if jobs == 1:
        results = [one(i, *s) for i, s in enumerate(splits)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs, backend="threading")(
            delayed(one)(i, *s) for i, s in enumerate(splits)
        )
    report = EvalReport(describe(spec, name))
    for r in sorted(results, key=lambda r: r.fold):
        report.folds.append(r)
        for m in r.metrics.undefined:
            msg = f"fold {r.fold}: {m} is 0/0, reported as 0"
            report.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return report


@dataclass
class TestResult:
    counts: ConfusionCounts
    metrics: MetricSet
    pipeline: FittedPipeline


def evaluate_test(train: Dataset, test: Dataset, spec: PipelineSpec) -> TestResult:
    """Fit on all of ``train`` (augmented per the arm) and score ``test`` once."""
    shared = set(train.ids.tolist()) & set(test.ids.tolist())
    if shared:
        raise InvalidConfig(f"train and test share ids, e.g. {sorted(shared)[:3]}")
    if test.synthetic.any():
        raise InvalidConfig("the test set must not contain synthetic rows")
    pipe = fit_pipeline(train, spec, seed=derive_seed(spec.seed, 1_000_003))
    _check_leakage(pipe, test)
    counts = confusion(test.labels, pipe.predict(test))
    return TestResult(counts, metrics(counts), pipe)


def results_table(
    rows: Sequence[tuple[str, dict]], fmt: str = "text"
) -> str:
    """Render rows of ``(algorithm, {metric: "m ± s"})`` as text, csv or markdown."""
    header = ["Algorithm"] + [METRIC_LABELS[k] for k in METRIC_NAMES]
    body = [[name] + [cells.get(k, "-") for k in METRIC_NAMES] for name, cells in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in body]
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise InvalidConfig(f"unknown table format {fmt!r}")
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(header), rule] + [line(r) for r in body]) + "\n"


def report_rows(reports: Sequence[EvalReport]) -> list[tuple[str, dict]]:
    return [(r.descriptor.get("name", r.descriptor.get("model")), r.formatted()) for r in reports]


def group_by_arm(reports: Sequence[EvalReport]) -> dict:
    groups: dict = {}
    for r in reports:
        groups.setdefault(r.descriptor["arm"], []).append(r)
    return dict(sorted(groups.items()))
