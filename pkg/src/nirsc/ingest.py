"""Dataset CSV round-tripping, the stratified train/test split and
stratified k-fold plans."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import (
    DEFAULT_GRID,
    LESION_ORDER,
    SYNTHETIC_CODE,
    Dataset,
    DegenerateClass,
    GridMismatch,
    InvalidConfig,
    LesionType,
    WavelengthGrid,
    check_random_state,
)

META_COLUMNS = ("id", "lesion", "label", "synthetic")


def dataset_header(grid: WavelengthGrid = DEFAULT_GRID) -> list[str]:
    return list(META_COLUMNS) + grid.column_names()


def write_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` as CSV; floats use ``repr`` so reading is bit-exact."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(dataset_header(dataset.grid))
            for rid, code, label, syn, row in zip(
                dataset.ids, dataset.strata, dataset.labels, dataset.synthetic, dataset.spectra
            ):
                writer.writerow([rid, code, int(label), int(syn), *map(repr, row.tolist())])
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def _parse_grid(header: list[str]) -> WavelengthGrid:
    if tuple(header[:4]) != META_COLUMNS:
        raise InvalidConfig(f"header must start with {','.join(META_COLUMNS)}")
    spectral = header[4:]
    if spectral != DEFAULT_GRID.column_names():
        raise GridMismatch(
            f"expected {DEFAULT_GRID.count} spectral columns "
            f"nm_0900.0..nm_1693.6, found {len(spectral)}"
        )
    return DEFAULT_GRID


def read_dataset(path) -> Dataset:
    """Read a dataset CSV, validating grid, ids and values."""
    if not os.path.exists(path):
        raise InvalidConfig(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidConfig(f"{path}: missing header") from None
        grid = _parse_grid(header)
        ids, lesions, labels, synthetic, rows = [], [], [], [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise GridMismatch(
                    f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}"
                )
            rid, code, label, syn = row[:4]
            if rid in seen:
                raise InvalidConfig(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            try:
                lesion = None if code == SYNTHETIC_CODE else LesionType(code)
                label_v, syn_v = int(label), int(syn)
                values = [float(v) for v in row[4:]]
            except ValueError as exc:
                raise InvalidConfig(f"{path}:{lineno}: malformed row ({exc})") from None
            if label_v not in (0, 1) or syn_v not in (0, 1):
                raise InvalidConfig(f"{path}:{lineno}: label/synthetic must be 0 or 1")
            if not all(map(math.isfinite, values)):
                raise InvalidConfig(f"{path}:{lineno}: non-finite spectral value")
            ids.append(rid)
            lesions.append(lesion)
            labels.append(label_v)
            synthetic.append(bool(syn_v))
            rows.append(values)
    spectra = np.array(rows, dtype=float).reshape(len(rows), grid.count)
    try:
        return Dataset(ids, tuple(lesions), labels, spectra, synthetic, grid)
    except InvalidConfig as exc:
        raise InvalidConfig(f"{path}: {exc}") from None


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    require_nonempty: bool = False

    def __post_init__(self):
        if not 0.0 <= self.test_fraction < 1.0:
            raise InvalidConfig("test_fraction must lie in [0, 1)")


def _strata_order(strata: np.ndarray) -> list[str]:
    known = [l.value for l in LESION_ORDER] + [SYNTHETIC_CODE]
    present = set(strata.tolist())
    return [s for s in known if s in present]


def allocate_test_counts(sizes: dict[str, int], fraction: float) -> dict[str, int]:
    """Largest-remainder apportionment of ``ceil(fraction * N)`` test rows.

    Equal remainders go to the stratum listed first in ``sizes``.
    """
    total = sum(sizes.values())
    n_test = math.ceil(round(fraction * total, 9))
    quotas = {s: fraction * n for s, n in sizes.items()}
    counts = {s: math.floor(round(q, 9)) for s, q in quotas.items()}
    remainders = sorted(
        sizes, key=lambda s: -round(quotas[s] - counts[s], 9)
    )  # stable: ties keep stratum order
    missing = n_test - sum(counts.values())
    for s in remainders:
        if missing <= 0:
            break
        if counts[s] < sizes[s]:
            counts[s] += 1
            missing -= 1
    return counts


def stratified_split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Split by lesion stratum into (train, test); both keep input order."""
    if dataset.synthetic.any():
        raise InvalidConfig("synthetic records must not enter a train/test split")
    strata = dataset.strata
    order = _strata_order(strata)
    sizes = {s: int(np.sum(strata == s)) for s in order}
    counts = allocate_test_counts(sizes, spec.test_fraction)
    rng = check_random_state(spec.seed)
    test_mask = np.zeros(len(dataset), dtype=bool)
    for s in order:
        members = np.flatnonzero(strata == s)
        chosen = rng.permutation(members)[: counts[s]]
        test_mask[chosen] = True
        if spec.require_nonempty and (counts[s] == 0 or counts[s] == sizes[s]):
            raise DegenerateClass(f"stratum {s} is empty on one side of the split")
    return dataset.subset(~test_mask), dataset.subset(test_mask)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    assignment: dict = field(default_factory=dict)

    def fold_of(self, ids) -> np.ndarray:
        try:
            return np.array([self.assignment[str(i)] for i in ids], dtype=int)
        except KeyError as exc:
            raise InvalidConfig(f"record {exc.args[0]!r} is not in the fold plan") from None

    def split(self, dataset: Dataset) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (train_index, validation_index) per fold."""
        folds = self.fold_of(dataset.ids)
        for f in range(self.k):
            yield np.flatnonzero(folds != f), np.flatnonzero(folds == f)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "seed": self.seed, "assignment": self.assignment})

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        raw = json.loads(text)
        return cls(k=int(raw["k"]), seed=int(raw["seed"]),
                   assignment={str(k): int(v) for k, v in raw["assignment"].items()})


def make_folds(train: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold plan.

    Each stratum is shuffled, strata are laid end to end and rows are dealt
    round-robin onto folds, so fold sizes and per-stratum fold counts both
    differ by at most one.
    """
    if k < 2:
        raise InvalidConfig("k must be at least 2")
    if train.synthetic.any():
        raise InvalidConfig("synthetic records cannot be assigned to validation folds")
    strata = train.strata
    order = _strata_order(strata)
    smallest = min((int(np.sum(strata == s)) for s in order), default=0)
    if smallest < k:
        raise DegenerateClass(f"k={k} exceeds the smallest stratum size {smallest}")
    rng = check_random_state(seed)
    dealt = np.concatenate([rng.permutation(np.flatnonzero(strata == s)) for s in order])
    assignment = {}
    for pos, idx in enumerate(dealt):
        assignment[str(train.ids[idx])] = pos % k
    ordered = {str(i): assignment[str(i)] for i in train.ids}
    return FoldPlan(k=k, seed=int(seed), assignment=ordered)


def read_fold_plan(path) -> FoldPlan:
    with open(path, encoding="utf-8") as fh:
        return FoldPlan.from_json(fh.read())


def write_fold_plan(plan: FoldPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())


def stratum_sizes(dataset: Dataset) -> dict[str, int]:
    strata = dataset.strata
    return {s: int(np.sum(strata == s)) for s in _strata_order(strata)}


__all__ = [
    "SplitSpec", "FoldPlan", "read_dataset", "write_dataset", "stratified_split",
    "make_folds", "read_fold_plan", "write_fold_plan", "allocate_test_counts",
    "dataset_header", "stratum_sizes",
]
