"""Domain types shared by every stage: wavelength grid, lesion taxonomy,
datasets and the error hierarchy."""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class NirscError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDataset(NirscError, ValueError):
    pass


class GridMismatch(NirscError, ValueError):
    pass


class ZeroVariance(NirscError, ValueError):
    pass


class InvalidConfig(NirscError, ValueError):
    pass


class DegenerateClass(NirscError, ValueError):
    pass


class ConvergenceFailure(NirscError, RuntimeError):
    pass


class LeakageError(NirscError, AssertionError):
    """Synthetic or augmentation-visible rows reached a validation fold."""


class LesionType(str, enum.Enum):
    ACK = "ACK"
    SEK = "SEK"
    NEV = "NEV"
    BCC = "BCC"
    SCC = "SCC"
    MEL = "MEL"

    @property
    def is_cancer(self) -> bool:
        return self in _CANCER


_CANCER = frozenset({LesionType.BCC, LesionType.SCC, LesionType.MEL})

LESION_ORDER: tuple[LesionType, ...] = tuple(LesionType)
#: Lesion code written for synthetic rows, which have no lesion type.
SYNTHETIC_CODE = "SYN"

CANCER = 1
NON_CANCER = 0


def binary_label(lesion: LesionType | str) -> int:
    """Map a lesion type to the binary target (1 = cancer)."""
    return CANCER if LesionType(lesion).is_cancer else NON_CANCER


@dataclass(frozen=True)
class WavelengthGrid:
    start_nm: float = 900.0
    step_nm: float = 6.4
    count: int = 125

    def __post_init__(self):
        if self.count < 1 or self.step_nm <= 0:
            raise InvalidConfig(f"invalid grid {self!r}")

    @property
    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.count)

    def wavelength(self, i: int) -> float:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return self.start_nm + i * self.step_nm

    def column_names(self) -> list[str]:
        return [f"nm_{w:06.1f}" for w in self.wavelengths]


DEFAULT_GRID = WavelengthGrid()


@dataclass(frozen=True)
class LesionRecord:
    id: str
    lesion: Optional[LesionType]
    label: int
    spectrum: np.ndarray
    synthetic: bool = False


def _frozen(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented collection of lesion spectra.

    ``lesions`` holds ``None`` for synthetic rows. Arrays are read-only;
    derive new datasets with :meth:`subset`, :meth:`concat` or
    :meth:`with_spectra`.
    """

    ids: np.ndarray
    lesions: tuple
    labels: np.ndarray
    spectra: np.ndarray
    synthetic: np.ndarray
    grid: WavelengthGrid = field(default=DEFAULT_GRID)

    def __post_init__(self):
        ids = _frozen([str(i) for i in self.ids], dtype=object)
        lesions = tuple(None if l is None else LesionType(l) for l in self.lesions)
        labels = _frozen(self.labels, dtype=np.int64).reshape(-1)
        spectra = np.array(self.spectra, dtype=np.float64)
        if spectra.size == 0:
            spectra = spectra.reshape(0, self.grid.count)
        synthetic = _frozen(self.synthetic, dtype=bool).reshape(-1)
        n = len(ids)
        if spectra.ndim != 2 or spectra.shape[1] != self.grid.count:
            raise GridMismatch(
                f"spectra have shape {spectra.shape}, grid expects {self.grid.count} channels"
            )
        if not (len(lesions) == len(labels) == len(synthetic) == spectra.shape[0] == n):
            raise InvalidConfig("dataset columns have inconsistent lengths")
        if len(set(ids)) != n:
            dup = [k for k, c in Counter(ids).items() if c > 1]
            raise InvalidConfig(f"duplicate record ids: {dup[:5]}")
        if not np.all(np.isfinite(spectra)):
            raise InvalidConfig("spectra contain non-finite values")
        if n and not np.isin(labels, (0, 1)).all():
            raise InvalidConfig("labels must be 0 or 1")
        for lesion, label, syn, rid in zip(lesions, labels, synthetic, ids):
            if lesion is None:
                if not syn:
                    raise InvalidConfig(f"record {rid}: only synthetic records may omit the lesion")
            elif binary_label(lesion) != label:
                raise InvalidConfig(f"record {rid}: label {label} inconsistent with {lesion.value}")
        spectra.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "lesions", lesions)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "synthetic", synthetic)

    @classmethod
    def from_records(
        cls, records: Iterable[LesionRecord], grid: WavelengthGrid = DEFAULT_GRID
    ) -> "Dataset":
        records = list(records)
        spectra = (
            np.vstack([np.asarray(r.spectrum, dtype=float) for r in records])
            if records
            else np.empty((0, grid.count))
        )
        return cls(
            ids=[r.id for r in records],
            lesions=[r.lesion for r in records],
            labels=[r.label for r in records],
            spectra=spectra,
            synthetic=[r.synthetic for r in records],
            grid=grid,
        )

    @classmethod
    def empty(cls, grid: WavelengthGrid = DEFAULT_GRID) -> "Dataset":
        return cls([], (), [], np.empty((0, grid.count)), [], grid)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.grid == other.grid
            and list(self.ids) == list(other.ids)
            and self.lesions == other.lesions
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.synthetic, other.synthetic)
            and np.array_equal(self.spectra, other.spectra)
        )

    @property
    def records(self) -> list[LesionRecord]:
        return [
            LesionRecord(self.ids[i], self.lesions[i], int(self.labels[i]),
                         self.spectra[i], bool(self.synthetic[i]))
            for i in range(len(self))
        ]

    @property
    def strata(self) -> np.ndarray:
        """Stratification key per row: lesion code, or ``SYN``."""
        return np.array(
            [SYNTHETIC_CODE if l is None else l.value for l in self.lesions], dtype=object
        )

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return Dataset(
            ids=self.ids[index],
            lesions=tuple(self.lesions[i] for i in index),
            labels=self.labels[index],
            spectra=self.spectra[index].reshape(len(index), self.grid.count),
            synthetic=self.synthetic[index],
            grid=self.grid,
        )

    def with_spectra(self, spectra: np.ndarray) -> "Dataset":
        return Dataset(self.ids, self.lesions, self.labels, spectra, self.synthetic, self.grid)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.grid != self.grid:
            raise GridMismatch("cannot concatenate datasets on different grids")
        return Dataset(
            ids=np.concatenate([self.ids, other.ids]),
            lesions=self.lesions + other.lesions,
            labels=np.concatenate([self.labels, other.labels]),
            spectra=np.vstack([self.spectra, other.spectra]),
            synthetic=np.concatenate([self.synthetic, other.synthetic]),
            grid=self.grid,
        )

    def originals(self) -> "Dataset":
        return self.subset(~self.synthetic)


def synthetic_records(
    spectra: np.ndarray, label: int, prefix: str, grid: WavelengthGrid = DEFAULT_GRID
) -> Dataset:
    """Wrap generated spectra as synthetic-flagged rows with ids ``prefix0000..``."""
    spectra = np.atleast_2d(np.asarray(spectra, dtype=float))
    n = 0 if spectra.size == 0 else spectra.shape[0]
    return Dataset(
        ids=[f"{prefix}{i:05d}" for i in range(n)],
        lesions=(None,) * n,
        labels=np.full(n, label),
        spectra=spectra.reshape(n, grid.count),
        synthetic=np.ones(n, dtype=bool),
        grid=grid,
    )


@dataclass(frozen=True)
class ClassCounts:
    lesions: dict
    labels: dict

    @property
    def total(self) -> int:
        return sum(self.labels.values())


def class_counts(dataset: Dataset) -> ClassCounts:
    """Per-lesion and per-label counts.

    Synthetic rows are counted under ``SYN`` in ``lesions``; ``labels``
    covers every row.
    """
    if len(dataset) == 0:
        raise EmptyDataset("class_counts of an empty dataset")
    lesions = Counter(dataset.strata.tolist())
    labels = Counter(int(v) for v in dataset.labels)
    ordered = {k.value: lesions[k.value] for k in LESION_ORDER if lesions[k.value]}
    if lesions[SYNTHETIC_CODE]:
        ordered[SYNTHETIC_CODE] = lesions[SYNTHETIC_CODE]
    return ClassCounts(
        lesions=ordered,
        labels={k: labels[k] for k in (CANCER, NON_CANCER) if labels[k]},
    )


def check_random_state(seed) -> np.random.Generator:
    """Return a numpy Generator for an integer seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise InvalidConfig("an explicit seed is required")
    return np.random.default_rng(int(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for a (seed, key...) path."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_matrix(X: Sequence) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return X
