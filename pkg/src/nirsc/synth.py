"""Synthetic NIR lesion spectra with known class structure.

Each lesion has a template made of a sloped baseline and Gaussian
absorption bands. Cancer lesions shift the bands near 970 nm and 1200 nm;
every lesion-specific deviation is scaled by ``separation``, so at
``separation=0`` all six templates coincide. Each record then gets
per-band amplitude jitter, a multiplicative/additive scatter term (which
SNV removes exactly) and white noise.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DEFAULT_GRID, Dataset, InvalidConfig, LesionType, binary_label, check_random_state

REFERENCE_COUNTS = {"ACK": 336, "SEK": 188, "NEV": 62, "BCC": 302, "SCC": 72, "MEL": 11}

# (center nm, width nm, amplitude) shared by all lesions
BASE_BANDS = ((970.0, 35.0, 0.30), (1200.0, 45.0, 0.45), (1450.0, 60.0, 0.90))

# per-lesion (d_center nm, d_width nm, d_amplitude) offsets for each base band,
# multiplied by the separation scale
LESION_DELTAS = {
    "ACK": ((0.0, 0.0, 0.010), (0.0, 0.0, 0.000), (0.0, 0.0, 0.00)),
    "SEK": ((0.0, 0.0, -0.010), (0.0, 2.0, 0.010), (0.0, 0.0, 0.02)),
    "NEV": ((0.0, 0.0, 0.000), (0.0, 0.0, -0.010), (0.0, 3.0, -0.02)),
    "BCC": ((6.0, 0.0, 0.060), (0.0, 0.0, -0.040), (0.0, 0.0, 0.00)),
    "SCC": ((5.0, 2.0, 0.050), (0.0, 0.0, -0.050), (0.0, 0.0, 0.02)),
    "MEL": ((7.0, 0.0, 0.070), (-3.0, 0.0, -0.030), (0.0, 0.0, -0.02)),
}


@dataclass(frozen=True)
class SynthSpec:
    counts: dict = field(default_factory=lambda: dict(REFERENCE_COUNTS))
    baseline: float = 0.4
    baseline_slope: float = 0.05  # absorbance per 100 nm
    noise_sigma: float = 0.004
    separation: float = 0.2
    amplitude_jitter: float = 0.05
    scatter_gain_sigma: float = 0.15
    scatter_offset_sigma: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if any(int(v) < 0 for v in self.counts.values()):
            raise InvalidConfig("lesion counts must be >= 0")
        unknown = set(self.counts) - set(REFERENCE_COUNTS)
        if unknown:
            raise InvalidConfig(f"unknown lesion types {sorted(unknown)}")
        if sum(int(v) for v in self.counts.values()) == 0:
            raise InvalidConfig("at least one lesion count must be positive")
        sigmas = (self.noise_sigma, self.amplitude_jitter, self.scatter_gain_sigma,
                  self.scatter_offset_sigma, self.separation)
        if min(sigmas) < 0:
            raise InvalidConfig("noise levels and separation must be >= 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        return cls(**json.loads(text))


def lesion_bands(lesion: str, separation: float) -> np.ndarray:
    """(n_bands, 3) array of band center, width and amplitude."""
    base = np.asarray(BASE_BANDS)
    return base + separation * np.asarray(LESION_DELTAS[lesion])


def _bands(wl: np.ndarray, bands: np.ndarray) -> np.ndarray:
    """Sum of Gaussian bands; ``bands`` is (..., n_bands, 3)."""
    c, w, a = bands[..., 0:1], bands[..., 1:2], bands[..., 2:3]
    return np.sum(a * np.exp(-0.5 * ((wl - c) / w) ** 2), axis=-2)


def template(lesion: str, spec: SynthSpec = SynthSpec(), grid=DEFAULT_GRID) -> np.ndarray:
    wl = grid.wavelengths
    base = spec.baseline + spec.baseline_slope * (wl - wl[0]) / 100.0
    return base + _bands(wl, lesion_bands(lesion, spec.separation))


def generate(spec: SynthSpec = SynthSpec()) -> Dataset:
    """Draw a dataset; rows are grouped by lesion in ACK..MEL order."""
    grid = DEFAULT_GRID
    wl = grid.wavelengths
    rng = check_random_state(spec.seed)
    ids, lesions, rows = [], [], []
    for lesion in (l.value for l in LesionType):
        n = int(spec.counts.get(lesion, 0))
        if n == 0:
            continue
        bands = np.broadcast_to(lesion_bands(lesion, spec.separation), (n, len(BASE_BANDS), 3)).copy()
        bands[:, :, 2] *= 1.0 + spec.amplitude_jitter * rng.standard_normal((n, len(BASE_BANDS)))
        base = spec.baseline + spec.baseline_slope * (wl - wl[0]) / 100.0
        clean = base + _bands(wl, bands)
        gain = 1.0 + spec.scatter_gain_sigma * rng.standard_normal((n, 1))
        offset = spec.scatter_offset_sigma * rng.standard_normal((n, 1))
        noisy = gain * clean + offset + spec.noise_sigma * rng.standard_normal((n, grid.count))
        rows.append(noisy)
        ids.extend(f"{lesion}-{i:04d}" for i in range(n))
        lesions.extend([lesion] * n)
    return Dataset(
        ids=ids,
        lesions=tuple(lesions),
        labels=[binary_label(l) for l in lesions],
        spectra=np.vstack(rows),
        synthetic=np.zeros(len(ids), dtype=bool),
        grid=grid,
    )
