import numpy as np
import pytest

from nirsc.core import DEFAULT_GRID, Dataset, binary_label
from nirsc.synth import SynthSpec, generate


def make_dataset(lesions, seed=0, prefix="r"):
    """Random-spectra dataset with the given lesion sequence."""
    rng = np.random.default_rng(seed)
    n = len(lesions)
    return Dataset(
        ids=[f"{prefix}{i:04d}" for i in range(n)],
        lesions=tuple(lesions),
        labels=[binary_label(l) for l in lesions],
        spectra=rng.normal(1.0, 0.2, size=(n, DEFAULT_GRID.count)),
        synthetic=np.zeros(n, dtype=bool),
    )


@pytest.fixture(scope="session")
def reference_data():
    return generate(SynthSpec())


@pytest.fixture
def small_dataset():
    lesions = ["ACK"] * 12 + ["NEV"] * 8 + ["BCC"] * 10 + ["MEL"] * 6
    return make_dataset(lesions, seed=3)
