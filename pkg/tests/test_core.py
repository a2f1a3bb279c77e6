import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nirsc.core import (
    DEFAULT_GRID,
    Dataset,
    DegenerateClass,
    EmptyDataset,
    GridMismatch,
    InvalidConfig,
    LeakageError,
    LesionType,
    NirscError,
    ZeroVariance,
    binary_label,
    check_random_state,
    class_counts,
    derive_seed,
    synthetic_records,
)

from conftest import make_dataset

LESIONS = [l.value for l in LesionType]


class TestLabels:
    @pytest.mark.parametrize("lesion,label", [("MEL", 1), ("ACK", 0), ("NEV", 0),
                                              ("BCC", 1), ("SCC", 1), ("SEK", 0)])
    def test_binary_label(self, lesion, label):
        assert binary_label(lesion) == label
        assert binary_label(LesionType(lesion)) == label

    def test_unknown_lesion_rejected(self):
        with pytest.raises(ValueError):
            binary_label("XYZ")


class TestGrid:
    def test_reference_grid(self):
        wl = DEFAULT_GRID.wavelengths
        assert len(wl) == 125
        assert wl[0] == 900.0
        np.testing.assert_allclose(wl[-1], 1693.6, atol=1e-9)
        for i in (0, 17, 124):
            np.testing.assert_allclose(DEFAULT_GRID.wavelength(i), 900.0 + 6.4 * i)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            DEFAULT_GRID.wavelength(125)

    def test_column_names_unique(self):
        names = DEFAULT_GRID.column_names()
        assert len(set(names)) == 125
        assert names[0] == "nm_0900.0" and names[-1] == "nm_1693.6"


class TestDataset:
    def test_validation(self):
        good = make_dataset(["ACK", "MEL"])
        with pytest.raises(GridMismatch):
            Dataset(good.ids, good.lesions, good.labels, good.spectra[:, :124], good.synthetic)
        with pytest.raises(InvalidConfig):
            Dataset(["a", "a"], good.lesions, good.labels, good.spectra, good.synthetic)
        with pytest.raises(InvalidConfig):
            Dataset(good.ids, good.lesions, [1, 1], good.spectra, good.synthetic)
        bad = good.spectra.copy()
        bad[0, 3] = np.nan
        with pytest.raises(InvalidConfig):
            Dataset(good.ids, good.lesions, good.labels, bad, good.synthetic)

    def test_only_synthetic_rows_may_omit_lesion(self):
        with pytest.raises(InvalidConfig):
            Dataset(["a"], (None,), [1], np.ones((1, 125)), [False])

    def test_read_only(self):
        d = make_dataset(["ACK", "MEL"])
        with pytest.raises(ValueError):
            d.spectra[0, 0] = 3.0

    def test_subset_concat(self):
        d = make_dataset(["ACK", "MEL", "BCC", "NEV"])
        a, b = d.subset([0, 1]), d.subset(np.array([False, False, True, True]))
        assert a.concat(b) == d

    def test_synthetic_records(self):
        syn = synthetic_records(np.ones((3, 125)), 1, "gan-")
        assert list(syn.ids) == ["gan-00000", "gan-00001", "gan-00002"]
        assert syn.synthetic.all() and set(syn.strata) == {"SYN"}


class TestClassCounts:
    def test_reference_counts(self, reference_data):
        c = class_counts(reference_data)
        assert c.lesions == {"ACK": 336, "SEK": 188, "NEV": 62, "BCC": 302, "SCC": 72, "MEL": 11}
        assert c.labels == {1: 385, 0: 586}
        assert c.total == 971

    def test_single(self):
        c = class_counts(make_dataset(["MEL"]))
        assert c.lesions == {"MEL": 1} and c.labels == {1: 1}

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            class_counts(Dataset.empty())

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(LESIONS), min_size=1, max_size=40))
    def test_label_counts_sum_lesion_counts(self, lesions):
        c = class_counts(make_dataset(lesions))
        cancer = sum(v for k, v in c.lesions.items() if LesionType(k).is_cancer)
        assert c.labels.get(1, 0) == cancer
        assert c.labels.get(0, 0) == len(lesions) - cancer


class TestSeeds:
    def test_explicit_seed_required(self):
        with pytest.raises(InvalidConfig):
            check_random_state(None)

    def test_derive_seed(self):
        assert derive_seed(3, 1) == derive_seed(3, 1)
        assert derive_seed(3, 1) != derive_seed(3, 2)
        assert derive_seed(3, 1) != derive_seed(4, 1)


class TestErrors:
    @pytest.mark.parametrize("cls", [EmptyDataset, GridMismatch, ZeroVariance, InvalidConfig,
                                     DegenerateClass, LeakageError])
    def test_taxonomy(self, cls):
        assert issubclass(cls, NirscError)
