import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nirsc.core import InvalidConfig, ZeroVariance
from nirsc.preprocess import SNV, snv, snv_dataset

from conftest import make_dataset


class TestSnv:
    def test_hand_example(self):
        # mean 2, sample std 1
        np.testing.assert_allclose(snv([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0], atol=1e-15)

    def test_constant(self):
        with pytest.raises(ZeroVariance):
            snv(np.full(125, 5.0))

    def test_too_short(self):
        with pytest.raises(InvalidConfig):
            snv([1.0])

    def test_idempotent(self):
        x = np.random.default_rng(0).normal(size=125)
        once = snv(x)
        np.testing.assert_allclose(snv(once), once, atol=1e-12)

    def test_moments(self):
        X = np.random.default_rng(1).normal(3.0, 2.0, size=(200, 125))
        Z = snv(X)
        np.testing.assert_allclose(Z.mean(axis=1), 0.0, atol=1e-9)
        np.testing.assert_allclose(Z.std(axis=1, ddof=1), 1.0, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, st.integers(3, 60), elements=st.floats(-100, 100)),
        st.floats(0.01, 100.0),
        st.floats(-1e3, 1e3),
    )
    def test_affine_invariance(self, x, a, b):
        if np.ptp(x) < 1e-3:
            return
        np.testing.assert_allclose(snv(a * x + b), snv(x), atol=1e-8)


class TestSnvDataset:
    def test_rows_independent(self):
        d = make_dataset(["ACK", "MEL"], seed=2)
        out = snv_dataset(d)
        for i in range(2):
            np.testing.assert_array_equal(out.spectra[i], snv(d.spectra[i]))

    def test_error_names_record(self):
        d = make_dataset(["ACK", "MEL", "NEV"])
        spectra = d.spectra.copy()
        spectra[1] = 0.7
        with pytest.raises(ZeroVariance, match="r0001"):
            snv_dataset(d.with_spectra(spectra))

    def test_fixed_point(self, small_dataset):
        once = snv_dataset(small_dataset)
        np.testing.assert_allclose(snv_dataset(once).spectra, once.spectra, atol=1e-12)

    def test_permutation_commutes(self, small_dataset):
        perm = np.random.default_rng(0).permutation(len(small_dataset))
        a = snv_dataset(small_dataset.subset(perm))
        b = snv_dataset(small_dataset).subset(perm)
        assert a == b

    def test_metadata_kept(self, small_dataset):
        out = snv_dataset(small_dataset)
        assert list(out.ids) == list(small_dataset.ids)
        np.testing.assert_array_equal(out.labels, small_dataset.labels)


class TestTransformer:
    def test_sklearn_api(self):
        X = np.random.default_rng(0).normal(size=(5, 20))
        t = SNV()
        np.testing.assert_array_equal(t.fit_transform(X), snv(X))
        assert t.get_params() == {"variance_epsilon": 1e-12}
