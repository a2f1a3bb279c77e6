import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nirsc.augment import (
    MLP,
    EllipseFilter,
    FilterConfig,
    GanConfig,
    SMOTESampler,
    SmoteConfig,
    SpectrumGenerator,
    balance_with_gan,
    balance_with_smote,
    chi2_quantile,
    filter_generated,
    fit_ellipse,
    generate_filtered,
    smote,
    smote_resample,
    smote_samples,
    train_gan,
)
from nirsc.augment.gan import discriminator_loss, generator_loss, sigmoid, softplus
from nirsc.core import (
    ConvergenceFailure,
    DegenerateClass,
    InvalidConfig,
    ZeroVariance,
    class_counts,
)

from conftest import make_dataset


def finite_difference(f, theta, eps=1e-6):
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += eps
        down[i] -= eps
        grad[i] = (f(up) - f(down)) / (2 * eps)
    return grad


def rel_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


class TestSmote:
    def test_convex_combinations(self):
        X = np.random.default_rng(0).normal(size=(30, 8))
        s = smote_samples(X, 200, SmoteConfig(k_neighbors=5, seed=1))
        resid = (s.samples - X[s.base]) - s.gap[:, None] * (X[s.neighbor] - X[s.base])
        assert np.abs(resid).max() < 1e-9
        assert np.all((0 <= s.gap) & (s.gap <= 1))

    def test_neighbour_is_among_k_nearest(self):
        X = np.random.default_rng(1).normal(size=(25, 3))
        s = smote_samples(X, 100, SmoteConfig(k_neighbors=3, seed=0))
        d = np.linalg.norm(X[:, None] - X[None], axis=2)
        np.fill_diagonal(d, np.inf)
        for b, n in zip(s.base, s.neighbor):
            assert d[b, n] <= np.sort(d[b])[2] + 1e-12

    def test_gap_zero_returns_base(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        s = smote_samples(X, 20, SmoteConfig(k_neighbors=2, gap_range=(0.0, 0.0)))
        np.testing.assert_array_equal(s.samples, X[s.base])

    def test_two_points_collinear(self):
        a, b = np.array([0.0, 1.0, 2.0]), np.array([3.0, -1.0, 5.0])
        out = smote(np.vstack([a, b]), 50, SmoteConfig(k_neighbors=1))
        t = (out - a) @ (b - a) / ((b - a) @ (b - a))
        np.testing.assert_allclose(out, a + t[:, None] * (b - a), atol=1e-12)
        assert np.all((t >= 0) & (t <= 1))

    def test_k_too_large(self):
        with pytest.raises(InvalidConfig):
            smote(np.zeros((5, 2)), 3, SmoteConfig(k_neighbors=5))

    def test_count_and_determinism(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        a = smote(X, 7, SmoteConfig(seed=3))
        assert a.shape == (7, 4)
        np.testing.assert_array_equal(a, smote(X, 7, SmoteConfig(seed=3)))
        assert smote(X, 0).shape == (0, 4)

    def test_per_attribute_gap(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        s = smote_samples(X, 30, SmoteConfig(per_attribute_gap=True))
        assert s.gap.shape == (30, 4)
        resid = (s.samples - X[s.base]) - s.gap * (X[s.neighbor] - X[s.base])
        assert np.abs(resid).max() < 1e-12

    def test_reference_balance(self, reference_data):
        out = balance_with_smote(reference_data)
        assert class_counts(out).labels == {1: 586, 0: 586}
        assert out.synthetic.sum() == 201
        assert out.originals() == reference_data
        assert all(i.startswith("smote-") for i in out.ids[out.synthetic])

    def test_balanced_unchanged(self):
        d = make_dataset(["ACK"] * 6 + ["MEL"] * 6)
        assert balance_with_smote(d) == d

    def test_small_minority(self):
        d = make_dataset(["ACK"] * 10 + ["MEL"] * 5)
        with pytest.raises(InvalidConfig):
            balance_with_smote(d, config=SmoteConfig(k_neighbors=5))

    def test_single_class(self):
        with pytest.raises(DegenerateClass):
            balance_with_smote(make_dataset(["ACK"] * 4))

    def test_snv_space(self, small_dataset):
        out = balance_with_smote(small_dataset, space="snv")
        np.testing.assert_allclose(out.spectra.mean(axis=1), 0, atol=1e-12)

    def test_resample_matrix(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        y = np.array([0] * 14 + [1] * 6)
        X2, y2, mask = smote_resample(X, y)
        assert np.bincount(y2).tolist() == [14, 14] and mask.sum() == 8
        np.testing.assert_array_equal(X2[:20], X)

    def test_sampler_api(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        y = np.array([0] * 14 + [1] * 6)
        X2, y2 = SMOTESampler(k_neighbors=3, random_state=0).fit_resample(X, y)
        assert np.bincount(y2).tolist() == [14, 14]


class TestEllipse:
    def test_chi2_closed_form(self):
        assert abs(chi2_quantile(0.95) - (-2 * math.log(0.05))) < 1e-12
        # bisection on the 2-dof CDF as an independent check
        lo, hi = 0.0, 100.0
        for _ in range(200):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if 1 - math.exp(-mid / 2) < 0.95 else (lo, mid)
        assert abs(chi2_quantile(0.95) - lo) < 1e-9
        np.testing.assert_allclose(chi2_quantile(0.95), 5.991464547, atol=1e-9)

    def test_chi2_other_dof(self):
        np.testing.assert_allclose(chi2_quantile(0.95, 3), 7.814727903, atol=1e-8)

    def test_retention(self):
        X = np.random.default_rng(0).standard_normal((10_000, 2))
        keep = fit_ellipse(X).contains(X).mean()
        assert 0.93 <= keep <= 0.97

    def test_center_inside_outlier_removed(self):
        X = np.random.default_rng(1).normal(size=(200, 6))
        e = fit_ellipse(X)
        assert e.contains(X.mean(axis=0, keepdims=True))[0]
        far = X.mean(axis=0) + 10 * math.sqrt(e.threshold_) * np.sqrt(e.explained_variance_[0]) * e.components_[0]
        batch = np.vstack([X[:5], far])
        inside = e.contains(X[:5])
        kept = filter_generated(batch, e)
        assert len(kept) == inside.sum()
        assert not np.any(np.all(kept == far, axis=1))

    def test_copy_of_retained_sample(self):
        X = np.random.default_rng(2).normal(size=(100, 5))
        e = fit_ellipse(X)
        i = int(np.flatnonzero(e.contains(X))[0])
        assert len(filter_generated(X[i : i + 1].copy(), e)) == 1

    def test_empty(self):
        e = fit_ellipse(np.random.default_rng(0).normal(size=(10, 3)))
        assert filter_generated(np.empty((0, 3)), e).shape == (0, 3)

    def test_scale_consistent(self):
        X = np.random.default_rng(3).normal(size=(80, 5))
        Y = np.random.default_rng(4).normal(size=(300, 5)) * 1.5
        a = fit_ellipse(X).contains(Y)
        b = fit_ellipse(7.0 * X).contains(7.0 * Y)
        np.testing.assert_array_equal(a, b)

    def test_singular(self):
        X = np.zeros((10, 4))
        X[:, 0] = np.arange(10)
        with pytest.raises(ZeroVariance):
            fit_ellipse(X)

    def test_too_few(self):
        with pytest.raises(InvalidConfig):
            fit_ellipse(np.eye(2))

    def test_psd_and_predict(self):
        X = np.random.default_rng(0).normal(size=(50, 4))
        e = EllipseFilter().fit(X)
        np.testing.assert_allclose(e.covariance_, e.covariance_.T)
        assert np.linalg.eigvalsh(e.covariance_).min() > 0
        assert set(np.unique(e.predict(X))) <= {-1, 1}


class TestMlpGradients:
    def test_micro_discriminator(self):
        rng = np.random.default_rng(0)
        D = MLP([2, 1, 1], rng=1)
        assert D.n_params == 5
        D.biases[0][:] = 0.3  # keep the hidden unit active
        real, fake = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
        _, gw, gb = discriminator_loss(D, real, fake)
        theta = D.get_flat()

        def loss(t):
            D.set_flat(t)
            return discriminator_loss(D, real, fake)[0]

        num = finite_difference(loss, theta)
        D.set_flat(theta)
        assert rel_error(MLP.flatten(gw, gb), num) < 1e-4

    def test_generator_path(self):
        rng = np.random.default_rng(2)
        G = MLP([3, 4, 5], rng=3)
        D = MLP([5, 4, 1], rng=4)
        z = rng.normal(size=(8, 3))
        _, gw, gb = generator_loss(G, D, z)
        theta = G.get_flat()

        def loss(t):
            G.set_flat(t)
            return generator_loss(G, D, z)[0]

        num = finite_difference(loss, theta)
        G.set_flat(theta)
        assert rel_error(MLP.flatten(gw, gb), num) < 1e-4

    def test_loss_matches_definition(self):
        rng = np.random.default_rng(0)
        D = MLP([4, 3, 1], rng=0)
        real, fake = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        pr, pf = sigmoid(D(real)), sigmoid(D(fake))
        want = -(np.log(pr).mean() + np.log(1 - pf).mean())
        np.testing.assert_allclose(discriminator_loss(D, real, fake)[0], want, rtol=1e-12)

    def test_stable_helpers(self):
        np.testing.assert_allclose(softplus([-800.0, 0.0, 800.0]), [0.0, math.log(2), 800.0])
        assert np.all((sigmoid([-30.0, 30.0]) > 0) & (sigmoid([-30.0, 30.0]) < 1))

    def test_round_trip(self):
        G = MLP([3, 4, 5], rng=0)
        back = MLP.from_dict(G.to_dict())
        np.testing.assert_array_equal(back.get_flat(), G.get_flat())

    def test_bad_sizes(self):
        with pytest.raises(InvalidConfig):
            MLP([3, 0, 2], rng=0)


def two_peak(n=500, sigma=0.05, seed=0):
    x = np.arange(125)
    template = np.exp(-0.5 * ((x - 40) / 8) ** 2) + 0.6 * np.exp(-0.5 * ((x - 90) / 12) ** 2)
    rng = np.random.default_rng(seed)
    return template, template + sigma * rng.standard_normal((n, 125))


@pytest.fixture(scope="module")
def trained():
    template, X = two_peak()
    return template, train_gan(X, GanConfig(epochs=300, seed=1))


class TestGan:
    def test_output_shape_and_log(self, trained):
        _, res = trained
        g = res.generator.sample(10, 0)
        assert g.shape == (10, 125) and np.all(np.isfinite(g))
        assert len(res.log) == 300
        assert all(np.isfinite([r.d_loss, r.g_loss]).all() for r in res.log)
        assert all(r.g_loss <= 0 for r in res.log)  # E log(1 - D) is never positive

    def test_discriminator_range(self, trained):
        _, res = trained
        p = sigmoid(res.discriminator(np.random.default_rng(0).normal(size=(50, 125))))
        assert np.all((p > 0) & (p < 1))

    def test_toy_mean(self, trained):
        template, res = trained
        g = res.generator.sample(5000, 3)
        assert np.mean(np.abs(g.mean(axis=0) - template) < 3 * 0.05) >= 0.9

    def test_deterministic(self):
        _, X = two_peak(100)
        a = train_gan(X, GanConfig(epochs=3, seed=5)).generator.sample(4, 0)
        b = train_gan(X, GanConfig(epochs=3, seed=5)).generator.sample(4, 0)
        np.testing.assert_array_equal(a, b)

    def test_too_few_rows(self):
        _, X = two_peak(40)
        with pytest.raises(InvalidConfig):
            train_gan(X, GanConfig(epochs=1))

    def test_wrong_width(self):
        with pytest.raises(InvalidConfig):
            train_gan(np.zeros((100, 10)), GanConfig(epochs=1))

    def test_generator_json(self, tmp_path, trained):
        _, res = trained
        res.generator.save(tmp_path / "g.json")
        back = SpectrumGenerator.load(tmp_path / "g.json")
        np.testing.assert_array_equal(back.sample(3, 9), res.generator.sample(3, 9))

    def test_log_csv(self, tmp_path, trained):
        _, res = trained
        res.write_log(tmp_path / "log.csv")
        lines = (tmp_path / "log.csv").read_text().splitlines()
        assert lines[0] == "epoch,d_loss,g_loss" and len(lines) == 301


class TestBalanceWithGan:
    def test_reference_balance(self, reference_data):
        out = balance_with_gan(reference_data, GanConfig(epochs=30, seed=0))
        assert class_counts(out).labels == {1: 586, 0: 586}
        assert out.synthetic.sum() == 201
        assert out.originals() == reference_data
        assert all(i.startswith("gan-") for i in out.ids[out.synthetic])

    def test_balanced_unchanged(self):
        d = make_dataset(["ACK"] * 6 + ["MEL"] * 6)
        assert balance_with_gan(d, GanConfig(epochs=1)) == d

    def test_degenerate_generator(self, reference_data):
        # a constant generator far from the real minority: every candidate is rejected
        net = MLP([2, 125], weights=[np.zeros((2, 125))], biases=[np.zeros(125)])
        offset = np.linspace(0.0, 1.0, 125) ** 8 * 50
        gen = SpectrumGenerator(net, 2, offset, np.ones(125))
        with pytest.raises(ConvergenceFailure):
            balance_with_gan(reference_data, GanConfig(epochs=1), FilterConfig(max_rounds=3), generator=gen)

    def test_generate_filtered_exact_count(self):
        _, X = two_peak(200)
        res = train_gan(X, GanConfig(epochs=20, seed=0))
        from nirsc.preprocess import snv

        e = fit_ellipse(snv(X))
        out = generate_filtered(res.generator, e, 37, seed=1)
        assert out.shape == (37, 125)
        assert e.contains(snv(out)).all()
