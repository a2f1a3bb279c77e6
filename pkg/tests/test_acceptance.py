"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible even under output
capture) before asserting. Criteria 10 and 11 run the full synthetic
end-to-end experiment twice and take several minutes.
"""
import json
import math
import time

import numpy as np
import pytest

from nirsc import evaluation
from nirsc.augment import (
    MLP,
    GanConfig,
    SmoteConfig,
    balance_with_smote,
    chi2_quantile,
    fit_ellipse,
    smote_samples,
    train_gan,
)
from nirsc.augment.gan import discriminator_loss
from nirsc.augment.smote import nearest_neighbors
from nirsc.core import ZeroVariance, class_counts
from nirsc.evaluation import ConfusionCounts, evaluate_test, metrics
from nirsc.explain import shapley_attributions
from nirsc.features import FEATURE_KINDS, WindowSpec, extract_features, plan_windows
from nirsc.ingest import SplitSpec, make_folds, stratified_split
from nirsc.models import GbdtConfig, gbdt_fit
from nirsc.models._splitter import leaf_weight
from nirsc.pipeline import PipelineSpec
from nirsc.preprocess import snv
from nirsc.synth import SynthSpec, generate
from nirsc.tune import tune_pipeline

from conftest import make_dataset
from oracles import brute_features
from test_augment import finite_difference, rel_error, two_peak
from test_models import check_stump

LEAKAGE = {"runs": 0, "folds": 0, "violations": 0}


@pytest.fixture(scope="module", autouse=True)
def leakage_recorder():
    """Count augmentation-visible/validation id intersections in every CV run of this module."""
    original = evaluation.run_cv

    def recording(*args, **kwargs):
        report = original(*args, **kwargs)
        LEAKAGE["runs"] += 1
        LEAKAGE["folds"] += len(report.folds)
        LEAKAGE["violations"] += report.leakage_violations
        return report

    evaluation.run_cv = recording
    yield
    evaluation.run_cv = original


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_criterion_01_snv(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    X = rng.normal(rng.uniform(-5, 5, (1000, 1)), rng.uniform(0.1, 3, (1000, 1)), size=(1000, 125))
    Z = snv(X)
    moments = max(np.abs(Z.mean(axis=1)).max(), np.abs(Z.std(axis=1, ddof=1) - 1).max())
    a, b = rng.uniform(0.1, 10, (1000, 1)), rng.uniform(-10, 10, (1000, 1))
    affine = np.abs(snv(a * X + b) - Z).max()
    try:
        snv(np.full(125, 0.7))
        raised = False
    except ZeroVariance:
        raised = True
    elapsed = time.perf_counter() - start
    ok = moments < 1e-9 and affine < 1e-9 and raised and elapsed < 1.0
    verdict(1, ok, f"moment error {moments:.1e}, affine error {affine:.1e}, "
                   f"constant raises {raised}, {elapsed:.2f} s")


def test_criterion_02_feature_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    specs = [WindowSpec(5, 0.0), WindowSpec(50, 0.0)]
    while len(specs) < 100:
        n = int(rng.integers(1, 51))
        o = float(rng.choice([0.0, rng.uniform(0, 0.6)]))
        k = int(rng.integers(1, len(FEATURE_KINDS) + 1))
        chosen = set(rng.choice(FEATURE_KINDS, size=k, replace=False).tolist())
        mask = tuple(kind for kind in FEATURE_KINDS if kind in chosen)
        spec = WindowSpec(n, o, mask)
        try:
            plan_windows(125, spec)
        except Exception:
            continue
        specs.append(spec)
    assert [e - s for s, e in ((st, st + ln) for st, ln in plan_windows(125, specs[0]))] == [25] * 5
    worst = 0.0
    for i, spec in enumerate(specs):
        d = make_dataset(list(rng.choice(["ACK", "BCC", "MEL"], size=int(rng.integers(1, 5)))), seed=i)
        got = extract_features(d, spec).values
        want = np.array(brute_features(d.spectra.tolist(), spec.window_count, spec.overlap_fraction,
                                       spec.feature_mask))
        scale = np.maximum(1.0, np.abs(want))
        worst = max(worst, float(np.max(np.abs(got - want) / scale)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30
    verdict(2, ok, f"100 specs, worst relative deviation {worst:.1e}, {elapsed:.1f} s")


def test_criterion_03_smote(verdict, reference_data):
    start = time.perf_counter()
    out = balance_with_smote(reference_data)
    counts_before = class_counts(reference_data).labels
    counts_after = class_counts(out).labels
    minority = reference_data.spectra[reference_data.labels == 1]
    prov = smote_samples(minority, int(out.synthetic.sum()), SmoteConfig())
    same_rows = np.array_equal(prov.samples, out.spectra[out.synthetic])
    resid = (prov.samples - minority[prov.base]) - prov.gap[:, None] * (minority[prov.neighbor] - minority[prov.base])
    nn = nearest_neighbors(minority, 5)
    in_knn = all(prov.neighbor[i] in nn[prov.base[i]] for i in range(len(prov.base)))
    gaps_ok = bool(np.all((prov.gap >= 0) & (prov.gap <= 1)))
    elapsed = time.perf_counter() - start
    ok = (same_rows and np.abs(resid).max() < 1e-9 and in_knn and gaps_ok
          and counts_before == {0: 586, 1: 385} and counts_after == {0: 586, 1: 586} and elapsed < 10)
    verdict(3, ok, f"{counts_before[0]}/{counts_before[1]} -> {counts_after[0]}/{counts_after[1]}, "
                   f"max residual {np.abs(resid).max():.1e}, {elapsed:.2f} s")


def test_criterion_04_ellipse(verdict):
    start = time.perf_counter()
    X = np.random.default_rng(404).standard_normal((10_000, 2))
    retention = float(fit_ellipse(X).contains(X).mean())
    threshold_err = abs(chi2_quantile(0.95) - (-2 * math.log(0.05)))
    cdf_err = abs((1 - math.exp(-chi2_quantile(0.95) / 2)) - 0.95)
    elapsed = time.perf_counter() - start
    ok = 0.93 <= retention <= 0.97 and threshold_err < 1e-9 and cdf_err < 1e-9 and elapsed < 5
    verdict(4, ok, f"retention {retention:.4f}, threshold error {threshold_err:.1e}, {elapsed:.2f} s")


def test_criterion_05_gan(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    D = MLP([2, 1, 1], rng=1)
    D.biases[0][:] = 0.3
    real, fake = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    _, gw, gb = discriminator_loss(D, real, fake)
    theta = D.get_flat()

    def loss(t):
        D.set_flat(t)
        return discriminator_loss(D, real, fake)[0]

    grad_err = rel_error(MLP.flatten(gw, gb), finite_difference(loss, theta))
    template, X = two_peak()
    res = train_gan(X, GanConfig(epochs=300, seed=1))
    g = res.generator.sample(5000, 3)
    frac = float(np.mean(np.abs(g.mean(axis=0) - template) < 3 * 0.05))
    elapsed = time.perf_counter() - start
    ok = grad_err < 1e-4 and frac >= 0.9 and elapsed < 180
    verdict(5, ok, f"gradient relative error {grad_err:.1e}, channels within 3 sigma {frac:.1%}, {elapsed:.1f} s")


def test_criterion_06_gbdt(verdict):
    start = time.perf_counter()
    failures = 0
    for seed in range(200):
        try:
            check_stump(seed)
        except AssertionError:
            failures += 1
    rng = np.random.default_rng(606)
    worst_increase = -np.inf
    for _ in range(5):
        X = rng.normal(size=(150, 8))
        y = (X[:, 0] + X[:, 1] ** 2 + 0.5 * rng.normal(size=150) > 0.8).astype(int)
        loss = np.array(gbdt_fit(X, y, GbdtConfig(n_trees=40, max_depth=4, learning_rate=0.5,
                                                  class_weight=2.0)).train_loss)
        worst_increase = max(worst_increase, float(np.diff(loss).max()))
    hand = [leaf_weight(2.0, 4.0, 1.0, 0.0), leaf_weight(-3.0, 2.0, 0.5, 0.0)]
    hand_ok = abs(hand[0] + 0.4) < 1e-15 and abs(hand[1] - 1.2) < 1e-15
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worst_increase <= 1e-12 and hand_ok and elapsed < 60
    verdict(6, ok, f"stump mismatches {failures}/200, largest loss increase {worst_increase:.1e}, "
                   f"hand leaf weights {hand}, {elapsed:.1f} s")


def test_criterion_07_metrics(verdict):
    start = time.perf_counter()
    m = metrics(ConfusionCounts(tp=3, tn=4, fp=2, fn=1))
    hand = (m.acc == 0.7 and m.recall == 0.75 and m.precision == 0.6
            and abs(m.bacc - (0.75 + 4 / 6) / 2) < 1e-15 and abs(m.f_score - 2 / 3) < 1e-15)
    rng = np.random.default_rng(707)
    bad = 0
    for _ in range(1000):
        c = rng.integers(0, 100, size=4)
        if c.sum() == 0:
            c[0] = 1
        k = int(rng.integers(2, 10))
        a = metrics(ConfusionCounts(*map(int, c))).as_dict()
        b = metrics(ConfusionCounts(*map(int, k * c))).as_dict()
        bad += any(abs(a[key] - b[key]) > 1e-12 for key in a)
        n, tp, tn = int(rng.integers(1, 100)), 0, 0
        tp, tn = int(rng.integers(0, n + 1)), int(rng.integers(0, n + 1))
        bal = metrics(ConfusionCounts(tp=tp, tn=tn, fp=n - tn, fn=n - tp))
        bad += abs(bal.bacc - bal.acc) > 1e-12
    elapsed = time.perf_counter() - start
    ok = hand and bad == 0 and elapsed < 1
    verdict(7, ok, f"hand example exact {hand}, property violations {bad}/2000, {elapsed:.2f} s")


def test_criterion_08_shapley(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(808)
    residual = 0.0
    dummy = 0.0
    for p in range(2, 7):
        W = rng.normal(size=(p, p))
        f = lambda Z, W=W: np.tanh(Z @ W).sum(axis=1) + 0.0 * Z[:, -1]  # noqa: E731
        g = lambda Z, W=W: np.tanh(Z[:, :-1] @ W[:-1]).sum(axis=1)  # noqa: E731
        B, S = rng.normal(size=(4, p)), rng.normal(size=(3, p))
        residual = max(residual, float(np.abs(shapley_attributions(f, B, S, exact=True).efficiency_residual).max()))
        dummy = max(dummy, float(np.abs(shapley_attributions(g, B, S, exact=True).values[:, -1]).max()))
    a = rng.normal(size=10)
    B, S = rng.normal(size=(300, 10)), rng.normal(size=(5, 10))
    K = 500
    est = shapley_attributions(lambda Z: Z @ a, B, S, n_permutations=K, seed=1)
    se = np.abs(a) * B.std(axis=0, ddof=1) / np.sqrt(K)
    within = bool(np.all(np.abs(est.values - a * (S - B.mean(axis=0))) <= 3 * se + 1e-12))
    elapsed = time.perf_counter() - start
    ok = residual < 1e-12 and dummy == 0.0 and within and elapsed < 60
    verdict(8, ok, f"max efficiency residual {residual:.1e} (float rounding), dummy max {dummy}, "
                   f"additive within 3 SE {within}, {elapsed:.2f} s")


# ---------------------------------------------------------------- end to end


def run_experiment():
    """Tune and test arms III-c and I-a; returns (serialised report, summary, seconds)."""
    start = time.perf_counter()
    data = generate(SynthSpec())
    train, test = stratified_split(data, SplitSpec(0.2, 0))
    plan = make_folds(train, 5, 0)
    report, summary = {}, {}
    for arm in ("III-c", "I-a"):
        best, result = tune_pipeline(train, plan, PipelineSpec.from_arm(arm), budget=50, seed=0)
        res = evaluate_test(train, test, best)
        report[arm] = {
            "best": json.loads(result.best_json()),
            "history": result.history_csv(),
            "test": {"counts": res.counts.__dict__, "metrics": res.metrics.as_dict()},
        }
        summary[arm] = (result.best.objective, res.metrics.bacc)
    text = json.dumps(report, indent=2, sort_keys=True)
    return text, summary, time.perf_counter() - start


@pytest.fixture(scope="module")
def first_run():
    return run_experiment()


def test_criterion_10_end_to_end(verdict, first_run):
    _, summary, elapsed = first_run
    (cv_c, test_c), (cv_a, test_a) = summary["III-c"], summary["I-a"]
    ok = test_c >= 0.90 and test_c >= test_a and elapsed < 600
    verdict(10, ok, f"III-c test BACC {test_c:.3f} (CV {cv_c:.3f}), I-a test BACC {test_a:.3f} "
                    f"(CV {cv_a:.3f}), {elapsed:.0f} s")


def test_criterion_11_determinism(verdict, first_run):
    second, _, _ = run_experiment()
    ok = second.encode() == first_run[0].encode()
    verdict(11, ok, f"repeat report byte-identical {ok} ({len(second)} bytes)")


def test_criterion_09_leakage(verdict, first_run):
    # GAN and SMOTE arms on the reference training split, plus every CV run above
    data = generate(SynthSpec())
    train, _ = stratified_split(data, SplitSpec(0.2, 0))
    plan = make_folds(train, 5, 0)
    for arm in ("II-c", "III-b"):
        evaluation.run_cv(train, plan, PipelineSpec.from_arm(arm, params={"n_trees": 5},
                                                             gan=GanConfig(epochs=50)))
    ok = LEAKAGE["violations"] == 0 and LEAKAGE["runs"] >= 100
    verdict(9, ok, f"{LEAKAGE['violations']} violations over {LEAKAGE['runs']} CV runs "
                   f"({LEAKAGE['folds']} folds)")
