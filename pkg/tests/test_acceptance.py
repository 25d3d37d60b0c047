"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one ``[criterion N] ... PASS|FAIL`` line (visible with
``pytest -s`` or in the captured output summary).
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest
from click.testing import CliRunner

from trendeq import gpr
from trendeq.classify import knn_predict, knn_train, svm_decision, svm_train
from trendeq.evaluation import (
    ConfusionCounts,
    expert_agreement,
    f_score,
    run_matrix,
)
from trendeq.features import FeatureBuilder, Variant
from trendeq.gpr import GprModel, Hyperparams, predict
from trendeq.synth import CohortConfig, generate_cohort, separable_cohort_config
from trendeq.timeseries import BinaryLabel, LabelSet, TrendAnnotation

from conftest import random_model
from test_classify import brute_force_knn, solve_dual_slsqp, toy_data

S, U = BinaryLabel.STABLE, BinaryLabel.UNSTABLE


def _report(n, name, ok):
    print(f"[criterion {n}] {name}: {'PASS' if ok else 'FAIL'}")


@dataclass
class MatrixRun:
    result: object
    builder: FeatureBuilder
    elapsed: float
    cohort: list
    labels: dict


@pytest.fixture(scope="module")
def default_run():
    cohort, labels = generate_cohort(CohortConfig())
    builder = FeatureBuilder(cohort)
    t0 = time.perf_counter()
    result = run_matrix(cohort, labels, seed=0, builder=builder)
    return MatrixRun(result, builder, time.perf_counter() - t0, cohort, labels)


@pytest.fixture(scope="module")
def separable_run():
    cohort, labels = generate_cohort(separable_cohort_config())
    builder = FeatureBuilder(cohort)
    t0 = time.perf_counter()
    result = run_matrix(cohort, labels, seed=0, builder=builder)
    return MatrixRun(result, builder, time.perf_counter() - t0, cohort, labels)


def mean_f(run, variant, classifier):
    for r in run.result.reports:
        if r.variant is variant and r.classifier == classifier:
            return r.mean_f
    raise KeyError((variant, classifier))


def test_criterion_1_gp_oracle_equivalence():
    ok = False
    try:
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        for _ in range(200):
            model = random_model(rng)
            x_star = float(rng.uniform(20.0, 100.0))
            post = predict(model, x_star)
            hp = model.hp
            x = model.train_x
            k = hp.signal_variance * np.exp(
                -((x[:, None] - x[None, :]) ** 2) / (2 * hp.length_scale ** 2))
            a = k + (hp.noise_variance
                     + model.jitter_scale * hp.signal_variance) * np.eye(len(x))
            a_inv = np.linalg.inv(a)
            k_star = hp.signal_variance * np.exp(
                -((x_star - x) ** 2) / (2 * hp.length_scale ** 2))
            mean = model.prior_mean + k_star @ a_inv @ (model.train_y - model.prior_mean)
            var = max(float(hp.signal_variance - k_star @ a_inv @ k_star), 0.0)
            assert abs(post.mean - mean) <= 1e-8 * max(abs(mean), 1e-12)
            assert abs(post.variance - var) <= 1e-8 * max(abs(var), 1e-12)
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"took {elapsed:.1f}s"
        ok = True
    finally:
        _report(1, "GP posterior matches direct-inversion oracle (200 series)", ok)


def test_criterion_2_gradient_check():
    ok = False
    try:
        rng = np.random.default_rng(202)
        h = 1e-5
        t0 = time.perf_counter()
        for _ in range(100):
            n = int(rng.integers(2, 12))
            x = np.sort(rng.uniform(30, 90, n))
            if np.any(np.diff(x) == 0):
                continue
            y = rng.uniform(30, 100, n)
            prior = float(np.mean(y))
            z = rng.normal([np.log(5), np.log(50), np.log(5)], 0.7)
            hp = Hyperparams.from_log_vector(z)
            _, grad = gpr.log_marginal_likelihood_grad(hp, x, y, prior)
            fd = np.zeros(3)
            for i in range(3):
                zp, zm = z.copy(), z.copy()
                zp[i] += h
                zm[i] -= h
                fd[i] = (gpr.log_marginal_likelihood(
                            Hyperparams.from_log_vector(zp), x, y, prior)
                         - gpr.log_marginal_likelihood(
                            Hyperparams.from_log_vector(zm), x, y, prior)) / (2 * h)
            rel = np.abs(grad - fd) / np.maximum.reduce(
                [np.abs(grad), np.abs(fd), np.full(3, 1e-6)])
            assert rel.max() < 1e-4
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"took {elapsed:.1f}s"
        ok = True
    finally:
        _report(2, "analytic LML gradient matches finite differences (100 points)", ok)


def test_criterion_3_posterior_sanity(default_run):
    ok = False
    try:
        checked_subset = 0
        for series in default_run.cohort:
            pid = series.id
            fixed = default_run.builder.resampled(pid, gpr.Regime.FIXED_30_90)
            in_range = default_run.builder.resampled(pid, gpr.Regime.IN_RANGE)
            sf2 = default_run.builder.model(pid).hp.signal_variance
            assert np.all(fixed.variances <= sf2 + 1e-9)
            assert np.all(in_range.variances <= sf2 + 1e-9)
            lo, hi = min(series.ages), max(series.ages)
            if lo >= 30.0 and hi <= 90.0 and (lo > 30.0 or hi < 90.0):
                checked_subset += 1
                assert in_range.variances.mean() < fixed.variances.mean()
        assert checked_subset > 0
        ok = True
    finally:
        _report(3, "posterior variance bounded by prior; in-range grids have "
                   "lower mean variance", ok)


def test_criterion_4_classifier_oracles():
    ok = False
    try:
        rng = np.random.default_rng(404)
        x, _, labels = toy_data(rng, 30, dim=3)
        model = knn_train(list(zip(x, labels)), k=3, scale=False)
        for _ in range(500):
            q = rng.normal(size=3)
            assert knn_predict(model, q) is brute_force_knn(x, labels, q, 3)

        sigma, c = 1.5, 1.0
        for _ in range(6):
            n = int(rng.integers(6, 13))
            xs, ys, ls = toy_data(rng, n)
            _, obj_ref, k = solve_dual_slsqp(xs, ys, sigma, c)
            svm = svm_train(list(zip(xs, ls)), sigma=sigma, c=c, scale=False)
            alpha = np.zeros(n)
            sv_rows = {tuple(v): i for i, v in enumerate(svm.support_vectors)}
            for i in range(n):
                j = sv_rows.get(tuple(xs[i]))
                if j is not None:
                    alpha[i] = abs(svm.dual_coeffs[j])
            q = (ys[:, None] * ys[None, :]) * k
            obj = float(0.5 * alpha @ q @ alpha - alpha.sum())
            assert abs(obj - obj_ref) <= 1e-3
            for xi, yi in zip(xs, ys):
                f = svm_decision(svm, xi)
                j = sv_rows.get(tuple(xi))
                a = abs(svm.dual_coeffs[j]) if j is not None else 0.0
                if a < 1e-9:
                    assert yi * f >= 1.0 - 1e-3
                elif a > c - 1e-9:
                    assert yi * f <= 1.0 + 1e-3
                else:
                    assert abs(yi * f - 1.0) <= 1e-3
        ok = True
    finally:
        _report(4, "K-NN matches brute force (500 queries); SVM dual within 1e-3 "
                   "of reference with KKT at 1e-3", ok)


def test_criterion_5_metric_identities():
    ok = False
    try:
        assert f_score(ConfusionCounts(2, 0, 0, 0)) == (1.0, 1.0, 1.0)
        p, r, f = f_score(ConfusionCounts(1, 1, 0, 0))
        assert (p, r) == (0.5, 1.0) and f == pytest.approx(2.0 / 3.0)
        labels = {f"p{i}": LabelSet(f"p{i}", (TrendAnnotation.STABLE,) * 5)
                  for i in range(10)}
        report = expert_agreement(labels)
        assert report.f_scores == (1.0,) * 5
        assert report.mean_f == 1.0
        ok = True
    finally:
        _report(5, "metric identities and unanimous expert agreement", ok)


def test_criterion_6_rank_order(default_run):
    ok = False
    try:
        knn = {v: mean_f(default_run, v, "knn")
               for v in (Variant.STATS_PLUS_GPR, Variant.GPR_IN_RANGE,
                         Variant.STATS4, Variant.GPR_30_90)}
        assert knn[Variant.STATS_PLUS_GPR] >= knn[Variant.GPR_IN_RANGE]
        assert knn[Variant.GPR_IN_RANGE] > knn[Variant.STATS4]
        assert knn[Variant.STATS4] > knn[Variant.GPR_30_90]
        for clf in ("knn", "svm"):
            gap = (mean_f(default_run, Variant.GPR_IN_RANGE, clf)
                   - mean_f(default_run, Variant.GPR_30_90, clf))
            assert gap >= 0.10, f"{clf} gap {gap:.4f}"
        assert default_run.elapsed < 600.0, f"matrix took {default_run.elapsed:.0f}s"
        ok = True
    finally:
        _report(6, "rank order on the default cohort with a >=0.10 in-range "
                   "margin over the fixed grid", ok)


def test_criterion_7_absolute_sanity_band(default_run, separable_run):
    ok = False
    try:
        for variant in Variant:
            if variant is Variant.GPR_30_90:
                continue
            for clf in ("knn", "svm"):
                score = mean_f(separable_run, variant, clf)
                assert score >= 0.95, f"{variant.value}/{clf}: {score:.4f}"
        for clf in ("knn", "svm"):
            score = mean_f(default_run, Variant.GPR_IN_RANGE, clf)
            assert score >= 0.80, f"{clf}: {score:.4f}"
        ok = True
    finally:
        _report(7, "separable cohort >=0.95 outside the fixed grid; noisy "
                   "cohort in-range >=0.80", ok)


def test_criterion_8_determinism(tmp_path):
    ok = False
    try:
        from trendeq.cli import main
        from trendeq.timeseries import save_labels, save_series

        cohort, labels = generate_cohort(CohortConfig(n_patients=60, seed=11))
        series_path = tmp_path / "series.csv"
        labels_path = tmp_path / "labels.csv"
        save_series(series_path, cohort)
        save_labels(labels_path, labels)
        runner = CliRunner()
        outs = []
        for name in ("runA", "runB"):
            out = tmp_path / name
            result = runner.invoke(main, [
                "evaluate", "--series", str(series_path), "--labels", str(labels_path),
                "--out", str(out), "--seed", "11",
            ], catch_exceptions=False)
            assert result.exit_code == 0, result.output
            outs.append(out)
        for fname in ("experiment_report.csv", "expert_agreement.csv", "run_log.jsonl"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes(), fname
        ok = True
    finally:
        _report(8, "end-to-end evaluate runs are byte-identical", ok)


def test_criterion_9_no_leakage_audit(default_run):
    ok = False
    try:
        audits = default_run.result.audits
        # 6 variants x 2 classifiers x 5 folds training calls
        assert len(audits) == 60
        plan = default_run.result.plan
        for audit in audits:
            variant = Variant(audit.variant)
            feats, excluded = default_run.builder.features(variant)
            train, test = set(audit.train_ids), set(audit.test_ids)
            # the ids recorded by the classifier are exactly what the training
            # call (and therefore the standardization fit) saw
            assert not train & test
            assert train | test == set(feats)
            fold = audit.fold
            for pid in train:
                assert plan.assignments[pid] != fold
            for pid in test:
                assert plan.assignments[pid] == fold
        seen_cells = {(a.variant, a.classifier, a.fold) for a in audits}
        assert len(seen_cells) == 60
        ok = True
    finally:
        _report(9, "all training calls see only training-fold patients", ok)
