"""Cross-validated experiments, metrics and expert-agreement scoring.

The harness runs (featurization variant, classifier) cells under a shared
5-fold plan, scoring each fold with precision/recall/F on the stable class.
Patients a variant cannot featurize are excluded from that variant's folds
with a recorded reason; the fold plan itself always covers the full cohort
so every variant sees the same split.
"""

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import classify
from .features import FeatureBuilder, Variant
from .gpr import FitConfig
from .timeseries import BinaryLabel, LabelSet, binarize, consensus

N_FOLDS = 5

# Canonical presentation order for report columns.
VARIANT_ORDER = (
    Variant.GPR_30_90,
    Variant.STATS4,
    Variant.GPR_IN_RANGE,
    Variant.STATS_PLUS_GPR,
    Variant.INTERP,
    Variant.STATS_PLUS_INTERP,
)
CLASSIFIERS = ("knn", "svm")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(preds: Sequence[BinaryLabel], truths: Sequence[BinaryLabel]) -> ConfusionCounts:
    """Counts with stable as the positive class."""
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(truths)} truths")
    tp = fp = tn = fn = 0
    for p, t in zip(preds, truths):
        if p is BinaryLabel.STABLE:
            if t is BinaryLabel.STABLE:
                tp += 1
            else:
                fp += 1
        else:
            if t is BinaryLabel.STABLE:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def f_score(c: ConfusionCounts) -> tuple:
    """(precision, recall, F). Zero denominators yield 0 by convention."""
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 0.0
    f = 2.0 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    assignments: Dict[str, int]

    def fold_ids(self, fold: int) -> list:
        return [pid for pid, f in self.assignments.items() if f == fold]


def kfold_split(ids: Sequence[str], seed: int, n_folds: int = N_FOLDS,
                stratified: bool = False,
                labels: Optional[Mapping[str, BinaryLabel]] = None) -> FoldPlan:
    """Deterministic shuffle by seed, then round-robin fold assignment.

    Stratified mode round-robins within each class, continuing the fold
    counter across classes so fold sizes still differ by at most one.
    """
    ids = list(ids)
    if len(ids) < n_folds:
        raise ValueError(f"need at least {n_folds} patients, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    assignments = {}
    if stratified:
        if labels is None:
            raise ValueError("stratified split requires labels")
        counter = 0
        for cls in (BinaryLabel.STABLE, BinaryLabel.UNSTABLE):
            for pid in order:
                if labels[pid] is cls:
                    assignments[pid] = counter % n_folds
                    counter += 1
    else:
        for i, pid in enumerate(order):
            assignments[pid] = i % n_folds
    return FoldPlan(seed, assignments)


@dataclass(frozen=True)
class ExperimentReport:
    variant: Variant
    classifier: str
    per_fold: tuple                  # 5 x (precision, recall, f)
    mean_f: float

    def __post_init__(self):
        for triple in self.per_fold:
            for v in triple:
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"score out of range: {v}")
        recomputed = sum(t[2] for t in self.per_fold) / len(self.per_fold)
        if abs(recomputed - self.mean_f) > 1e-12:
            raise ValueError("mean_f does not match per-fold scores")


@dataclass
class FoldAudit:
    """Ids seen by one training call; standardization is fit on the same rows."""

    variant: str
    classifier: str
    fold: int
    train_ids: tuple
    test_ids: tuple


@dataclass
class MatrixResult:
    reports: List[ExperimentReport]
    exclusions: Dict[Variant, Dict[str, str]]
    audits: List[FoldAudit] = field(default_factory=list)
    plan: Optional[FoldPlan] = None


def _train_predict(classifier: str, train, test_x, *, knn_k: int, svm_c: float,
                   svm_sigma: float, scale: bool, ids):
    if classifier == "knn":
        model = classify.knn_train(train, k=knn_k, scale=scale, ids=ids)
        return model, [classify.knn_predict(model, x) for x in test_x]
    if classifier == "svm":
        model = classify.svm_train(train, sigma=svm_sigma, c=svm_c, scale=scale, ids=ids)
        return model, [classify.svm_predict(model, x) for x in test_x]
    raise ValueError(f"unknown classifier {classifier!r}")


def run_experiment(cohort, labels: Mapping[str, LabelSet], variant: Variant,
                   classifier: str, seed: int = 0, *,
                   fit_config: FitConfig = FitConfig(),
                   knn_k: int = 3, svm_c: float = 1.0, svm_sigma: float = 10.0,
                   scale: bool = True, stratified: bool = False,
                   builder: Optional[FeatureBuilder] = None,
                   plan: Optional[FoldPlan] = None,
                   audits: Optional[list] = None) -> ExperimentReport:
    """5-fold cross-validated scores for one (variant, classifier) cell."""
    if builder is None:
        builder = FeatureBuilder(cohort, fit_config)
    truth = {pid: consensus(labels[pid]) for pid in builder.patient_ids}
    if plan is None:
        plan = kfold_split(builder.patient_ids, seed, stratified=stratified, labels=truth)
    feats, _excluded = builder.features(variant)

    per_fold = []
    for fold in range(N_FOLDS):
        train_ids = [pid for pid in builder.patient_ids
                     if plan.assignments[pid] != fold and pid in feats]
        test_ids = [pid for pid in builder.patient_ids
                    if plan.assignments[pid] == fold and pid in feats]
        train = [(feats[pid].values, truth[pid]) for pid in train_ids]
        test_x = [feats[pid].values for pid in test_ids]
        model, preds = _train_predict(
            classifier, train, test_x, knn_k=knn_k, svm_c=svm_c,
            svm_sigma=svm_sigma, scale=scale, ids=train_ids,
        )
        if audits is not None:
            audits.append(FoldAudit(variant.value, classifier, fold,
                                    tuple(model.train_ids), tuple(test_ids)))
        per_fold.append(f_score(confusion(preds, [truth[pid] for pid in test_ids])))
    mean_f = sum(t[2] for t in per_fold) / N_FOLDS
    return ExperimentReport(variant, classifier, tuple(per_fold), mean_f)


def run_matrix(cohort, labels: Mapping[str, LabelSet],
               variants: Sequence[Variant] = VARIANT_ORDER,
               classifiers: Sequence[str] = CLASSIFIERS, seed: int = 0, *,
               fit_config: FitConfig = FitConfig(), knn_k: int = 3,
               svm_c: float = 1.0, svm_sigma: float = 10.0, scale: bool = True,
               stratified: bool = False,
               builder: Optional[FeatureBuilder] = None) -> MatrixResult:
    """Run the full experiment matrix with one shared fold plan and GP cache."""
    if builder is None:
        builder = FeatureBuilder(cohort, fit_config)
    truth = {pid: consensus(labels[pid]) for pid in builder.patient_ids}
    plan = kfold_split(builder.patient_ids, seed, stratified=stratified, labels=truth)
    reports = []
    exclusions = {}
    audits = []
    for variant in variants:
        _, excluded = builder.features(variant)
        exclusions[variant] = excluded
        for clf in classifiers:
            reports.append(run_experiment(
                cohort, labels, variant, clf, seed,
                fit_config=fit_config, knn_k=knn_k, svm_c=svm_c,
                svm_sigma=svm_sigma, scale=scale, stratified=stratified,
                builder=builder, plan=plan, audits=audits,
            ))
    return MatrixResult(reports, exclusions, audits, plan)


@dataclass(frozen=True)
class AgreementReport:
    """Per-expert F-scores against the consensus of the remaining experts."""

    f_scores: tuple                  # one per expert, in expert order
    tie_counts: tuple                # patients skipped per expert (2-2 splits)
    mean_f: float


def expert_agreement(labels: Mapping[str, LabelSet], mode: str = "majority") -> AgreementReport:
    """Score each expert against the other four.

    ``majority``: truth is the majority of the other four binarized votes,
    with 2-2 ties excluded from that expert's scoring. ``pairwise``: mean of
    the four F-scores against each other expert separately.
    """
    if mode not in ("majority", "pairwise"):
        raise ValueError(f"unknown agreement mode {mode!r}")
    label_sets = list(labels.values())
    f_scores = []
    ties = []
    for e in range(5):
        if mode == "majority":
            preds, truths = [], []
            n_ties = 0
            for ls in label_sets:
                votes = [binarize(a) for i, a in enumerate(ls.annotations) if i != e]
                stable = sum(1 for v in votes if v is BinaryLabel.STABLE)
                if stable == 2:
                    n_ties += 1
                    continue
                preds.append(binarize(ls.annotations[e]))
                truths.append(BinaryLabel.STABLE if stable >= 3 else BinaryLabel.UNSTABLE)
            f_scores.append(f_score(confusion(preds, truths))[2])
            ties.append(n_ties)
        else:
            pair_f = []
            for other in range(5):
                if other == e:
                    continue
                preds = [binarize(ls.annotations[e]) for ls in label_sets]
                truths = [binarize(ls.annotations[other]) for ls in label_sets]
                pair_f.append(f_score(confusion(preds, truths))[2])
            f_scores.append(sum(pair_f) / 4.0)
            ties.append(0)
    return AgreementReport(tuple(f_scores), tuple(ties),
                           sum(f_scores) / 5.0)


def write_experiment_report(path, reports: Sequence[ExperimentReport],
                            meta: Mapping | None = None):
    """Report CSV: rows Fold-1..Fold-5 and Average, one column per cell."""
    ordered = sorted(
        reports,
        key=lambda r: (VARIANT_ORDER.index(r.variant), CLASSIFIERS.index(r.classifier)),
    )
    columns = [f"{r.variant.value}_{r.classifier}" for r in ordered]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["fold"] + columns)
        for fold in range(N_FOLDS):
            writer.writerow([f"Fold-{fold + 1}"] +
                            [f"{r.per_fold[fold][2]:.4f}" for r in ordered])
        writer.writerow(["Average"] + [f"{r.mean_f:.4f}" for r in ordered])


def write_agreement_report(path, report: AgreementReport, meta: Mapping | None = None):
    """Agreement CSV: one F-score column per expert plus the mean."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow([""] + [f"E{i + 1}" for i in range(5)] + ["Mean"])
        writer.writerow(["F-score"] + [f"{f:.4f}" for f in report.f_scores] +
                        [f"{report.mean_f:.4f}"])
