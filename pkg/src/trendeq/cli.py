"""Command-line front-end.

Subcommands: generate | equalize | classify | evaluate | agreement | plot-data.
Every output file embeds the run's config hash and seed in a leading comment
line, and identical flags reproduce outputs byte-identically. Plot output is
CSV data, not rendered images. ``TRENDEQ_LOG`` sets the log level.
"""

import hashlib
import json
import logging
import os
from pathlib import Path

import click

from . import classify as clf
from . import evaluation, gpr, synth, timeseries
from .errors import DegenerateRangeError, FitError
from .features import FeatureBuilder, Variant
from .gpr import FitConfig, Regime
from .timeseries import BinaryLabel, consensus

log = logging.getLogger("trendeq")

METHOD_TO_VARIANT = {
    "gpr-in-range": Variant.GPR_IN_RANGE,
    "gpr-fixed": Variant.GPR_30_90,
    "linear": Variant.INTERP,
}
VARIANT_TOKENS = {
    "stats": Variant.STATS4,
    "gpr-fixed": Variant.GPR_30_90,
    "gpr-in-range": Variant.GPR_IN_RANGE,
    "stats-gpr": Variant.STATS_PLUS_GPR,
    "linear": Variant.INTERP,
    "stats-linear": Variant.STATS_PLUS_INTERP,
}
_VARIANT_REGIME = {
    Variant.GPR_30_90: Regime.FIXED_30_90,
    Variant.GPR_IN_RANGE: Regime.IN_RANGE,
    Variant.INTERP: Regime.LINEAR_IN_RANGE,
}


def _setup_logging():
    level = os.environ.get("TRENDEQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def config_hash(params: dict) -> str:
    """Stable short hash of a run configuration."""
    canon = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _meta(params: dict) -> dict:
    return {"config_hash": config_hash(params), "seed": params.get("seed", 0)}


def _parse_variants(spec: str):
    tokens = [t.strip() for t in spec.split(",") if t.strip()]
    try:
        return [VARIANT_TOKENS[t] for t in tokens]
    except KeyError as exc:
        raise click.BadParameter(
            f"unknown variant {exc.args[0]!r}; choose from {', '.join(VARIANT_TOKENS)}"
        ) from None


def _classifier_list(token: str):
    return ["knn", "svm"] if token == "both" else [token]


@click.group()
def main():
    """Equalize irregular eGFR series and classify trend stability."""
    _setup_logging()


@main.command()
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-patients", type=int, default=488, show_default=True)
@click.option("--stable-fraction", type=float, default=0.533, show_default=True)
@click.option("--noise-sd", type=float, default=8.0, show_default=True)
@click.option("--separable", is_flag=True,
              help="Noise-free, cleanly separated classes.")
def generate(out, seed, n_patients, stable_fraction, noise_sd, separable):
    """Write a synthetic cohort: series.csv and labels.csv."""
    if separable:
        config = synth.separable_cohort_config(n_patients=n_patients, seed=seed)
    else:
        config = synth.CohortConfig(n_patients=n_patients,
                                    stable_fraction=stable_fraction,
                                    noise_sd=noise_sd, seed=seed)
    params = {"cmd": "generate", "seed": seed, "n_patients": n_patients,
              "stable_fraction": stable_fraction, "noise_sd": noise_sd,
              "separable": separable}
    cohort, labels = synth.generate_cohort(config)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    timeseries.save_series(out_dir / "series.csv", cohort, _meta(params))
    timeseries.save_labels(out_dir / "labels.csv", labels, _meta(params))
    click.echo(f"wrote {len(cohort)} patients to {out_dir}")


@main.command()
@click.option("--series", "series_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(sorted(METHOD_TO_VARIANT)), default="gpr-in-range",
              show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-plots", is_flag=True, help="Skip per-patient plot-data CSVs.")
def equalize(series_path, method, out, seed, no_plots):
    """Fit the chosen model per patient and write the 50-point feature matrix."""
    params = {"cmd": "equalize", "series": str(series_path), "method": method,
              "seed": seed}
    cohort = timeseries.load_series(series_path)
    variant = METHOD_TO_VARIANT[method]
    builder = FeatureBuilder(cohort, FitConfig(seed=seed))
    feats, excluded = builder.features(variant)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .features import write_feature_matrix

    write_feature_matrix(out_dir / "features.csv",
                         [feats[pid] for pid in builder.patient_ids if pid in feats],
                         _meta(params))
    with open(out_dir / "exclusions.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "run", **_meta(params)}, sort_keys=True) + "\n")
        for pid in builder.patient_ids:
            if pid in excluded:
                fh.write(json.dumps({"type": "exclusion", "patient_id": pid,
                                     "reason": excluded[pid]}, sort_keys=True) + "\n")
    if not no_plots:
        plots = out_dir / "plots"
        plots.mkdir(exist_ok=True)
        for pid in builder.patient_ids:
            if pid not in feats:
                continue
            resampled = builder.resampled(pid, _VARIANT_REGIME[variant])
            gpr.write_plot_data(plots / f"{pid}.csv", resampled, builder.series(pid),
                                {**_meta(params), "patient": pid, "method": method})
    for pid, reason in excluded.items():
        log.warning("excluded %s: %s", pid, reason)
    click.echo(f"equalized {len(feats)} patients ({len(excluded)} excluded) -> {out_dir}")
    if feats:
        return
    raise click.ClickException("all patients failed")


@main.command("classify")
@click.option("--series", "series_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--predict-series", type=click.Path(exists=True),
              help="Series to predict; defaults to the training series.")
@click.option("--variant", "variant_token", type=click.Choice(sorted(VARIANT_TOKENS)),
              default="stats-gpr", show_default=True)
@click.option("--classifier", type=click.Choice(["knn", "svm", "both"]), default="both",
              show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--svm-c", type=float, default=1.0, show_default=True)
@click.option("--svm-sigma", type=float, default=10.0, show_default=True)
@click.option("--knn-k", type=int, default=3, show_default=True)
@click.option("--no-scaling", is_flag=True)
def classify_cmd(series_path, labels_path, predict_series, variant_token, classifier,
                 out, seed, svm_c, svm_sigma, knn_k, no_scaling):
    """Train on a labeled cohort and write per-patient predictions."""
    params = {"cmd": "classify", "series": str(series_path), "labels": str(labels_path),
              "predict_series": str(predict_series), "variant": variant_token,
              "classifier": classifier, "seed": seed, "svm_c": svm_c,
              "svm_sigma": svm_sigma, "knn_k": knn_k, "no_scaling": no_scaling}
    variant = VARIANT_TOKENS[variant_token]
    cohort = timeseries.load_series(series_path)
    labels = timeseries.load_labels(labels_path)
    missing = [s.id for s in cohort if s.id not in labels]
    if missing:
        raise click.ClickException(f"no labels for patients: {missing[:5]}")
    builder = FeatureBuilder(cohort, FitConfig(seed=seed))
    feats, excluded = builder.features(variant)
    truth = {pid: consensus(labels[pid]) for pid in feats}
    train_ids = [pid for pid in builder.patient_ids if pid in feats]
    train = [(feats[pid].values, truth[pid]) for pid in train_ids]

    if predict_series:
        target = timeseries.load_series(predict_series)
        target_builder = FeatureBuilder(target, FitConfig(seed=seed))
        target_feats, target_excluded = target_builder.features(variant)
        excluded = {**excluded, **target_excluded}
    else:
        target_feats = feats

    scale = not no_scaling
    predictions = {}
    for name in _classifier_list(classifier):
        if name == "knn":
            model = clf.knn_train(train, k=knn_k, scale=scale, ids=train_ids)
            predict = lambda x: clf.knn_predict(model, x)
        else:
            model = clf.svm_train(train, sigma=svm_sigma, c=svm_c, scale=scale,
                                  ids=train_ids)
            log.info("%s", clf.describe(model))
            predict = lambda x: clf.svm_predict(model, x)
        predictions[name] = {
            pid: predict(fv.values) for pid, fv in target_feats.items()
        }

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(predictions)
    with open(out_dir / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in _meta(params).items()) + "\n")
        fh.write(",".join(["patient_id"] + names) + "\n")
        for pid in sorted(target_feats):
            row = [pid] + ["stable" if predictions[n][pid] is BinaryLabel.STABLE
                           else "unstable" for n in names]
            fh.write(",".join(row) + "\n")
    click.echo(f"wrote predictions for {len(target_feats)} patients "
               f"({len(excluded)} excluded) -> {out_dir}")


@main.command()
@click.option("--series", "series_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--variants", default="gpr-fixed,stats,gpr-in-range,stats-gpr,linear,stats-linear",
              show_default=True, help="Comma-separated variant subset.")
@click.option("--classifier", type=click.Choice(["knn", "svm", "both"]), default="both",
              show_default=True)
@click.option("--svm-c", type=float, default=1.0, show_default=True)
@click.option("--svm-sigma", type=float, default=10.0, show_default=True)
@click.option("--knn-k", type=int, default=3, show_default=True)
@click.option("--stratified", is_flag=True)
@click.option("--no-scaling", is_flag=True)
def evaluate(series_path, labels_path, out, seed, variants, classifier, svm_c,
             svm_sigma, knn_k, stratified, no_scaling):
    """Run the cross-validated experiment matrix and the expert agreement report."""
    params = {"cmd": "evaluate", "series": str(series_path), "labels": str(labels_path),
              "seed": seed, "variants": variants, "classifier": classifier,
              "svm_c": svm_c, "svm_sigma": svm_sigma, "knn_k": knn_k,
              "stratified": stratified, "no_scaling": no_scaling}
    cohort = timeseries.load_series(series_path)
    labels = timeseries.load_labels(labels_path)
    missing = [s.id for s in cohort if s.id not in labels]
    if missing:
        raise click.ClickException(f"no labels for patients: {missing[:5]}")
    variant_list = _parse_variants(variants)
    result = evaluation.run_matrix(
        cohort, labels, variant_list, _classifier_list(classifier), seed,
        fit_config=FitConfig(seed=seed), knn_k=knn_k, svm_c=svm_c,
        svm_sigma=svm_sigma, scale=not no_scaling, stratified=stratified,
    )
    agreement = evaluation.expert_agreement(labels)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _meta(params)
    evaluation.write_experiment_report(out_dir / "experiment_report.csv",
                                       result.reports, meta)
    evaluation.write_agreement_report(out_dir / "expert_agreement.csv", agreement, meta)
    with open(out_dir / "run_log.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "run", "config": params, **meta},
                            sort_keys=True) + "\n")
        for variant, excluded in result.exclusions.items():
            fh.write(json.dumps({
                "type": "exclusions", "variant": variant.value,
                "count": len(excluded),
                "patients": {pid: excluded[pid] for pid in sorted(excluded)},
            }, sort_keys=True) + "\n")
        for audit in result.audits:
            fh.write(json.dumps({
                "type": "fold_audit", "variant": audit.variant,
                "classifier": audit.classifier, "fold": audit.fold,
                "train_ids": list(audit.train_ids), "test_ids": list(audit.test_ids),
            }, sort_keys=True) + "\n")
        for report in result.reports:
            fh.write(json.dumps({
                "type": "report", "variant": report.variant.value,
                "classifier": report.classifier,
                "per_fold": [list(t) for t in report.per_fold],
                "mean_f": report.mean_f,
            }, sort_keys=True) + "\n")
        fh.write(json.dumps({
            "type": "agreement", "f_scores": list(agreement.f_scores),
            "tie_counts": list(agreement.tie_counts), "mean_f": agreement.mean_f,
        }, sort_keys=True) + "\n")
    for report in result.reports:
        click.echo(f"{report.variant.value:>18} {report.classifier}: "
                   f"mean F = {report.mean_f:.4f}")
    click.echo(f"expert agreement mean F = {agreement.mean_f:.4f}")


@main.command()
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--mode", type=click.Choice(["majority", "pairwise"]), default="majority",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def agreement(labels_path, out, mode, seed):
    """Score each expert against the consensus of the remaining four."""
    params = {"cmd": "agreement", "labels": str(labels_path), "mode": mode, "seed": seed}
    labels = timeseries.load_labels(labels_path)
    report = evaluation.expert_agreement(labels, mode=mode)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_agreement_report(out_dir / "expert_agreement.csv", report,
                                      _meta(params))
    click.echo(f"per-expert F: {', '.join(f'{f:.4f}' for f in report.f_scores)}; "
               f"mean {report.mean_f:.4f}")


@main.command("plot-data")
@click.option("--series", "series_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(sorted(METHOD_TO_VARIANT)), default="gpr-in-range",
              show_default=True)
@click.option("--patient", "patients", multiple=True,
              help="Patient id(s); default is every patient in the file.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def plot_data(series_path, method, patients, out, seed):
    """Write per-patient plot-band CSVs (mean and 95% interval plus raw points)."""
    params = {"cmd": "plot-data", "series": str(series_path), "method": method,
              "patients": sorted(patients), "seed": seed}
    cohort = timeseries.load_series(series_path)
    builder = FeatureBuilder(cohort, FitConfig(seed=seed))
    wanted = list(patients) if patients else builder.patient_ids
    known = set(builder.patient_ids)
    unknown = [pid for pid in wanted if pid not in known]
    if unknown:
        raise click.ClickException(f"unknown patient ids: {unknown}")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_failed = 0
    for pid in wanted:
        try:
            resampled = builder.resampled(pid, _VARIANT_REGIME[METHOD_TO_VARIANT[method]])
        except (DegenerateRangeError, FitError) as exc:
            log.warning("skipping %s: %s", pid, exc)
            n_failed += 1
            continue
        gpr.write_plot_data(out_dir / f"{pid}.csv", resampled, builder.series(pid),
                            {**_meta(params), "patient": pid, "method": method})
    if n_failed == len(wanted):
        raise click.ClickException("all patients failed")
    click.echo(f"wrote plot data for {len(wanted) - n_failed} patients -> {out_dir}")


if __name__ == "__main__":
    main(prog_name="trendeq")
