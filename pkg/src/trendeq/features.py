"""Derived statistics and classifier feature assembly.

Six featurization variants are supported; the combined ones concatenate the
four derived statistics ahead of the 50 resampled values. Posterior
variances never enter a feature vector.
"""

import csv
import enum
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import gpr, interp
from .errors import DegenerateRangeError, FitError
from .gpr import FitConfig, Regime, Resampled
from .timeseries import PatientSeries


class Variant(enum.Enum):
    STATS4 = "stats4"
    GPR_30_90 = "gpr_30_90"
    GPR_IN_RANGE = "gpr_in_range"
    STATS_PLUS_GPR = "stats_plus_gpr"
    INTERP = "interp"
    STATS_PLUS_INTERP = "stats_plus_interp"


VARIANT_LENGTH = {
    Variant.STATS4: 4,
    Variant.GPR_30_90: 50,
    Variant.GPR_IN_RANGE: 50,
    Variant.STATS_PLUS_GPR: 54,
    Variant.INTERP: 50,
    Variant.STATS_PLUS_INTERP: 54,
}

_VARIANT_REGIME = {
    Variant.GPR_30_90: Regime.FIXED_30_90,
    Variant.GPR_IN_RANGE: Regime.IN_RANGE,
    Variant.STATS_PLUS_GPR: Regime.IN_RANGE,
    Variant.INTERP: Regime.LINEAR_IN_RANGE,
    Variant.STATS_PLUS_INTERP: Regime.LINEAR_IN_RANGE,
}

# Variants whose grid is restricted to the observed age range; these exclude
# single-observation patients.
IN_RANGE_VARIANTS = (
    Variant.GPR_IN_RANGE,
    Variant.STATS_PLUS_GPR,
    Variant.INTERP,
    Variant.STATS_PLUS_INTERP,
)


@dataclass(frozen=True)
class DerivedStats:
    """Age span, eGFR range, mean age and mean eGFR of one series."""

    delta_a: float
    delta_g: float
    mu_a: float
    mu_g: float


@dataclass(frozen=True)
class FeatureVector:
    id: str
    variant: Variant
    values: np.ndarray

    def __post_init__(self):
        expected = VARIANT_LENGTH[self.variant]
        if len(self.values) != expected:
            raise ValueError(
                f"{self.variant.value} features must have length {expected}, "
                f"got {len(self.values)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature for {self.id!r}")


def derive_stats(series: PatientSeries) -> DerivedStats:
    ages = np.asarray(series.ages)
    values = np.asarray(series.values)
    return DerivedStats(
        delta_a=float(ages.max() - ages.min()),
        delta_g=float(values.max() - values.min()),
        mu_a=float(ages.mean()),
        mu_g=float(values.mean()),
    )


def assemble(patient_id: str, variant: Variant,
             stats: Optional[DerivedStats] = None,
             resampled: Optional[Resampled] = None) -> FeatureVector:
    """Build the feature vector for one variant from its required inputs."""
    needs_stats = variant in (Variant.STATS4, Variant.STATS_PLUS_GPR,
                              Variant.STATS_PLUS_INTERP)
    needs_resampled = variant is not Variant.STATS4
    if needs_stats and stats is None:
        raise ValueError(f"variant {variant.value} requires derived stats")
    if needs_resampled:
        if resampled is None:
            raise ValueError(f"variant {variant.value} requires resampled values")
        expected_regime = _VARIANT_REGIME[variant]
        if resampled.regime is not expected_regime:
            raise ValueError(
                f"variant {variant.value} requires regime {expected_regime.value}, "
                f"got {resampled.regime.value}"
            )
    parts = []
    if needs_stats:
        parts.append([stats.delta_a, stats.delta_g, stats.mu_a, stats.mu_g])
    if needs_resampled:
        parts.append(resampled.values)
    return FeatureVector(patient_id, variant, np.concatenate(parts))


class FeatureBuilder:
    """Computes per-patient feature vectors, fitting each GP at most once.

    Patients that cannot be featurized for a variant (single-observation
    series for in-range variants, or a diverged GP fit) are excluded with a
    recorded reason instead of failing the whole cohort.
    """

    def __init__(self, cohort, fit_config: FitConfig = FitConfig()):
        self._series = {s.id: s for s in cohort}
        self._order = [s.id for s in cohort]
        self._fit_config = fit_config
        self._models = {}
        self._fit_errors = {}
        self._resampled = {}

    @property
    def patient_ids(self):
        return list(self._order)

    def series(self, pid: str) -> PatientSeries:
        return self._series[pid]

    def model(self, pid: str):
        """Fitted GP for one patient, or None when the fit diverged."""
        if pid not in self._models and pid not in self._fit_errors:
            try:
                self._models[pid] = gpr.fit(self._series[pid], self._fit_config)
            except FitError as exc:
                self._fit_errors[pid] = str(exc)
        return self._models.get(pid)

    def resampled(self, pid: str, regime: Regime) -> Resampled:
        key = (pid, regime)
        if key not in self._resampled:
            series = self._series[pid]
            if regime is Regime.LINEAR_IN_RANGE:
                self._resampled[key] = interp.linear_resample(series)
            else:
                model = self.model(pid)
                if model is None:
                    raise FitError(self._fit_errors[pid])
                if regime is Regime.FIXED_30_90:
                    self._resampled[key] = gpr.resample_fixed_range(model)
                else:
                    self._resampled[key] = gpr.resample_in_range(model, series)
        return self._resampled[key]

    def features(self, variant: Variant):
        """(features, exclusions): id -> FeatureVector and id -> reason."""
        out = {}
        excluded = {}
        for pid in self._order:
            series = self._series[pid]
            stats = derive_stats(series)
            if variant is Variant.STATS4:
                out[pid] = assemble(pid, variant, stats=stats)
                continue
            try:
                resampled = self.resampled(pid, _VARIANT_REGIME[variant])
            except DegenerateRangeError:
                excluded[pid] = "degenerate_range"
                continue
            except FitError:
                excluded[pid] = "fit_diverged"
                continue
            out[pid] = assemble(pid, variant, stats=stats, resampled=resampled)
        return out, excluded


def write_feature_matrix(path, features, meta: Mapping | None = None):
    """Feature matrix CSV: one row per patient, single variant per file."""
    features = list(features)
    variants = {fv.variant for fv in features}
    if len(variants) > 1:
        raise ValueError("feature matrix files hold a single variant")
    width = VARIANT_LENGTH[features[0].variant] if features else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "variant"] + [f"f{i}" for i in range(width)])
        for fv in features:
            writer.writerow([fv.id, fv.variant.value] + [repr(float(v)) for v in fv.values])
