"""Synthetic cohort generator.

Produces irregular per-patient eGFR series plus five-expert annotations
with characteristics matching the published cohort summary: 488 patients,
53.3% stable, roughly 10,873 measurements in total, ages concentrated
between 60 and 90 and eGFR values between 25 and 95. Every distribution
parameter is a config knob; defaults are calibration targets only.

Unstable patients carry either a linear decline or a step drop. One of the
five simulated experts is deliberately noisier so agreement scoring has a
non-trivial spread.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .timeseries import LabelSet, PatientSeries, TrendAnnotation, build_series

MEAN_MEASUREMENTS = 10873 / 488


@dataclass(frozen=True)
class CohortConfig:
    n_patients: int = 488
    stable_fraction: float = 0.533
    # measurement counts: (min_measurements - 1) + geometric, mean mean_measurements
    mean_measurements: float = MEAN_MEASUREMENTS
    min_measurements: int = 2
    # observation window
    window_start_mean: float = 65.0
    window_start_sd: float = 12.0
    window_start_min: float = 30.0
    window_start_max: float = 88.0
    window_span_mean: float = 16.0
    window_span_min: float = 3.0
    window_span_max: float = 30.0
    unstable_age_shift: float = 10.0     # unstable windows start this much later
    unstable_span_factor: float = 0.75   # unstable windows are shorter on average
    # latent trends
    noise_sd: float = 8.0
    step_fraction: float = 0.5           # share of unstable patients with a step drop
    stable_level_low: float = 50.0
    stable_level_high: float = 90.0
    unstable_level_low: float = 65.0
    unstable_level_high: float = 100.0
    # linear declines are drawn as a bounded total drop across the window,
    # so the series never runs into the physiological floor
    linear_decline_low: float = 20.0
    linear_decline_high: float = 55.0
    step_drop_low: float = 10.0
    step_drop_high: float = 30.0
    age_egfr_slope: float = -1.0         # cohort-level eGFR shift per year of mean age
    egfr_min: float = 5.0
    egfr_max: float = 130.0
    expert_flip_probs: Tuple[float, ...] = (0.02, 0.02, 0.02, 0.02, 0.08)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.stable_fraction <= 1.0:
            raise ValueError("stable_fraction must be in [0, 1]")
        if self.n_patients < 10:
            raise ValueError("n_patients must be at least 10")
        if self.min_measurements < 1:
            raise ValueError("min_measurements must be at least 1")
        if self.mean_measurements <= self.min_measurements - 1:
            raise ValueError("mean_measurements too small for min_measurements")
        if any(not 0.0 <= p <= 1.0 for p in self.expert_flip_probs):
            raise ValueError("flip probabilities must be in [0, 1]")
        if len(self.expert_flip_probs) != 5:
            raise ValueError("exactly five expert flip probabilities required")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be non-negative")


def separable_cohort_config(n_patients: int = 488, seed: int = 0) -> CohortConfig:
    """Noise-free, cleanly separated cohort: stable flat at 80, unstable
    declining 30 eGFR units across the observation window."""
    return CohortConfig(
        n_patients=n_patients,
        noise_sd=0.0,
        stable_level_low=80.0,
        stable_level_high=80.0,
        unstable_level_low=80.0,
        unstable_level_high=80.0,
        step_fraction=0.0,
        linear_decline_low=30.0,
        linear_decline_high=30.0,
        age_egfr_slope=0.0,
        unstable_age_shift=0.0,
        unstable_span_factor=1.0,
        seed=seed,
    )


def _window(rng, cfg: CohortConfig, stable: bool) -> Tuple[float, float]:
    start_mean = cfg.window_start_mean + (0.0 if stable else cfg.unstable_age_shift)
    start = float(np.clip(rng.normal(start_mean, cfg.window_start_sd),
                          cfg.window_start_min, cfg.window_start_max))
    span_mean = cfg.window_span_mean * (1.0 if stable else cfg.unstable_span_factor)
    span = float(np.clip(rng.exponential(span_mean),
                         cfg.window_span_min, cfg.window_span_max))
    return start, span


def _measurement_count(rng, cfg: CohortConfig) -> int:
    p = 1.0 / (cfg.mean_measurements - cfg.min_measurements + 1)
    return cfg.min_measurements - 1 + int(rng.geometric(p))


def _latent_values(rng, cfg: CohortConfig, kind: TrendAnnotation,
                   ages: np.ndarray, start: float, span: float) -> np.ndarray:
    mid_shift = cfg.age_egfr_slope * (start + span / 2.0 - cfg.window_start_mean)
    if kind is TrendAnnotation.STABLE:
        level = rng.uniform(cfg.stable_level_low, cfg.stable_level_high) + mid_shift
        return np.full(len(ages), level)
    base = rng.uniform(cfg.unstable_level_low, cfg.unstable_level_high) + mid_shift
    if kind is TrendAnnotation.LINEAR:
        decline = rng.uniform(cfg.linear_decline_low, cfg.linear_decline_high)
        return base - decline * (ages - start) / span
    drop = rng.uniform(cfg.step_drop_low, cfg.step_drop_high)
    changepoint = rng.uniform(start, start + span)
    return base - drop * (ages >= changepoint)


def _annotations(rng, cfg: CohortConfig, kind: TrendAnnotation) -> Tuple[TrendAnnotation, ...]:
    """Expert labels: flips swap the binary class, expressed as three-way tokens."""
    out = []
    for p in cfg.expert_flip_probs:
        if rng.random() < p:
            if kind is TrendAnnotation.STABLE:
                out.append(TrendAnnotation.LINEAR if rng.random() < 0.5
                           else TrendAnnotation.STEP)
            else:
                out.append(TrendAnnotation.STABLE)
        else:
            out.append(kind)
    return tuple(out)


def generate_cohort(config: CohortConfig = CohortConfig()) -> Tuple[List[PatientSeries], Dict[str, LabelSet]]:
    """Generate (series, labels); bit-identical for a fixed config."""
    n = config.n_patients
    n_stable = round(config.stable_fraction * n)
    children = np.random.SeedSequence(config.seed).spawn(n)
    cohort = []
    labels = {}
    for i in range(n):
        rng = np.random.default_rng(children[i])
        pid = f"p{i + 1:04d}"
        stable = i < n_stable
        if stable:
            kind = TrendAnnotation.STABLE
        else:
            kind = (TrendAnnotation.STEP if rng.random() < config.step_fraction
                    else TrendAnnotation.LINEAR)
        start, span = _window(rng, config, stable)
        count = _measurement_count(rng, config)
        ages = np.sort(start + span * rng.random(count))
        values = _latent_values(rng, config, kind, ages, start, span)
        if config.noise_sd > 0.0:
            values = values + rng.normal(0.0, config.noise_sd, size=count)
        values = np.clip(values, config.egfr_min, config.egfr_max)
        cohort.append(build_series(pid, ages.tolist(), values.tolist()))
        labels[pid] = LabelSet(pid, _annotations(rng, config, kind))
    return cohort, labels
