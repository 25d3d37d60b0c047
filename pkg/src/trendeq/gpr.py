"""Per-patient Gaussian-process regression with a squared-exponential kernel.

The model is ``egfr = f(age) + noise`` with a constant prior mean equal to
the patient's empirical mean eGFR. Hyperparameters (length scale, signal
variance, noise variance) are tuned by MAP estimation: log marginal
likelihood plus log-normal priors, maximized by multi-restart gradient
ascent with a backtracking line search in log-hyperparameter space.

Fitted models resample a fixed-size grid of 50 posterior means under two
regimes: a shared 30-90 year grid, or the patient's own observed age range.
"""

import csv
import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import backends
from .errors import DegenerateRangeError, FitError, IllConditionedKernel
from .timeseries import PatientSeries

GRID_SIZE = 50
FIXED_RANGE = (30.0, 90.0)

LOG_2PI = float(np.log(2.0 * np.pi))


class Regime(enum.Enum):
    FIXED_30_90 = "fixed_30_90"
    IN_RANGE = "in_range"
    LINEAR_IN_RANGE = "linear_in_range"


@dataclass(frozen=True)
class Hyperparams:
    """SE-kernel hyperparameters; all strictly positive."""

    length_scale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        for name in ("length_scale", "signal_variance", "noise_variance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    def log_vector(self) -> np.ndarray:
        return np.log([self.length_scale, self.signal_variance, self.noise_variance])

    @classmethod
    def from_log_vector(cls, z) -> "Hyperparams":
        g, sf2, sn2 = np.exp(np.asarray(z, dtype=float))
        return cls(float(g), float(sf2), float(sn2))


@dataclass(frozen=True)
class FitConfig:
    """Priors and optimizer settings for MAP hyperparameter estimation.

    Priors are log-normal: medians below, with the given log standard
    deviations. The signal-variance median is per patient (sample variance
    of the eGFR values, floored at ``signal_variance_floor``).
    """

    length_scale_median: float = 5.0
    length_scale_log_sd: float = 1.0
    signal_variance_floor: float = 1.0
    signal_variance_log_sd: float = 1.0
    noise_variance_median: float = 10.0
    noise_variance_log_sd: float = 1.0
    n_restarts: int = 5
    max_iter: int = 200
    grad_tol: float = 1e-5
    jitter: float = 1e-9
    jitter_max: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float


@dataclass(frozen=True)
class Resampled:
    """Fixed-size resampling of a fitted trend on a uniform age grid."""

    grid: np.ndarray
    values: np.ndarray
    variances: np.ndarray
    regime: Regime


@dataclass(frozen=True)
class GprModel:
    """Fitted per-patient GP: training data plus the precomputed factorization."""

    train_x: np.ndarray
    train_y: np.ndarray
    prior_mean: float
    hp: Hyperparams
    factor: np.ndarray        # lower-triangular Cholesky factor of K + (sn2 + jitter)I
    alpha: np.ndarray         # (K + (sn2 + jitter)I)^-1 (train_y - prior_mean)
    jitter_scale: float

    @classmethod
    def build(cls, train_x, train_y, prior_mean, hp: Hyperparams,
              jitter_scale: float) -> "GprModel":
        x = np.ascontiguousarray(train_x, dtype=np.float64)
        y = np.ascontiguousarray(train_y, dtype=np.float64)
        k = backends.se_gram(x, hp.length_scale, hp.signal_variance)
        a = k + (hp.noise_variance + jitter_scale * hp.signal_variance) * np.eye(len(x))
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedKernel(f"model factorization failed: {exc}") from exc
        alpha = cho_solve((lower, True), y - prior_mean)
        return cls(x, y, float(prior_mean), hp, lower, alpha, float(jitter_scale))


def se_kernel(x: float, x2: float, gamma: float) -> float:
    """Squared-exponential correlation exp(-(x-x')^2 / (2*gamma^2))."""
    d = x - x2
    return math.exp(-(d * d) / (2.0 * gamma * gamma))


def kernel_matrix(xs, xs2, hp: Hyperparams) -> np.ndarray:
    """Covariance matrix: entry (i, j) = signal_variance * se_kernel(xs[i], xs2[j])."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    xs2 = np.ascontiguousarray(xs2, dtype=np.float64)
    if xs.shape == xs2.shape and np.array_equal(xs, xs2):
        return backends.se_gram(xs, hp.length_scale, hp.signal_variance)
    return backends.se_cross(xs, xs2, hp.length_scale, hp.signal_variance)


def _pairwise_sq(x: np.ndarray) -> np.ndarray:
    d = x[:, None] - x[None, :]
    return d * d


def log_marginal_likelihood(hp: Hyperparams, xs, ys, prior_mean: float,
                            jitter_scale: float = 1e-9) -> float:
    """log N(ys | prior_mean, K + noise_variance*I) for the SE-kernel GP."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    resid = np.ascontiguousarray(ys, dtype=np.float64) - prior_mean
    z = hp.log_vector()
    return backends.lml_value(_pairwise_sq(xs), resid, z[0], z[1], z[2], jitter_scale)


def log_marginal_likelihood_grad(hp: Hyperparams, xs, ys, prior_mean: float,
                                 jitter_scale: float = 1e-9):
    """Value and gradient of the log marginal likelihood w.r.t. log-hyperparameters.

    Gradient order: (log length_scale, log signal_variance, log noise_variance).
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    resid = np.ascontiguousarray(ys, dtype=np.float64) - prior_mean
    z = hp.log_vector()
    return backends.lml_value_grad(_pairwise_sq(xs), resid, z[0], z[1], z[2], jitter_scale)


class _MapObjective:
    """MAP objective over z = log(hyperparams): LML + log-normal prior density."""

    def __init__(self, d2, resid, prior_log_means, prior_log_sds, jitter_scale):
        self.d2 = d2
        self.resid = resid
        self.mu = np.asarray(prior_log_means, dtype=float)
        self.sd = np.asarray(prior_log_sds, dtype=float)
        self.jitter_scale = jitter_scale

    def _log_prior(self, z):
        u = (z - self.mu) / self.sd
        return float(np.sum(-0.5 * u * u - np.log(self.sd) - 0.5 * LOG_2PI))

    @staticmethod
    def _check(z):
        # exp(z) must stay finite; far outside this box the trial step is junk
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 50.0:
            raise IllConditionedKernel(f"log-hyperparameters out of range: {z}")

    def value(self, z) -> float:
        self._check(z)
        lml = backends.lml_value(self.d2, self.resid, z[0], z[1], z[2], self.jitter_scale)
        return lml + self._log_prior(z)

    def value_grad(self, z):
        self._check(z)
        lml, g = backends.lml_value_grad(
            self.d2, self.resid, z[0], z[1], z[2], self.jitter_scale
        )
        return lml + self._log_prior(z), g - (z - self.mu) / (self.sd * self.sd)


def _ascend(objective: _MapObjective, z0, max_iter: int, grad_tol: float):
    """Gradient ascent with backtracking (and expanding) line search.

    Terminates when the gradient infinity-norm falls below ``grad_tol``, at
    the iteration cap, or when no uphill step exists within float precision.
    Returns (z, value, grad_inf_norm, status).
    """
    z = np.asarray(z0, dtype=float).copy()
    f, g = objective.value_grad(z)
    step = 1.0
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < grad_tol:
            return z, f, gnorm, "tol"
        gg = float(g @ g)
        t = step
        f_t = -np.inf
        accepted = False
        for _ in range(50):
            try:
                f_t = objective.value(z + t * g)
            except IllConditionedKernel:
                f_t = -np.inf
            if np.isfinite(f_t) and f_t >= f + 1e-4 * t * gg:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return z, f, gnorm, "stalled"
        # try to expand while the objective keeps improving
        for _ in range(8):
            try:
                f_2t = objective.value(z + 2.0 * t * g)
            except IllConditionedKernel:
                break
            if not (np.isfinite(f_2t) and f_2t > f_t):
                break
            t *= 2.0
            f_t = f_2t
        z = z + t * g
        f, g = objective.value_grad(z)
        step = t
    gnorm = float(np.max(np.abs(g)))
    return z, f, gnorm, "max_iter"


def fit(series: PatientSeries, config: FitConfig = FitConfig()) -> GprModel:
    """MAP-fit a GP to one patient's series.

    Deterministic for a fixed (series, config). A single-observation series
    skips optimization and uses the prior medians.
    """
    x = np.asarray(series.ages, dtype=np.float64)
    y = np.asarray(series.values, dtype=np.float64)
    n = len(x)
    prior_mean = float(np.mean(y))

    sf2_median = max(float(np.var(y, ddof=1)) if n >= 2 else 0.0,
                     config.signal_variance_floor)
    mu = np.log([config.length_scale_median, sf2_median, config.noise_variance_median])
    sd = np.array([config.length_scale_log_sd, config.signal_variance_log_sd,
                   config.noise_variance_log_sd])

    if n == 1:
        hp = Hyperparams(config.length_scale_median, sf2_median,
                         config.noise_variance_median)
        return GprModel.build(x, y, prior_mean, hp, config.jitter)

    d2 = _pairwise_sq(x)
    resid = y - prior_mean
    rng = np.random.default_rng(config.seed)
    starts = [mu] + [mu + sd * rng.standard_normal(3)
                     for _ in range(config.n_restarts - 1)]

    best = None
    diagnostics = []
    for z0 in starts:
        jitter = config.jitter
        result = None
        while True:
            objective = _MapObjective(d2, resid, mu, sd, jitter)
            try:
                result = _ascend(objective, z0, config.max_iter, config.grad_tol)
                break
            except IllConditionedKernel:
                jitter *= 2.0
                if jitter > config.jitter_max:
                    break
        if result is None:
            diagnostics.append({"start": z0.tolist(), "error": "ill-conditioned"})
            continue
        z, f, gnorm, status = result
        diagnostics.append({"start": z0.tolist(), "value": f, "grad_inf": gnorm,
                            "status": status})
        if np.isfinite(f) and (best is None or f > best[1]):
            best = (z, f, jitter)

    if best is None:
        raise FitError(f"fit diverged for series {series.id!r}: {diagnostics}")
    z, _, jitter = best
    return GprModel.build(x, y, prior_mean, Hyperparams.from_log_vector(z), jitter)


def posterior_grid(model: GprModel, xs) -> tuple:
    """Posterior means and variances at many query ages (vectorized predict)."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    k_star = backends.se_cross(xs, model.train_x, model.hp.length_scale,
                               model.hp.signal_variance)
    means = model.prior_mean + k_star @ model.alpha
    v = solve_triangular(model.factor, k_star.T, lower=True)
    variances = model.hp.signal_variance - np.einsum("ij,ij->j", v, v)
    return means, np.maximum(variances, 0.0)


def predict(model: GprModel, x_star: float) -> Posterior:
    """Posterior mean and variance at a single query age."""
    means, variances = posterior_grid(model, np.array([x_star], dtype=np.float64))
    return Posterior(float(means[0]), float(variances[0]))


def _uniform_grid(lo: float, hi: float) -> np.ndarray:
    return np.linspace(lo, hi, GRID_SIZE)


def resample_fixed_range(model: GprModel) -> Resampled:
    """50 posterior means on the shared 30-90 year grid (endpoints included)."""
    grid = _uniform_grid(*FIXED_RANGE)
    means, variances = posterior_grid(model, grid)
    return Resampled(grid, means, variances, Regime.FIXED_30_90)


def resample_in_range(model: GprModel, series: PatientSeries) -> Resampled:
    """50 posterior means on the patient's own observed age range."""
    ages = series.ages
    lo, hi = min(ages), max(ages)
    if len(ages) < 2 or lo == hi:
        raise DegenerateRangeError(
            f"series {series.id!r} needs >= 2 distinct ages for in-range resampling"
        )
    grid = _uniform_grid(lo, hi)
    means, variances = posterior_grid(model, grid)
    return Resampled(grid, means, variances, Regime.IN_RANGE)


def write_plot_data(path, resampled: Resampled, series: PatientSeries,
                    meta: Mapping | None = None):
    """Emit the plot-band CSV: mean with the 95% interval, then raw points."""
    sd = np.sqrt(resampled.variances)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["age", "mean", "lower95", "upper95"])
        for a, m, s in zip(resampled.grid, resampled.values, sd):
            writer.writerow([repr(float(a)), repr(float(m)),
                             repr(float(m - 1.96 * s)), repr(float(m + 1.96 * s))])
        writer.writerow(["obs_age", "obs_egfr"])
        for obs in series.observations:
            writer.writerow([repr(obs.age), repr(obs.egfr)])
