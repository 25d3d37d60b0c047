import numpy as np
import pytest

from trendeq.gpr import FitConfig, GprModel, Hyperparams
from trendeq.timeseries import build_series


@pytest.fixture(scope="session")
def small_cohort():
    """Deterministic 40-patient cohort with moderate fits, for harness tests."""
    from trendeq.synth import CohortConfig, generate_cohort

    return generate_cohort(CohortConfig(n_patients=40, seed=123))


def random_model(rng, n=None):
    """GprModel with random data and sane random hyperparameters."""
    if n is None:
        n = int(rng.integers(2, 11))
    x = np.sort(rng.uniform(30.0, 90.0, n))
    while np.any(np.diff(x) <= 0):
        x = np.sort(rng.uniform(30.0, 90.0, n))
    y = rng.uniform(30.0, 100.0, n)
    hp = Hyperparams(
        length_scale=float(rng.uniform(1.0, 15.0)),
        signal_variance=float(rng.uniform(5.0, 150.0)),
        noise_variance=float(rng.uniform(0.5, 10.0)),
    )
    return GprModel.build(x, y, float(np.mean(y)), hp, 1e-9)


def series_from_arrays(pid, x, y):
    return build_series(pid, np.asarray(x).tolist(), np.asarray(y).tolist())
