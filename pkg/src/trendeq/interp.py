"""Linear-interpolation baseline for trend equalization.

Produces the same 50-point uniform grid as the GP in-range regime, with the
piecewise-linear interpolant of the raw observations instead of a posterior
mean. No extrapolation: the grid never leaves the observed age range.
"""

import numpy as np

from .errors import DegenerateRangeError
from .gpr import GRID_SIZE, Regime, Resampled
from .timeseries import PatientSeries


def linear_resample(series: PatientSeries) -> Resampled:
    """Resample 50 evenly spaced values over the observed age range."""
    ages = np.asarray(series.ages, dtype=np.float64)
    values = np.asarray(series.values, dtype=np.float64)
    if len(ages) < 2 or ages[0] == ages[-1]:
        raise DegenerateRangeError(
            f"series {series.id!r} needs >= 2 distinct ages for linear resampling"
        )
    grid = np.linspace(ages[0], ages[-1], GRID_SIZE)
    resampled = np.interp(grid, ages, values)
    return Resampled(grid, resampled, np.zeros(GRID_SIZE), Regime.LINEAR_IN_RANGE)
