"""trendeq: equalize irregular eGFR time series and classify trend stability.

Pipeline: per-patient Gaussian-process regression (or a linear-interpolation
baseline) resamples each irregular series to a fixed-size vector; K-NN and
SVM classifiers then label the trend stable or unstable. Includes a
synthetic cohort generator and a cross-validated evaluation harness.
"""

from .backends import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
