"""Exception types shared across the package."""


class TrendeqError(Exception):
    """Base class for all trendeq errors."""


class DataFormatError(TrendeqError):
    """A CSV file violates the expected format or value constraints."""


class IllConditionedKernel(TrendeqError):
    """Kernel matrix factorization failed; retry with a larger jitter."""


class FitError(TrendeqError):
    """Hyperparameter optimization failed on every restart."""


class DegenerateRangeError(TrendeqError):
    """Series has fewer than two distinct ages; no in-range grid exists."""


class ConvergenceError(TrendeqError):
    """Iterative solver hit its iteration cap before reaching tolerance."""
