"""Binary trend classifiers: 3-NN with Euclidean distance and an RBF SVM.

Both classifiers standardize features per dimension, with statistics fitted
on the training data only (disable with ``scale=False``). The SVM dual is
solved by sequential minimal optimization with maximal-violating-pair
selection; the decision rule maps f(x) >= 0 to the stable class (y = 1).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import backends
from .errors import ConvergenceError
from .timeseries import BinaryLabel

KKT_TOL = 1e-3
MAX_ITER_FACTOR = 100

_SUPPORT_EPS = 1e-12


@dataclass(frozen=True)
class Scaler:
    """Per-dimension z-score transform; zero-spread dimensions pass through."""

    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Scaler":
        means = x.mean(axis=0)
        sds = x.std(axis=0, ddof=0)
        sds = np.where(sds > 0.0, sds, 1.0)
        return cls(means, sds)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.means) / self.sds

    @classmethod
    def identity(cls, width: int) -> "Scaler":
        return cls(np.zeros(width), np.ones(width))


def _unpack(data) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray([np.asarray(v, dtype=np.float64) for v, _ in data])
    labels = np.asarray([1.0 if lab is BinaryLabel.STABLE else -1.0 for _, lab in data])
    if x.ndim != 2:
        raise ValueError("training vectors differ in length")
    return x, labels


@dataclass(frozen=True)
class KnnModel:
    k: int
    train_x: np.ndarray              # standardized
    train_labels: np.ndarray         # +1 stable / -1 unstable
    scaler: Scaler
    train_ids: Optional[tuple] = None

    def __post_init__(self):
        if self.k % 2 == 0:
            raise ValueError("k must be odd to avoid vote ties")
        if len(self.train_x) < self.k:
            raise ValueError(f"need at least k={self.k} training points")


def knn_train(data: Sequence, k: int = 3, scale: bool = True,
              ids: Optional[Sequence[str]] = None) -> KnnModel:
    x, labels = _unpack(data)
    scaler = Scaler.fit(x) if scale else Scaler.identity(x.shape[1])
    return KnnModel(k, scaler.transform(x), labels, scaler,
                    tuple(ids) if ids is not None else None)


def knn_predict(model: KnnModel, x) -> BinaryLabel:
    """Majority label of the k nearest training points.

    Distance ties are broken by the lower training index (stable argsort),
    so predictions are reproducible for any training-data order.
    """
    q = np.asarray(x, dtype=np.float64)
    if q.shape != (model.train_x.shape[1],):
        raise ValueError(
            f"query has dimension {q.shape}, training data {model.train_x.shape[1]}"
        )
    d2 = backends.sq_dists(model.scaler.transform(q)[None, :], model.train_x)[0]
    nearest = np.argsort(d2, kind="stable")[: model.k]
    vote = float(np.sum(model.train_labels[nearest]))
    return BinaryLabel.STABLE if vote > 0 else BinaryLabel.UNSTABLE


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray      # standardized
    dual_coeffs: np.ndarray          # alpha_i * y_i
    bias: float
    kernel_sigma: float
    c: float
    scaler: Scaler
    train_ids: Optional[tuple] = None
    n_iter: int = 0


def _rbf_cross(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(backends.sq_dists(a, b) / (-2.0 * sigma * sigma))


def svm_train(data: Sequence, sigma: float = 10.0, c: float = 1.0,
              scale: bool = True, ids: Optional[Sequence[str]] = None) -> SvmModel:
    """Train a soft-margin RBF SVM by SMO.

    Stops when every KKT violation is below 1e-3; raises ConvergenceError if
    the 100*n iteration cap is reached first.
    """
    x, labels = _unpack(data)
    if np.all(labels > 0) or np.all(labels < 0):
        raise ValueError("training data contains a single class")
    scaler = Scaler.fit(x) if scale else Scaler.identity(x.shape[1])
    xs = scaler.transform(x)
    gram = _rbf_cross(xs, xs, sigma)
    max_iter = MAX_ITER_FACTOR * len(labels)
    alpha, bias, n_iter, violation = backends.smo_solve(
        gram, labels, c, KKT_TOL, max_iter
    )
    if n_iter >= max_iter and violation > KKT_TOL:
        raise ConvergenceError(
            f"SMO hit the {max_iter}-iteration cap; worst KKT violation {violation:g}"
        )
    support = alpha > _SUPPORT_EPS
    return SvmModel(
        support_vectors=xs[support],
        dual_coeffs=(alpha * labels)[support],
        bias=float(bias),
        kernel_sigma=float(sigma),
        c=float(c),
        scaler=scaler,
        train_ids=tuple(ids) if ids is not None else None,
        n_iter=int(n_iter),
    )


def svm_decision(model: SvmModel, x) -> float:
    q = np.asarray(x, dtype=np.float64)
    if q.shape != (model.support_vectors.shape[1],):
        raise ValueError(
            f"query has dimension {q.shape}, model expects "
            f"{model.support_vectors.shape[1]}"
        )
    k = _rbf_cross(model.scaler.transform(q)[None, :], model.support_vectors,
                   model.kernel_sigma)[0]
    return float(k @ model.dual_coeffs + model.bias)


def svm_predict(model: SvmModel, x) -> BinaryLabel:
    """Decision rule: f(x) >= 0 is stable (y = 1), otherwise unstable."""
    return BinaryLabel.STABLE if svm_decision(model, x) >= 0.0 else BinaryLabel.UNSTABLE


def describe(model: SvmModel) -> str:
    """Plain-text model dump for debugging."""
    return (
        f"svm: support_vectors={len(model.support_vectors)} "
        f"bias={model.bias:.6g} sigma={model.kernel_sigma:g} c={model.c:g} "
        f"iterations={model.n_iter}"
    )
