"""Numerical kernel backends.

The compiled extension (``_speedups``, built from Cython) is preferred when
available; otherwise the numpy implementation in :mod:`pure` is used. Set
``TRENDEQ_PURE=1`` to force the fallback, e.g. for benchmarking.

Both backends expose the same functions with identical semantics:
``se_gram``, ``se_cross``, ``sq_dists``, ``lml_value``, ``lml_value_grad``
and ``smo_solve``.
"""

import os

from . import pure

if os.environ.get("TRENDEQ_PURE", "").strip() not in ("", "0"):
    _impl = pure
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = pure

se_gram = _impl.se_gram
se_cross = _impl.se_cross
sq_dists = _impl.sq_dists
lml_value = _impl.lml_value
lml_value_grad = _impl.lml_value_grad
smo_solve = _impl.smo_solve


def active_backend() -> str:
    """Name of the backend in use: 'compiled' or 'pure'."""
    return "pure" if _impl is pure else "compiled"


def compiled_backend():
    """The compiled module, or None when the extension is not built."""
    try:
        from . import _speedups
    except ImportError:
        return None
    return _speedups
