"""Dispatch to the compiled kernels, falling back to NumPy/SciPy.

The compiled extension is used when it imports; set ``LDIVEC_PURE_PYTHON=1``
to force the fallback. :func:`use` switches at runtime (tests and the
benchmark compare both).
"""

import os
from contextlib import contextmanager

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("LDIVEC_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_IMPLS = {"python": _kernels_py}
if _compiled is not None:
    _IMPLS["cython"] = _compiled

_active = _IMPLS.get("cython", _kernels_py)


def available():
    return sorted(_IMPLS)


def active():
    return "cython" if _active is _compiled and _compiled is not None else "python"


def set_backend(name):
    global _active
    try:
        _active = _IMPLS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available()}") from None


@contextmanager
def use(name):
    global _active
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        _active = prev


def _c(x, ndim):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {x.shape}")
    return x


def posteriors(n, a, grams, W, means):
    """Shared covariance (S, R, R) and per-language means (S, L, R) of every segment."""
    return _active.posteriors(_c(n, 2), _c(a, 2), _c(grams, 3), _c(W, 2), _c(means, 2))


def ld_scores(n, a, grams, W, means):
    return _active.ld_scores(_c(n, 2), _c(a, 2), _c(grams, 3), _c(W, 2), _c(means, 2))


def cpf_scores(n, a, grams, W, means):
    return _active.cpf_scores(_c(n, 2), _c(a, 2), _c(grams, 3), _c(W, 2), _c(means, 2))


def classical_ivectors(n, a, grams):
    return _active.classical_ivectors(_c(n, 2), _c(a, 2), _c(grams, 3))
