"""Model parameter containers and their persistence.

The UBM and factor-loading matrix are fixed inputs; the backend (language
means plus shared within-class precision) is what training estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import arrays_io
from .errors import (
    DimensionMismatch,
    InvalidWeights,
    ManifestError,
    NotPositiveDefinite,
    ValidationError,
)

GRAM_RTOL = 1e-12
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class Dims:
    D: int
    R: int
    Nc: int
    L: int = 1

    def __post_init__(self):
        for name in ("D", "R", "Nc", "L"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"dimension {name} must be >= 1")


@dataclass
class Ubm:
    """Diagonal or full-covariance GMM.

    ``cov_factors[i]`` is the lower Cholesky factor of component ``i``'s
    covariance; frames are whitened by a triangular solve against it.
    """

    weights: np.ndarray
    means: np.ndarray
    cov_factors: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.cov_factors = np.asarray(self.cov_factors, dtype=np.float64)
        self.validate()

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def validate(self):
        w, mu, L = self.weights, self.means, self.cov_factors
        if w.ndim != 1:
            raise DimensionMismatch("UBM weights must be a vector")
        nc = w.shape[0]
        if mu.shape[0] != nc:
            raise DimensionMismatch(f"{nc} weights but {mu.shape[0]} component means")
        d = mu.shape[1]
        if L.shape != (nc, d, d):
            raise DimensionMismatch(f"cov_factors shape {L.shape}, expected {(nc, d, d)}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidWeights("UBM weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidWeights(f"UBM weights sum to {w.sum()!r}, not 1")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(L))):
            raise ValidationError("UBM parameters must be finite")
        if np.any(np.triu(L, 1) != 0):
            raise ValidationError("cov_factors must be lower triangular")
        if np.any(np.diagonal(L, axis1=1, axis2=2) <= 0):
            raise NotPositiveDefinite("cov_factors need a strictly positive diagonal")


@dataclass
class TMatrix:
    """Per-component factor-loading blocks ``T_i`` (Nc x D x R) and Grams ``T_i'T_i``."""

    blocks: np.ndarray
    grams: np.ndarray = None

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=np.float64)
        if self.blocks.ndim != 3:
            raise DimensionMismatch("T blocks must have shape (Nc, D, R)")
        if not np.all(np.isfinite(self.blocks)):
            raise ValidationError("T blocks must be finite")
        fresh = compute_grams(self.blocks)
        if self.grams is None:
            self.grams = fresh
        else:
            self.grams = np.asarray(self.grams, dtype=np.float64)
            if self.grams.shape != fresh.shape:
                raise DimensionMismatch(f"grams shape {self.grams.shape}, expected {fresh.shape}")
            scale = max(1.0, float(np.abs(self.grams).max()))
            if np.abs(self.grams - fresh).max() > GRAM_RTOL * scale:
                raise ValidationError("stored grams disagree with T_i'T_i")

    @property
    def n_components(self):
        return self.blocks.shape[0]

    @property
    def feat_dim(self):
        return self.blocks.shape[1]

    @property
    def rank(self):
        return self.blocks.shape[2]


def compute_grams(blocks):
    blocks = np.asarray(blocks, dtype=np.float64)
    return np.einsum("idr,ids->irs", blocks, blocks)


@dataclass
class Backend:
    """Language means (L x R), shared within-class precision W (R x R) and labels."""

    means: np.ndarray
    precision: np.ndarray
    labels: list = field(default=None)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.precision = np.atleast_2d(np.asarray(self.precision, dtype=np.float64))
        if self.labels is None:
            self.labels = [f"lang{i}" for i in range(self.means.shape[0])]
        self.labels = [str(lab) for lab in self.labels]
        self.validate()

    @property
    def n_languages(self):
        return self.means.shape[0]

    @property
    def rank(self):
        return self.means.shape[1]

    def validate(self):
        R = self.means.shape[1]
        W = self.precision
        if W.shape != (R, R):
            raise DimensionMismatch(f"precision shape {W.shape}, expected {(R, R)}")
        if len(self.labels) != self.means.shape[0]:
            raise DimensionMismatch(f"{len(self.labels)} labels for {self.means.shape[0]} means")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(self.means))):
            raise ValidationError("backend parameters must be finite")
        if np.abs(W - W.T).max() > SYMMETRY_TOL:
            raise NotPositiveDefinite("precision is not symmetric")
        try:
            linalg.cholesky(W, lower=True)
        except linalg.LinAlgError:
            raise NotPositiveDefinite("precision is not positive definite") from None


# -- persistence ------------------------------------------------------------

_KINDS = {Ubm: "ubm", TMatrix: "tmatrix", Backend: "backend"}


def save_model(model, directory, name=None) -> Path:
    """Save ``model`` as ``<directory>/<name>.manifest`` (``name`` defaults to the kind)."""
    try:
        kind = _KINDS[type(model)]
    except KeyError:
        raise TypeError(f"cannot save {type(model).__name__}") from None
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name or kind}{arrays_io.MANIFEST_SUFFIX}"
    if kind == "ubm":
        nc, d = model.means.shape
        return arrays_io.save_bundle(
            path, kind,
            {"weights": model.weights, "means": model.means, "cov_factors": model.cov_factors},
            dims={"D": d, "Nc": nc},
        )
    if kind == "tmatrix":
        nc, d, r = model.blocks.shape
        return arrays_io.save_bundle(
            path, kind, {"blocks": model.blocks, "grams": model.grams},
            dims={"D": d, "R": r, "Nc": nc},
        )
    L, r = model.means.shape
    return arrays_io.save_bundle(
        path, kind, {"means": model.means, "precision": model.precision},
        dims={"R": r, "L": L}, labels=model.labels,
    )


def load_model(manifest, kind=None):
    """Load a ``ubm``, ``tmatrix`` or ``backend`` manifest, checking all invariants."""
    kinds = kind or ("ubm", "tmatrix", "backend")
    m = arrays_io.read_manifest(manifest)
    if m.kind == "ubm":
        shapes = {"weights": ("Nc",), "means": ("Nc", "D"), "cov_factors": ("Nc", "D", "D")}
    elif m.kind == "tmatrix":
        shapes = {"blocks": ("Nc", "D", "R")}
        if "grams" in m.arrays:
            shapes["grams"] = ("Nc", "R", "R")
    elif m.kind == "backend":
        shapes = {"means": ("L", "R"), "precision": ("R", "R")}
    else:
        shapes = None
    m, arrs = arrays_io.load_bundle(manifest, kind=kinds, shapes=shapes)
    if m.kind == "ubm":
        return Ubm(arrs["weights"], arrs["means"], arrs["cov_factors"])
    if m.kind == "tmatrix":
        return TMatrix(arrs["blocks"], arrs.get("grams"))
    if not m.labels:
        raise ManifestError("backend manifest needs language labels")
    return Backend(arrs["means"], arrs["precision"], m.labels)


def check_compatible(ubm=None, tmat=None, backend=None):
    """Raise :class:`DimensionMismatch` if the given models disagree on D, Nc or R."""
    if ubm is not None and tmat is not None:
        if (ubm.n_components, ubm.dim) != (tmat.n_components, tmat.feat_dim):
            raise DimensionMismatch(
                f"UBM has Nc={ubm.n_components}, D={ubm.dim}; "
                f"T has Nc={tmat.n_components}, D={tmat.feat_dim}"
            )
    if tmat is not None and backend is not None and tmat.rank != backend.rank:
        raise DimensionMismatch(f"T has R={tmat.rank}, backend has R={backend.rank}")
