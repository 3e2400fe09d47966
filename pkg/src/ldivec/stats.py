"""Sufficient statistics of a segment under the frozen UBM alignment.

Each segment is reduced to its zero-order counts ``n`` (one per component)
and the projected first-order statistic ``a = sum_i T_i' f_i``. The data part
of the posterior precision, ``B = sum_i n_i T_i'T_i``, is rebuilt from ``n``
and the Grams whenever it is needed, so ``f_i`` never has to be stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import arrays_io
from .errors import DimensionMismatch, ManifestError, ValidationError

UNLABELED = -1
LOG_2PI = np.log(2.0 * np.pi)


def _as_frames(frames, dim):
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        return frames.reshape(0, dim)
    frames = np.atleast_2d(frames)
    if frames.shape[1] != dim:
        raise DimensionMismatch(f"frames have dimension {frames.shape[1]}, UBM expects {dim}")
    if not np.all(np.isfinite(frames)):
        raise ValidationError("frames contain non-finite values")
    return frames


def whiten(frames, ubm) -> np.ndarray:
    """Centre and whiten every frame against every component: (Nc, T, D)."""
    frames = _as_frames(frames, ubm.dim)
    out = np.empty((ubm.n_components,) + frames.shape)
    for i in range(ubm.n_components):
        centred = (frames - ubm.means[i]).T
        out[i] = linalg.solve_triangular(ubm.cov_factors[i], centred, lower=True).T
    return out


def _log_densities(white, ubm):
    # log w_i + log N(x | mu_i, Sigma_i), shape (T, Nc)
    D = ubm.dim
    logdet = np.log(np.diagonal(ubm.cov_factors, axis1=1, axis2=2)).sum(axis=1)
    maha = np.einsum("itd,itd->ti", white, white)
    return np.log(ubm.weights) - 0.5 * D * LOG_2PI - logdet - 0.5 * maha


def responsibilities(frames, ubm, prune=None, white=None) -> np.ndarray:
    """UBM component posteriors per frame, shape (T, Nc).

    ``prune`` drops posteriors below the threshold and renormalises.
    """
    if white is None:
        white = whiten(frames, ubm)
    lp = _log_densities(white, ubm)
    if lp.shape[0] == 0:
        return lp
    q = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    if prune is not None and prune > 0:
        q[q < prune] = 0.0
    # Renormalise so rows sum to one to rounding.
    q /= q.sum(axis=1, keepdims=True)
    return q


@dataclass
class SegmentStats:
    n: np.ndarray
    a: np.ndarray
    label: int = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64).reshape(-1)
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if self.label is not None and self.label < 0:
            self.label = None
        if np.any(self.n < 0):
            raise ValidationError("zero-order counts must be nonnegative")
        if not (np.all(np.isfinite(self.n)) and np.all(np.isfinite(self.a))):
            raise ValidationError("statistics must be finite")

    def scaled(self, k):
        """Statistics of a segment ``k`` times as long with the same alignment profile."""
        return SegmentStats(self.n * k, self.a * k, self.label)


def accumulate(frames, q, ubm, tmat, white=None) -> SegmentStats:
    frames = _as_frames(frames, ubm.dim)
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        q = q.reshape(0, ubm.n_components)
    if q.shape != (frames.shape[0], ubm.n_components) or tmat.n_components != ubm.n_components:
        raise DimensionMismatch("frames, responsibilities, UBM and T disagree in shape")
    if tmat.feat_dim != ubm.dim:
        raise DimensionMismatch("UBM and T disagree on feature dimension")
    if white is None:
        white = whiten(frames, ubm)
    n = q.sum(axis=0)
    f = np.einsum("ti,itd->id", q, white)
    a = np.einsum("idr,id->r", tmat.blocks, f)
    return SegmentStats(n, a)


def segment_stats(frames, ubm, tmat, label=None, prune=None) -> SegmentStats:
    """Responsibilities plus accumulation, whitening each frame once."""
    white = whiten(frames, ubm)
    q = responsibilities(frames, ubm, prune=prune, white=white)
    st = accumulate(frames, q, ubm, tmat, white=white)
    st.label = label
    return st


def precision_term(n, tmat) -> np.ndarray:
    """``B = sum_i n_i G_i``; ``n`` may be one vector or a stack (S, Nc)."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape[-1] != tmat.n_components:
        raise DimensionMismatch(f"{n.shape[-1]} counts for {tmat.n_components} components")
    if np.any(n < 0):
        raise ValidationError("zero-order counts must be nonnegative")
    return np.tensordot(n, tmat.grams, axes=(-1, 0))


# -- datasets ---------------------------------------------------------------


@dataclass
class StatsDataset:
    """Stacked per-segment statistics with integer labels (``-1`` = unlabeled)."""

    n: np.ndarray
    a: np.ndarray
    labels: np.ndarray = None
    languages: list = field(default_factory=list)

    def __post_init__(self):
        self.n = np.atleast_2d(np.asarray(self.n, dtype=np.float64))
        self.a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        S = self.n.shape[0]
        if self.a.shape[0] != S:
            raise DimensionMismatch(f"{S} count rows but {self.a.shape[0]} projected-stat rows")
        if self.labels is None:
            self.labels = np.full(S, UNLABELED, dtype=np.int64)
        self.labels = _as_labels(self.labels, S, len(self.languages))
        self.languages = [str(x) for x in self.languages]
        if np.any(self.n < 0):
            raise ValidationError("zero-order counts must be nonnegative")
        if not (np.all(np.isfinite(self.n)) and np.all(np.isfinite(self.a))):
            raise ValidationError("statistics must be finite")

    def __len__(self):
        return self.n.shape[0]

    def __getitem__(self, s):
        lab = int(self.labels[s])
        return SegmentStats(self.n[s], self.a[s], None if lab < 0 else lab)

    @property
    def labeled(self):
        return self.labels >= 0

    @classmethod
    def from_segments(cls, segments, languages=()):
        segments = list(segments)
        if not segments:
            raise ValidationError("dataset needs at least one segment")
        labels = [UNLABELED if s.label is None else s.label for s in segments]
        return cls(
            np.stack([s.n for s in segments]),
            np.stack([s.a for s in segments]),
            np.asarray(labels, dtype=np.int64),
            list(languages),
        )

    def subset(self, index):
        return StatsDataset(self.n[index], self.a[index], self.labels[index], self.languages)


@dataclass
class IvectorDataset:
    """Classical i-vectors stored with the zero-order counts that produced them."""

    ivectors: np.ndarray
    n: np.ndarray
    labels: np.ndarray = None
    languages: list = field(default_factory=list)

    def __post_init__(self):
        self.ivectors = np.atleast_2d(np.asarray(self.ivectors, dtype=np.float64))
        self.n = np.atleast_2d(np.asarray(self.n, dtype=np.float64))
        S = self.ivectors.shape[0]
        if self.n.shape[0] != S:
            raise DimensionMismatch(f"{S} i-vectors but {self.n.shape[0]} count rows")
        if self.labels is None:
            self.labels = np.full(S, UNLABELED, dtype=np.int64)
        self.labels = _as_labels(self.labels, S, len(self.languages))
        self.languages = [str(x) for x in self.languages]

    def __len__(self):
        return self.ivectors.shape[0]


def _as_labels(labels, S, L):
    labels = np.asarray(labels)
    if labels.shape != (S,):
        raise DimensionMismatch(f"expected {S} labels, got shape {labels.shape}")
    if labels.size and np.any(labels != np.round(labels)):
        raise ValidationError("labels must be integers")
    labels = labels.astype(np.int64)
    if np.any(labels < UNLABELED):
        raise ValidationError("label indices must be >= -1")
    if labels.size and labels.max() >= L:
        raise ValidationError(f"label index {labels.max()} out of range for L = {L}")
    return labels


def _label_dims(languages):
    return {"L": len(languages)} if languages else {}


def save_stats(dataset: StatsDataset, path) -> Path:
    S, Nc = dataset.n.shape
    return arrays_io.save_bundle(
        path, "stats",
        {"n": dataset.n, "a": dataset.a, "labels": dataset.labels.astype(np.float64)},
        dims={"S": S, "Nc": Nc, "R": dataset.a.shape[1], **_label_dims(dataset.languages)},
        labels=dataset.languages,
    )


def load_stats(path) -> StatsDataset:
    shapes = {"n": ("S", "Nc"), "a": ("S", "R"), "labels": ("S",)}
    m, arrs = arrays_io.load_bundle(path, kind="stats", shapes=shapes)
    return StatsDataset(arrs["n"], arrs["a"], arrs["labels"], m.labels)


def save_ivectors(dataset: IvectorDataset, path) -> Path:
    S, Nc = dataset.n.shape
    return arrays_io.save_bundle(
        path, "ivectors",
        {"ivectors": dataset.ivectors, "n": dataset.n, "labels": dataset.labels.astype(np.float64)},
        dims={"S": S, "Nc": Nc, "R": dataset.ivectors.shape[1], **_label_dims(dataset.languages)},
        labels=dataset.languages,
    )


def load_ivectors(path) -> IvectorDataset:
    m = arrays_io.read_manifest(path)
    if m.kind == "ivectors" and "n" not in m.arrays:
        raise ManifestError(f"{path}: i-vectors need their zero-order counts (array n)")
    shapes = {"ivectors": ("S", "R"), "n": ("S", "Nc"), "labels": ("S",)}
    m, arrs = arrays_io.load_bundle(path, kind="ivectors", shapes=shapes)
    return IvectorDataset(arrs["ivectors"], arrs["n"], arrs["labels"], m.labels)


# -- raw feature collections --------------------------------------------------

FEATURES_MANIFEST = "features.manifest"
EMPTY_SEGMENT = "-"


def save_features(directory, segments, labels=None, languages=()) -> Path:
    """Write one ``.ldiv`` matrix per segment plus ``features.manifest``.

    Empty segments have no array file; their entry is ``-``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    S = len(segments)
    if S == 0:
        raise ValidationError("no segments to save")
    D = None
    fields = {}
    for s, frames in enumerate(segments):
        frames = np.asarray(frames, dtype=np.float64)
        key = f"segment.{s:06d}"
        if frames.size == 0:
            fields[key] = EMPTY_SEGMENT
            continue
        D = frames.shape[1] if D is None else D
        fname = f"seg{s:06d}{arrays_io.ARRAY_SUFFIX}"
        arrays_io.write_array(directory / fname, frames)
        fields[key] = fname
    if labels is None:
        labels = np.full(S, UNLABELED)
    path = directory / FEATURES_MANIFEST
    arrays_io.save_bundle(
        path, "features", {"labels": np.asarray(labels, dtype=np.float64)},
        dims={"S": S, **({"D": D} if D else {}), **_label_dims(languages)},
        labels=languages, fields=fields,
    )
    return path


def load_features(directory):
    """Return ``(segments, labels, languages)`` from a features directory."""
    directory = Path(directory)
    path = directory / FEATURES_MANIFEST
    if not path.is_file():
        raise ValidationError(f"{directory} holds no {FEATURES_MANIFEST}")
    m, arrs = arrays_io.load_bundle(path, kind="features", shapes={"labels": ("S",)})
    S = m.dim("S")
    D = m.dims.get("D")
    segments = []
    for s in range(S):
        ref = m.fields.get(f"segment.{s:06d}")
        if ref is None:
            raise ManifestError(f"{path}: segment {s} not listed")
        if ref == EMPTY_SEGMENT:
            segments.append(np.zeros((0, D or 0)))
            continue
        p = directory / ref
        if not p.is_file():
            raise ManifestError(f"{path}: segment {s} refers to missing file {ref}")
        frames = arrays_io.read_array(p)
        if frames.ndim != 2 or (D is not None and frames.shape[1] != D):
            raise DimensionMismatch(f"{p}: shape {frames.shape} does not match D = {D}")
        segments.append(frames)
    labels = _as_labels(arrs["labels"], S, len(m.labels))
    return segments, labels, m.labels


def stats_from_features(segments, labels, languages, ubm, tmat, prune=None) -> StatsDataset:
    stats = [
        segment_stats(frames, ubm, tmat, label=int(lab), prune=prune)
        for frames, lab in zip(segments, labels)
    ]
    return StatsDataset.from_segments(stats, languages)
