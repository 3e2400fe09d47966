"""Language scores.

Three scorers share the same statistics pipeline:

``ld``
    Variational bound with the language-dependent posterior, language-independent
    terms dropped. Exactly zero for a segment with no frames.
``cpf``
    Integrates the i-vector out under the classical (standard-normal prior)
    posterior, which leaves a language-dependent offset at zero frames.
``lgbe``
    Linear Gaussian backend applied to the classical i-vector point estimate;
    the long-segment limit of both.

Only differences between languages are meaningful; absolute values of
different scorers are not comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import arrays_io, kernels
from .errors import DimensionMismatch, ValidationError
from .posterior import ClassicalIvector, classical_ivectors, recover_natural_mean
from .stats import IvectorDataset, SegmentStats, StatsDataset

SCORERS = ("ld", "cpf", "lgbe")


@dataclass
class ScoreMatrix:
    scores: np.ndarray
    scorer_kind: str
    labels: np.ndarray = None
    languages: list = None

    def __post_init__(self):
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        if self.scorer_kind not in SCORERS:
            raise ValidationError(f"unknown scorer {self.scorer_kind!r}")
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError("scores must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.scores.shape[0],):
                raise DimensionMismatch("one label per score row required")


def _check_stats(n, a, backend, tmat):
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(a))):
        raise ValidationError("statistics must be finite")
    if a.shape[-1] != backend.rank or tmat.rank != backend.rank:
        raise DimensionMismatch(
            f"stats R={a.shape[-1]}, T R={tmat.rank}, backend R={backend.rank}"
        )
    if n.shape[-1] != tmat.n_components:
        raise DimensionMismatch(f"{n.shape[-1]} counts for {tmat.n_components} components")


def ld_score(stats: SegmentStats, backend, tmat) -> np.ndarray:
    _check_stats(stats.n, stats.a, backend, tmat)
    return kernels.ld_scores(
        stats.n[None], stats.a[None], tmat.grams, backend.precision, backend.means
    )[0]


def cpf_score(stats: SegmentStats, backend, tmat) -> np.ndarray:
    _check_stats(stats.n, stats.a, backend, tmat)
    return kernels.cpf_scores(
        stats.n[None], stats.a[None], tmat.grams, backend.precision, backend.means
    )[0]


def lgbe_score(ivec, backend) -> np.ndarray:
    """``-m'Wm/2 + m'W mu~`` for every language; ``ivec`` may be (R,) or (S, R)."""
    if isinstance(ivec, ClassicalIvector):
        ivec = ivec.mean
    mu = np.asarray(ivec, dtype=np.float64)
    if mu.shape[-1] != backend.rank:
        raise DimensionMismatch(f"i-vector R={mu.shape[-1]}, backend R={backend.rank}")
    Wm = backend.means @ backend.precision
    offset = -0.5 * np.einsum("lr,lr->l", Wm, backend.means)
    return mu @ Wm.T + offset


def _score_stats(n, a, backend, tmat, kind):
    _check_stats(n, a, backend, tmat)
    if kind == "ld":
        return kernels.ld_scores(n, a, tmat.grams, backend.precision, backend.means)
    if kind == "cpf":
        return kernels.cpf_scores(n, a, tmat.grams, backend.precision, backend.means)
    if kind == "lgbe":
        return lgbe_score(classical_ivectors(n, a, tmat), backend)
    raise ValidationError(f"unknown scorer {kind!r}; choose from {', '.join(SCORERS)}")


def score_dataset(dataset: StatsDataset, backend, tmat, kind="ld") -> ScoreMatrix:
    scores = _score_stats(dataset.n, dataset.a, backend, tmat, kind)
    return ScoreMatrix(scores, kind, dataset.labels.copy(), list(backend.labels))


def score_from_ivectors(ivecs: IvectorDataset, backend, tmat, kind="ld") -> ScoreMatrix:
    """Score stored classical i-vectors by first recovering their natural means."""
    if ivecs.n is None:
        raise ValidationError("scoring from i-vectors needs their zero-order counts")
    if kind == "lgbe":
        scores = lgbe_score(ivecs.ivectors, backend)
    else:
        a = recover_natural_mean(ivecs.ivectors, ivecs.n, tmat)
        scores = _score_stats(ivecs.n, a, backend, tmat, kind)
    return ScoreMatrix(scores, kind, ivecs.labels.copy(), list(backend.labels))


def save_scores(sm: ScoreMatrix, path):
    S, L = sm.scores.shape
    arrays = {"scores": sm.scores}
    if sm.labels is not None:
        arrays["labels"] = sm.labels.astype(np.float64)
    return arrays_io.save_bundle(
        path, "scores", arrays, dims={"S": S, "L": L},
        labels=sm.languages or [], fields={"scorer": sm.scorer_kind},
    )


def load_scores(path) -> ScoreMatrix:
    m = arrays_io.read_manifest(path)
    shapes = {"scores": ("S", "L")}
    if "labels" in m.arrays:
        shapes["labels"] = ("S",)
    m, arrs = arrays_io.load_bundle(path, kind="scores", shapes=shapes)
    return ScoreMatrix(arrs["scores"], m.fields.get("scorer", ""), arrs.get("labels"), m.labels)
