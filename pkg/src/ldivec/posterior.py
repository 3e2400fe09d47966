"""Gaussian i-vector posteriors.

With a language-dependent prior ``N(m_l, W^-1)`` the posterior of segment
``s`` has precision ``W + B_s`` (shared by all languages) and natural mean
``W m_l + a_s``. The classical extractor is the special case ``W = I``,
``m_l = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, ValidationError
from .stats import SegmentStats, StatsDataset, precision_term


@dataclass
class PosteriorPair:
    """Shared covariance ``cov`` (R x R) and one posterior mean per language (L x R)."""

    cov: np.ndarray
    means: np.ndarray

    def mean(self, lang):
        return self.means[lang]


@dataclass
class PosteriorBatch:
    """Posteriors of a whole dataset: ``cov`` (S, R, R), ``means`` (S, L, R)."""

    cov: np.ndarray
    means: np.ndarray

    def __len__(self):
        return self.cov.shape[0]

    def __getitem__(self, s):
        return PosteriorPair(self.cov[s], self.means[s])

    def labeled_means(self, labels):
        """Posterior mean of each segment under its own language, (S, R)."""
        labels = np.asarray(labels)
        return self.means[np.arange(len(labels)), labels]


def _check(n, a, backend, tmat):
    if tmat.rank != backend.rank or a.shape[-1] != tmat.rank:
        raise DimensionMismatch(
            f"i-vector dimensions disagree: stats R={a.shape[-1]}, "
            f"T R={tmat.rank}, backend R={backend.rank}"
        )
    if n.shape[-1] != tmat.n_components:
        raise DimensionMismatch(f"{n.shape[-1]} counts for {tmat.n_components} components")


def posterior(stats: SegmentStats, backend, tmat) -> PosteriorPair:
    _check(stats.n, stats.a, backend, tmat)
    cov, means = kernels.posteriors(
        stats.n[None], stats.a[None], tmat.grams, backend.precision, backend.means
    )
    return PosteriorPair(cov[0], means[0])


def posteriors(dataset: StatsDataset, backend, tmat) -> PosteriorBatch:
    _check(dataset.n, dataset.a, backend, tmat)
    cov, means = kernels.posteriors(
        dataset.n, dataset.a, tmat.grams, backend.precision, backend.means
    )
    return PosteriorBatch(cov, means)


@dataclass
class ClassicalIvector:
    mean: np.ndarray


def classical_ivector(stats: SegmentStats, tmat) -> ClassicalIvector:
    """Posterior mean under a standard-normal prior, ``(I + B)^-1 a``."""
    if stats.a.shape[0] != tmat.rank:
        raise DimensionMismatch(f"stats have R={stats.a.shape[0]}, T has R={tmat.rank}")
    out = kernels.classical_ivectors(stats.n[None], stats.a[None], tmat.grams)
    return ClassicalIvector(out[0])


def classical_ivectors(n, a, tmat) -> np.ndarray:
    n, a = np.atleast_2d(n), np.atleast_2d(a)
    if a.shape[1] != tmat.rank:
        raise DimensionMismatch(f"stats have R={a.shape[1]}, T has R={tmat.rank}")
    return kernels.classical_ivectors(n, a, tmat.grams)


def recover_natural_mean(ivec, n, tmat) -> np.ndarray:
    """Undo the classical extraction: ``a = (I + B) mu~``.

    ``ivec`` may be a :class:`ClassicalIvector`, one vector, or a stack (S, R)
    paired row-wise with ``n`` (S, Nc).
    """
    if isinstance(ivec, ClassicalIvector):
        ivec = ivec.mean
    mu = np.asarray(ivec, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if mu.shape[-1] != tmat.rank:
        raise DimensionMismatch(f"i-vector has R={mu.shape[-1]}, T has R={tmat.rank}")
    B = precision_term(n, tmat)
    return mu + np.einsum("...rk,...k->...r", B, mu)


def expected_quadratic(pp: PosteriorPair, lang, M) -> float:
    """``E[x' M x]`` under language ``lang``'s posterior: ``tr[(C + mu mu') M]``."""
    M = np.asarray(M, dtype=np.float64)
    if np.abs(M - M.T).max(initial=0.0) > 1e-10:
        raise ValidationError("M must be symmetric")
    mu = pp.means[lang]
    return float(np.sum(pp.cov * M) + mu @ M @ mu)

