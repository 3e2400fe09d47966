"""Plug-in ML training of the backend by variational EM.

The E-step computes each training segment's language-dependent posterior;
the M-step refits the language means and the within-class precision. The
variational lower bound is tracked after every iteration and must never
decrease.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import EmptyClass, NotPositiveDefinite, UnlabeledSegment, ValidationError
from .model import Backend
from .posterior import PosteriorBatch, PosteriorPair, classical_ivectors, posteriors
from .stats import SegmentStats, StatsDataset, precision_term

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8


@dataclass
class TrainConfig:
    max_iters: int = 20
    rel_tol: float = 1e-6
    min_eig_floor: float = 1e-8
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValidationError("rel_tol must be > 0")
        if not self.min_eig_floor > 0:
            raise ValidationError("min_eig_floor must be > 0")


@dataclass
class TrainReport:
    bounds: list = field(default_factory=list)
    iters_run: int = 0
    converged: bool = False
    initial_bound: float = float("nan")
    # Posteriors that produced the final parameters (the M-step's input).
    last_posteriors: PosteriorBatch = None

    @property
    def monotone(self):
        seq = [self.initial_bound] + list(self.bounds)
        return all(
            b1 >= b0 - MONOTONE_TOL * (1 + abs(b0)) for b0, b1 in zip(seq, seq[1:])
        )


def _logdet_spd(A):
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    return 2.0 * np.log(np.diagonal(c, axis1=-2, axis2=-1)).sum(axis=-1)


def _require_labels(dataset, L):
    if np.any(dataset.labels < 0):
        bad = np.flatnonzero(dataset.labels < 0)
        raise UnlabeledSegment(
            f"{bad.size} training segment(s) have no language label (first: {bad[0]})"
        )
    for lang in range(L):
        if not np.any(dataset.labels == lang):
            name = dataset.languages[lang] if lang < len(dataset.languages) else None
            raise EmptyClass(lang, name)


def e_step(dataset: StatsDataset, backend, tmat, n_jobs=1) -> PosteriorBatch:
    """Posteriors of every training segment; segments are split across threads."""
    if np.any(dataset.labels < 0):
        raise UnlabeledSegment("training segments must all carry a language label")
    S = len(dataset)
    if n_jobs <= 1 or S < 2 * n_jobs:
        return posteriors(dataset, backend, tmat)
    chunks = np.array_split(np.arange(S), n_jobs)
    with ThreadPoolExecutor(n_jobs) as pool:
        parts = list(pool.map(lambda idx: posteriors(dataset.subset(idx), backend, tmat), chunks))
    return PosteriorBatch(
        np.concatenate([p.cov for p in parts]), np.concatenate([p.means for p in parts])
    )


def m_step_means(posts: PosteriorBatch, labels, n_languages=None) -> np.ndarray:
    labels = np.asarray(labels)
    L = n_languages if n_languages is not None else int(labels.max()) + 1
    mu = posts.labeled_means(labels)
    out = np.empty((L, mu.shape[1]))
    for lang in range(L):
        members = labels == lang
        if not members.any():
            raise EmptyClass(lang)
        out[lang] = mu[members].mean(axis=0)
    return out


def m_step_precision(posts: PosteriorBatch, labels, class_means, min_eig_floor=1e-8):
    """Refit W from posterior covariances plus within-class scatter of posterior means."""
    labels = np.asarray(labels)
    S = len(labels)
    dev = posts.labeled_means(labels) - class_means[labels]
    cov = (posts.cov.sum(axis=0) + dev.T @ dev) / S
    cov = 0.5 * (cov + cov.T)
    evals, evecs = linalg.eigh(cov)
    if evals.min() < min_eig_floor:
        cov = (evecs * np.maximum(evals, min_eig_floor)) @ evecs.T
        cov = 0.5 * (cov + cov.T)
    R = cov.shape[0]
    W = linalg.cho_solve(linalg.cho_factor(cov, lower=True), np.eye(R))
    return 0.5 * (W + W.T)


def lower_bound(stats: SegmentStats, pp: PosteriorPair, lang, backend, tmat) -> float:
    """Variational bound of one segment under language ``lang``.

    Data-only constants are dropped; what remains is ``-KL(Q || prior)`` plus
    the expected linearised data term ``a'mu - tr[B (C + mu mu')] / 2``. At
    the optimal ``Q`` this equals the exact log marginal likelihood of the
    linearised model up to the same constants.
    """
    W = backend.precision
    m = backend.means[lang]
    C = pp.cov
    mu = pp.means[lang]
    B = precision_term(stats.n, tmat)
    d = mu - m
    R = W.shape[0]
    kl = 0.5 * (_logdet_spd(W) + _logdet_spd(C) + R - np.sum(W * C) - d @ W @ d)
    data = stats.a @ mu - 0.5 * (np.sum(B * C) + mu @ B @ mu)
    return float(kl + data)


def segment_bounds(dataset: StatsDataset, posts: PosteriorBatch, backend, tmat) -> np.ndarray:
    """Vectorised :func:`lower_bound` of every segment under its own label."""
    labels = dataset.labels
    W = backend.precision
    R = W.shape[0]
    mu = posts.labeled_means(labels)
    d = mu - backend.means[labels]
    B = precision_term(dataset.n, tmat)
    C = posts.cov
    kl = 0.5 * (
        _logdet_spd(W) + _logdet_spd(C) + R
        - np.einsum("rk,srk->s", W, C)
        - np.einsum("sr,rk,sk->s", d, W, d)
    )
    data = np.einsum("sr,sr->s", dataset.a, mu) - 0.5 * (
        np.einsum("srk,srk->s", B, C) + np.einsum("sr,srk,sk->s", mu, B, mu)
    )
    return kl + data


def total_bound(dataset, posts, backend, tmat) -> float:
    return float(segment_bounds(dataset, posts, backend, tmat).sum())


def reference_bound(dataset: StatsDataset, tmat) -> float:
    """Total bound of the standard-normal-prior model (``W = I``, ``m = 0``).

    Depends on the data only. Its value is dominated by ``a'(I + B)^-1 a / 2``,
    which grows with segment length and would swamp a relative convergence
    test, so gains are measured against the excess over this reference.
    """
    ivecs = classical_ivectors(dataset.n, dataset.a, tmat)
    B = precision_term(dataset.n, tmat)
    eye = np.eye(tmat.rank)
    return float(0.5 * (np.einsum("sr,sr->", dataset.a, ivecs) - _logdet_spd(eye + B).sum()))


def initial_backend(dataset: StatsDataset, tmat, n_languages) -> Backend:
    """Class means of classical i-vectors and ``W = I``."""
    ivecs = classical_ivectors(dataset.n, dataset.a, tmat)
    means = np.stack([ivecs[dataset.labels == k].mean(axis=0) for k in range(n_languages)])
    return Backend(means, np.eye(tmat.rank), _language_names(dataset, n_languages))


def _language_names(dataset, L):
    if len(dataset.languages) == L:
        return list(dataset.languages)
    return [f"lang{k}" for k in range(L)]


def train(dataset: StatsDataset, tmat, cfg: TrainConfig = None, n_languages=None, init=None):
    """Alternate E and M steps; return ``(backend, report)``.

    ``report.bounds[k]`` is the total bound after iteration ``k + 1`` with the
    posteriors re-optimised for the new parameters.
    """
    cfg = cfg or TrainConfig()
    L = n_languages or len(dataset.languages) or int(dataset.labels.max()) + 1
    _require_labels(dataset, L)
    backend = init if init is not None else initial_backend(dataset, tmat, L)
    names = backend.labels

    posts = e_step(dataset, backend, tmat, cfg.n_jobs)
    report = TrainReport(initial_bound=total_bound(dataset, posts, backend, tmat))
    log.info("initial bound %.10g", report.initial_bound)
    prev = report.initial_bound
    ref = reference_bound(dataset, tmat)
    for it in range(1, int(cfg.max_iters) + 1):
        means = m_step_means(posts, dataset.labels, L)
        W = m_step_precision(posts, dataset.labels, means, cfg.min_eig_floor)
        report.last_posteriors = posts
        backend = Backend(means, W, names)
        posts = e_step(dataset, backend, tmat, cfg.n_jobs)
        bound = total_bound(dataset, posts, backend, tmat)
        report.bounds.append(bound)
        report.iters_run = it
        gain = (bound - prev) / max(abs(prev - ref), 1e-300)
        log.info("iteration %d bound %.10g relative gain %.3e", it, bound, gain)
        if bound < prev - MONOTONE_TOL * (1 + abs(prev)):
            log.error("bound decreased at iteration %d: %.10g -> %.10g", it, prev, bound)
        if gain < cfg.rel_tol:
            report.converged = True
            break
        prev = bound
    return backend, report
