"""Sampling from the generative model, for tests and desk-scale experiments.

Per segment: draw ``x ~ N(m_l, W^-1)``; per frame draw a component ``i`` from
the UBM weights and emit ``mean_i + L_i (T_i x + eps)`` with ``eps ~ N(0, I)``.

Random streams are keyed by ``(seed, stream, index)`` so any segment can be
regenerated on its own and parallel generation matches sequential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ValidationError
from .model import Backend, Dims, TMatrix, Ubm
from .stats import SegmentStats, StatsDataset, segment_stats

MODEL_STREAM = 0
TRAIN_STREAM = 1
TEST_STREAM = 2


@dataclass
class SynthConfig:
    dims: Dims
    frames_per_segment: object = 100  # int, or (lo, hi) inclusive
    segments_per_language: int = 10
    class_separation: float = 3.0
    seed: int = 0
    identity_t: bool = False  # Nc=1, D=R, T=I, unit UBM covariance
    precision_scale: float = 1.0
    component_spread: float = 10.0  # scale of UBM component means

    def __post_init__(self):
        fps = self.frames_per_segment
        lo, hi = (fps, fps) if np.isscalar(fps) else fps
        if lo < 0 or hi < lo:
            raise ValidationError(f"bad frame range {fps!r}")
        if self.segments_per_language < 1:
            raise ValidationError("segments_per_language must be >= 1")
        if self.class_separation < 0:
            raise ValidationError("class_separation must be >= 0")
        if self.precision_scale <= 0:
            raise ValidationError("precision_scale must be > 0")
        if self.identity_t and (self.dims.Nc != 1 or self.dims.D != self.dims.R):
            raise ValidationError("identity_t needs Nc = 1 and D = R")

    @property
    def frame_range(self):
        fps = self.frames_per_segment
        return (int(fps), int(fps)) if np.isscalar(fps) else (int(fps[0]), int(fps[1]))


def rng_for(seed, stream, index=0):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_spd(rng, d, lo=0.5, hi=2.0):
    """SPD matrix with eigenvalues uniform in ``[lo, hi]``."""
    q = random_rotation(rng, d)
    A = (q * rng.uniform(lo, hi, d)) @ q.T
    return 0.5 * (A + A.T)


def spread_means(rng, L, R, separation, tries=16):
    """``separation`` times the best-spread of several standard-normal draws."""
    best, best_gap = None, -1.0
    for _ in range(tries):
        z = rng.standard_normal((L, R))
        gap = min(
            (np.linalg.norm(z[i] - z[j]) for i in range(L) for j in range(i + 1, L)),
            default=0.0,
        )
        if gap > best_gap:
            best, best_gap = z, gap
    return separation * best


def sample_model(cfg: SynthConfig):
    """Random ``(Ubm, TMatrix, Backend)`` for ``cfg``; deterministic in ``cfg.seed``."""
    d = cfg.dims
    rng = rng_for(cfg.seed, MODEL_STREAM)
    if cfg.identity_t:
        ubm = Ubm(np.ones(1), np.zeros((1, d.D)), np.eye(d.D)[None])
        tmat = TMatrix(np.eye(d.D)[None])
    else:
        w = rng.dirichlet(np.full(d.Nc, 5.0))
        w /= w.sum()
        means = spread_means(rng, d.Nc, d.D, cfg.component_spread)
        factors = np.stack([linalg.cholesky(random_spd(rng, d.D), lower=True) for _ in range(d.Nc)])
        ubm = Ubm(w, means, factors)
        tmat = TMatrix(rng.normal(0.0, 1.0 / np.sqrt(d.D), (d.Nc, d.D, d.R)))
    W = cfg.precision_scale * random_spd(rng, d.R)
    m = spread_means(rng, d.L, d.R, cfg.class_separation)
    backend = Backend(m, W, [f"lang{k}" for k in range(d.L)])
    return ubm, tmat, backend


def sample_latent(backend, lang, rng):
    c = linalg.cholesky(backend.precision, lower=True)
    z = rng.standard_normal(backend.rank)
    return backend.means[lang] + linalg.solve_triangular(c.T, z, lower=False)


def sample_segment(models, language, n_frames, rng, return_latent=False):
    """Frames (n_frames, D) of one segment in ``language``."""
    ubm, tmat, backend = models
    if n_frames < 0:
        raise ValidationError("n_frames must be >= 0")
    x = sample_latent(backend, language, rng)
    states = rng.choice(ubm.n_components, size=n_frames, p=ubm.weights)
    eps = rng.standard_normal((n_frames, ubm.dim))
    shifted = np.einsum("tdr,r->td", tmat.blocks[states], x) + eps
    frames = ubm.means[states] + np.einsum("tde,te->td", ubm.cov_factors[states], shifted)
    return (frames, x) if return_latent else frames


def sample_stats(models, language, n_frames, rng, return_latent=False):
    """Statistics drawn directly under a hard frame alignment (no frames).

    Only for unit tests where speed matters more than exercising whitening.
    """
    ubm, tmat, backend = models
    x = sample_latent(backend, language, rng)
    n = rng.multinomial(n_frames, ubm.weights).astype(np.float64)
    noise = rng.standard_normal((ubm.n_components, ubm.dim)) * np.sqrt(n)[:, None]
    f = np.einsum("i,idr,r->id", n, tmat.blocks, x) + noise
    a = np.einsum("idr,id->r", tmat.blocks, f)
    st = SegmentStats(n, a, language)
    return (st, x) if return_latent else st


@dataclass
class SynthData:
    ubm: Ubm
    tmat: TMatrix
    backend: Backend
    stats: StatsDataset
    latents: np.ndarray
    frames: list = field(default=None, repr=False)

    @property
    def models(self):
        return self.ubm, self.tmat, self.backend


def make_dataset(cfg: SynthConfig, models=None, stream=TRAIN_STREAM, keep_frames=False) -> SynthData:
    """Sample models (unless given) and a labelled dataset pushed through the stats pipeline.

    Segments are ordered language by language. Pass the models of a training
    set and ``stream=TEST_STREAM`` for a disjoint held-out set.
    """
    ubm, tmat, backend = models if models is not None else sample_model(cfg)
    lo, hi = cfg.frame_range
    stats, latents, frames = [], [], []
    S = cfg.segments_per_language
    for lang in range(backend.n_languages):
        for j in range(S):
            rng = rng_for(cfg.seed, stream, lang * S + j)
            T_s = int(rng.integers(lo, hi + 1)) if hi > lo else lo
            seg, x = sample_segment((ubm, tmat, backend), lang, T_s, rng, return_latent=True)
            stats.append(segment_stats(seg, ubm, tmat, label=lang))
            latents.append(x)
            if keep_frames:
                frames.append(seg)
    ds = StatsDataset.from_segments(stats, backend.labels)
    return SynthData(ubm, tmat, backend, ds, np.stack(latents), frames if keep_frames else None)
