import numpy as np
import pytest

from ldivec.errors import NotPositiveDefinite, ValidationError
from ldivec.model import Backend, TMatrix
from ldivec.posterior import (
    PosteriorPair,
    classical_ivector,
    expected_quadratic,
    posterior,
    posteriors,
    recover_natural_mean,
)
from ldivec.stats import SegmentStats, precision_term
from ldivec.synth import random_spd

from conftest import random_problem, scalar_problem


def _inv2(M):
    # explicit 2x2 inverse, independent of any factorisation
    (a, b), (c, d) = M
    return np.array([[d, -b], [-c, a]]) / (a * d - b * c)


def test_prior_recovered_at_zero_frames(kernel_backend):
    t = TMatrix(np.ones((2, 3, 2)))
    pp = posterior(SegmentStats([0, 0], [0, 0]), Backend(np.zeros((3, 2)), np.eye(2)), t)
    assert np.allclose(pp.cov, np.eye(2), atol=1e-15)
    assert np.array_equal(pp.means, np.zeros((3, 2)))


def test_standard_prior_gives_classical_ivector(kernel_backend, rng):
    tmat, _, ds = random_problem(rng, R=3, L=4)
    be = Backend(np.zeros((4, 3)), np.eye(3))
    for s in range(len(ds)):
        pp = posterior(ds[s], be, tmat)
        iv = classical_ivector(ds[s], tmat).mean
        assert np.abs(pp.means - iv).max() <= 1e-10


def test_gaussian_product_oracle_r2(kernel_backend, rng):
    tmat, be, ds = random_problem(rng, R=2, L=3)
    for s in range(len(ds)):
        B = precision_term(ds.n[s], tmat)
        C = _inv2(be.precision + B)
        pp = posterior(ds[s], be, tmat)
        assert np.abs(pp.cov - C).max() <= 1e-10
        for lang in range(3):
            mu = C @ (be.precision @ be.means[lang] + ds.a[s])
            assert np.abs(pp.means[lang] - mu).max() <= 1e-10


def test_posterior_invariants(kernel_backend, rng):
    tmat, be, ds = random_problem(rng, R=4)
    batch = posteriors(ds, be, tmat)
    for s in range(len(ds)):
        C = batch.cov[s]
        assert np.abs(C - C.T).max() <= 1e-10
        P = be.precision + precision_term(ds.n[s], tmat)
        assert np.abs(P @ C - np.eye(4)).max() <= 1e-8
        np.linalg.cholesky(C)
        single = posterior(ds[s], be, tmat)
        assert np.allclose(single.cov, C, rtol=0, atol=1e-14)


def test_covariance_ignores_first_order_stats_and_means(rng):
    tmat, be, ds = random_problem(rng, R=3)
    st = ds[0]
    pp1 = posterior(st, be, tmat)
    pp2 = posterior(SegmentStats(st.n, st.a + rng.standard_normal(3)), be, tmat)
    pp3 = posterior(st, Backend(be.means + 1, be.precision), tmat)
    assert np.array_equal(pp1.cov, pp2.cov) and np.array_equal(pp1.cov, pp3.cov)


@pytest.mark.parametrize("seed", range(5))
def test_shrinkage_grows_with_segment_length(seed):
    rng = np.random.default_rng(seed)
    tmat, be, ds = random_problem(rng, R=3, frames=5.0)
    st = ds[0]
    for lang in range(be.n_languages):
        dist = [
            np.linalg.norm(posterior(st.scaled(k), be, tmat).means[lang] - be.means[lang])
            for k in (0, 1, 2, 4)
        ]
        assert dist[0] <= 1e-12
        assert all(d1 >= d0 - 1e-12 for d0, d1 in zip(dist, dist[1:]))


def test_non_pd_precision_detected(kernel_backend):
    t = TMatrix(np.ones((1, 1, 1)))
    be = Backend([[0.0]], [[1.0]])
    be.precision = np.array([[-2.0]])  # bypass validation to mimic corrupt input
    with pytest.raises(NotPositiveDefinite):
        posterior(SegmentStats([0.5], [0.0]), be, t)


def test_classical_ivector_examples(kernel_backend, rng):
    tmat, _, st = scalar_problem()
    assert classical_ivector(st, tmat).mean[0] == pytest.approx(0.5, abs=1e-15)
    assert np.array_equal(classical_ivector(SegmentStats([3.0], [0.0]), tmat).mean, [0.0])
    tmat, _, ds = random_problem(rng, R=4)
    for s in range(len(ds)):
        mu = classical_ivector(ds[s], tmat).mean
        resid = (np.eye(4) + precision_term(ds.n[s], tmat)) @ mu - ds.a[s]
        assert np.abs(resid).max() <= 1e-10


def test_recover_natural_mean(kernel_backend, rng):
    tmat, _, st = scalar_problem()
    assert recover_natural_mean(np.array([0.5]), st.n, tmat)[0] == pytest.approx(2.0, abs=1e-15)
    assert np.array_equal(recover_natural_mean(np.zeros(1), st.n, tmat), [0.0])
    tmat, _, ds = random_problem(rng, R=3)
    for s in range(len(ds)):
        a = recover_natural_mean(classical_ivector(ds[s], tmat), ds.n[s], tmat)
        assert np.abs(a - ds.a[s]).max() <= 1e-9


def test_expected_quadratic_examples(rng):
    C = random_spd(rng, 3)
    pp = PosteriorPair(C, np.zeros((2, 3)))
    assert expected_quadratic(pp, 0, np.zeros((3, 3))) == 0.0
    assert expected_quadratic(pp, 1, np.eye(3)) == pytest.approx(np.trace(C), rel=1e-14)
    with pytest.raises(ValidationError):
        expected_quadratic(pp, 0, np.triu(np.ones((3, 3))))


def test_expected_quadratic_monte_carlo(rng):
    C = random_spd(rng, 2)
    mu = rng.standard_normal((1, 2))
    M = random_spd(rng, 2, -1.0, 2.0)  # symmetric, possibly indefinite
    x = rng.multivariate_normal(mu[0], C, size=1_000_000)
    q = np.einsum("sr,rk,sk->s", x, M, x)
    est, se = q.mean(), q.std(ddof=1) / np.sqrt(q.size)
    assert abs(expected_quadratic(PosteriorPair(C, mu), 0, M) - est) <= 3 * se
