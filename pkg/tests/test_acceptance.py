"""Acceptance criteria, one test each; a PASS/FAIL summary is printed at the end."""

import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from scipy import integrate

from ldivec import arrays_io, kernels
from ldivec.cli import main
from ldivec.model import Backend, Dims, TMatrix, load_model, save_model
from ldivec.posterior import classical_ivector, classical_ivectors, posterior
from ldivec.scoring import (
    cpf_score,
    ld_score,
    lgbe_score,
    load_scores,
    save_scores,
    score_dataset,
    score_from_ivectors,
)
from ldivec.stats import (
    IvectorDataset,
    SegmentStats,
    StatsDataset,
    load_ivectors,
    load_stats,
    precision_term,
    save_ivectors,
    save_stats,
)
from ldivec.synth import (
    TEST_STREAM,
    SynthConfig,
    make_dataset,
    random_spd,
    rng_for,
    sample_model,
    sample_stats,
)
from ldivec.training import TrainConfig, segment_bounds, train

ACCEPT_SEED = 20151015


@contextmanager
def within(seconds):
    t0 = time.perf_counter()
    yield
    elapsed = time.perf_counter() - t0
    assert elapsed < seconds, f"took {elapsed:.1f} s, budget {seconds} s"


def random_instance(rng, R, L=None, Nc=3, D=None, frames=200.0):
    """Random T, backend and one segment's stats (not tied to any sampler)."""
    L = L or int(rng.integers(2, 6))
    D = D or R + 1
    tmat = TMatrix(rng.normal(0, 1 / np.sqrt(D), (Nc, D, R)))
    be = Backend(2 * rng.standard_normal((L, R)), random_spd(rng, R))
    st = SegmentStats(rng.uniform(0, frames, Nc), np.sqrt(frames) * rng.standard_normal(R))
    return tmat, be, st


def log_marginal(a, B, m, W):
    """log E_{x ~ N(m, W^-1)} exp(a'x - x'Bx/2) with explicit inverses."""
    P = W + B
    h = W @ m + a
    return 0.5 * (np.linalg.slogdet(W)[1] - np.linalg.slogdet(P)[1] - m @ W @ m + h @ np.linalg.inv(P) @ h)


def log_marginal_quad(a, B, m, W):
    """Scalar case by adaptive quadrature, shifted by the exponent's maximum."""
    peak = (W * m + a) / (W + B)
    expo = lambda x: -0.5 * W * (x - m) ** 2 + a * x - 0.5 * B * x**2
    c = expo(peak)
    half = 40.0 / np.sqrt(W + B)
    val, _ = integrate.quad(lambda x: np.exp(expo(x) - c), peak - half, peak + half,
                            points=[peak], epsabs=1e-15, epsrel=1e-13, limit=200)
    return c + np.log(val) + 0.5 * np.log(W / (2 * np.pi))


def test_zero_duration_neutrality():
    """AC1 zero-duration neutrality: ld = 0 and cpf = -m'W(W+I)^-1 m/2 on empty stats"""
    rng = np.random.default_rng(ACCEPT_SEED + 1)
    with within(5):
        for trial in range(100):
            R = (1, 2, 4, 8)[trial % 4]
            tmat, be, _ = random_instance(rng, R)
            empty = SegmentStats(np.zeros(tmat.n_components), np.zeros(R))
            W = be.precision
            expected = np.array([-0.5 * m @ W @ np.linalg.inv(W + np.eye(R)) @ m for m in be.means])
            for name in kernels.available():
                with kernels.use(name):
                    assert np.abs(ld_score(empty, be, tmat)).max() <= 1e-12
                    assert np.abs(cpf_score(empty, be, tmat) - expected).max() <= 1e-10


def test_lgbe_limit():
    """AC2 long-segment limit: ld and cpf differences approach lgbe differences"""
    rng = np.random.default_rng(ACCEPT_SEED + 2)
    ks = (1.0, 1e2, 1e4, 1e6)
    with within(5):
        for _ in range(20):
            tmat, be, st = random_instance(rng, int(rng.integers(1, 5)))
            for scorer in (ld_score, cpf_score):
                gaps = []
                for k in ks:
                    big = st.scaled(k)
                    s = scorer(big, be, tmat)
                    g = lgbe_score(classical_ivector(big, tmat), be)
                    gaps.append(np.abs((s - s[0]) - (g - g[0])).max())
                assert gaps[-1] <= 1e-3
                assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps


def test_exact_likelihood_ratio():
    """AC3 exact oracle: ld differences equal closed-form marginal log-likelihood ratios"""
    rng = np.random.default_rng(ACCEPT_SEED + 3)
    with within(30):
        for trial in range(200):
            R = trial % 4 + 1
            tmat, be, st = random_instance(rng, R)
            B = precision_term(st.n, tmat)
            ref = np.array([log_marginal(st.a, B, m, be.precision) for m in be.means])
            sc = ld_score(st, be, tmat)
            assert np.abs((sc[:, None] - sc[None]) - (ref[:, None] - ref[None])).max() <= 1e-8
        for _ in range(20):
            tmat, be, st = random_instance(rng, 1)
            B = precision_term(st.n, tmat)[0, 0]
            W = be.precision[0, 0]
            ref = np.array([log_marginal_quad(st.a[0], B, m[0], W) for m in be.means])
            sc = ld_score(st, be, tmat)
            assert np.abs((sc[:, None] - sc[None]) - (ref[:, None] - ref[None])).max() <= 1e-6


def _fd(f, x, h=1e-5):
    # f returns per-segment bounds; summing their differences keeps the
    # large data-only part of the total out of the cancellation
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = np.sum(f(x + e) - f(x - e)) / (2 * h)
    return g


def test_em_monotone_and_stationary():
    """AC4 EM: bound nondecreasing on 50 datasets and updates stationary"""
    with within(120):
        for seed in range(50):
            cfg = SynthConfig(Dims(D=4, R=2, Nc=2, L=3), frames_per_segment=(20, 300),
                              segments_per_language=30, seed=1000 + seed)
            data = make_dataset(cfg)
            assert len(data.stats) == 90
            be, report = train(data.stats, data.tmat, TrainConfig(max_iters=20))
            seq = [report.initial_bound] + report.bounds
            for prev, cur in zip(seq, seq[1:]):
                assert cur >= prev - 1e-8 * (1 + abs(prev))

            # gradients of the bound for the posteriors the final update was fitted to
            posts = report.last_posteriors
            obj = lambda M, W: segment_bounds(data.stats, posts, Backend(M, W), data.tmat)
            gm = _fd(lambda M: obj(M, be.precision), be.means)
            gw = _fd(lambda P: obj(be.means, be.precision + 0.5 * (P + P.T)), np.zeros((2, 2)))
            assert max(np.abs(gm).max(), np.abs(gw).max()) <= 1e-5


def test_parameter_recovery():
    """AC5 recovery: class means within 0.15 (true-W norm) and held-out ld accuracy >= 0.95"""
    cfg = SynthConfig(Dims(D=4, R=2, Nc=2, L=3), frames_per_segment=1000,
                      segments_per_language=100, class_separation=3.0, seed=7)
    with within(120):
        data = make_dataset(cfg)
        be, report = train(data.stats, data.tmat, TrainConfig(max_iters=20))
        assert report.iters_run <= 20
        held_cfg = SynthConfig(cfg.dims, frames_per_segment=1000, segments_per_language=50,
                               class_separation=3.0, seed=7)
        held = make_dataset(held_cfg, models=data.models, stream=TEST_STREAM)
        assert len(held.stats) == 150
        acc = np.mean(np.argmax(score_dataset(held.stats, be, data.tmat, "ld").scores, 1) == held.stats.labels)
        d = be.means - data.backend.means
        err = np.sqrt(np.einsum("lr,rk,lk->l", d, data.backend.precision, d))
        print(f"recovery errors {np.round(err, 4).tolist()}, held-out accuracy {acc:.4f}")
        assert acc >= 0.95
        assert err.max() <= 0.15, f"class mean errors {err}"


def test_scoring_from_ivectors():
    """AC6 scoring stored i-vectors equals scoring statistics"""
    with within(10):
        for seed in range(20):
            rng = rng_for(seed, 99)
            R = int(rng.integers(1, 6))
            cfg = SynthConfig(Dims(D=R + 2, R=R, Nc=3, L=3), seed=seed)
            models = sample_model(cfg)
            segs = [sample_stats(models, s % 3, int(rng.integers(0, 2000)), rng) for s in range(30)]
            ds = StatsDataset.from_segments(segs, models[2].labels)
            ivs = IvectorDataset(classical_ivectors(ds.n, ds.a, models[1]), ds.n, ds.labels, ds.languages)
            for kind in ("ld", "cpf", "lgbe"):
                a = score_dataset(ds, models[2], models[1], kind).scores
                b = score_from_ivectors(ivs, models[2], models[1], kind).scores
                assert np.abs(a - b).max() <= 1e-9


def test_classical_reduction():
    """AC7 standard-normal prior: language-dependent posteriors equal classical i-vectors"""
    rng = np.random.default_rng(ACCEPT_SEED + 7)
    with within(5):
        for _ in range(100):
            R = int(rng.integers(1, 9))
            tmat, be, st = random_instance(rng, R)
            std = Backend(np.zeros_like(be.means), np.eye(R))
            mu = posterior(st, std, tmat).means
            assert np.abs(mu - classical_ivector(st, tmat).mean).max() <= 1e-10


def _tree(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _pipeline(out, capsys):
    """Every CLI command once; returns captured stdout of eval."""
    out.mkdir()
    sim = out / "sim"
    common = ["--tmatrix", sim / "tmatrix.manifest"]
    steps = [
        ["simulate", "--out", sim, "--langs", 3, "--rdim", 2, "--fdim", 4, "--comps", 2,
         "--segs-per-lang", 10, "--frames", "30..200", "--seed", 11],
        ["stats", "--features", sim / "features", "--ubm", sim / "ubm.manifest", *common,
         "--out", out / "stats.manifest"],
        ["train", "--stats", out / "stats.manifest", *common, "--out", out / "model"],
        ["extract", "--stats", out / "stats.manifest", *common, "--out", out / "iv.manifest"],
        ["recover", "--ivectors", out / "iv.manifest", *common, "--out", out / "rec.manifest"],
    ]
    for kind in ("ld", "cpf", "lgbe"):
        for src, path in (("--stats", out / "stats.manifest"), ("--ivectors", out / "iv.manifest")):
            steps.append(["score", src, path, "--backend", out / "model" / "backend.manifest", *common,
                          "--scorer", kind, "--out", out / f"{kind}{src[2:]}.manifest"])
    steps.append(["eval", "--scores", out / "ldstats.manifest",
                  "--out", out / "eval.txt"])
    capsys.readouterr()
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv[0]
    return capsys.readouterr().out


def test_determinism_and_io(tmp_path, capsys):
    """AC8 determinism and I/O: reruns byte-identical, manifest round trips bitwise"""
    with within(30):
        out1 = _pipeline(tmp_path / "run1", capsys)
        out2 = _pipeline(tmp_path / "run2", capsys)
        t1, t2 = _tree(tmp_path / "run1"), _tree(tmp_path / "run2")
        assert out1 == out2 and "accuracy" in out1
        assert t1.keys() == t2.keys() and len(t1) > 20
        assert all(t1[k] == t2[k] for k in t1)

        # load -> save of every manifest kind reproduces the files bit for bit
        run = tmp_path / "run1"
        rt = tmp_path / "roundtrip"
        rt.mkdir()
        for kind in ("ubm", "tmatrix", "backend"):
            src = run / "sim" / f"{kind}.manifest"
            dst = save_model(load_model(src), rt)
            assert dst.read_bytes() == src.read_bytes()
            for name in arrays_io.read_manifest(src).arrays:
                data = f"data/{kind}.{name}.ldiv"
                assert (rt / data).read_bytes() == (run / "sim" / data).read_bytes()
        pairs = [
            (run / "stats.manifest", lambda p: save_stats(load_stats(run / "stats.manifest"), p)),
            (run / "iv.manifest", lambda p: save_ivectors(load_ivectors(run / "iv.manifest"), p)),
            (run / "ldstats.manifest", lambda p: save_scores(load_scores(run / "ldstats.manifest"), p)),
        ]
        for src, resave in pairs:
            dst = resave(rt / src.name)
            assert Path(dst).read_bytes() == src.read_bytes()
            for name in arrays_io.read_manifest(src).arrays:
                rel = f"data/{src.stem}.{name}.ldiv"
                assert (rt / rel).read_bytes() == (run / rel).read_bytes()
        for path in sorted(run.rglob("*.manifest")):
            text = path.read_text()
            assert arrays_io.format_manifest(arrays_io.parse_manifest(text)) == text
