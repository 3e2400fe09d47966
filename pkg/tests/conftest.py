import numpy as np
import pytest

from ldivec import kernels
from ldivec.model import Backend, TMatrix
from ldivec.stats import SegmentStats, StatsDataset
from ldivec.synth import random_spd


@pytest.fixture(params=kernels.available())
def kernel_backend(request):
    with kernels.use(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20151015)


def random_problem(rng, R=3, Nc=4, D=5, L=3, S=6, frames=50.0):
    """Random T, backend and stats with well-conditioned W."""
    tmat = TMatrix(rng.normal(0, 1 / np.sqrt(D), (Nc, D, R)))
    backend = Backend(2.0 * rng.standard_normal((L, R)), random_spd(rng, R))
    n = rng.uniform(0, frames, (S, Nc))
    a = rng.standard_normal((S, R)) * np.sqrt(frames)
    ds = StatsDataset(n, a, rng.integers(0, L, S), backend.labels)
    return tmat, backend, ds


def scalar_problem():
    """R = Nc = D = 1 with T = 1, so B = n. Backend m = 1, W = 1; stats a = 2, B = 3."""
    tmat = TMatrix(np.ones((1, 1, 1)))
    backend = Backend([[1.0]], [[1.0]])
    return tmat, backend, SegmentStats([3.0], [2.0])


# -- acceptance summary -------------------------------------------------------

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and rep.when == "call":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _criteria.append((rep.passed, doc, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for passed, doc, dur in _criteria:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {doc}  ({dur:.2f} s)")
