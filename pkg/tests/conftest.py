import importlib
import os

import numpy as np
import pytest

from narrative_cantm import cantm, synthetic
from narrative_cantm.labels import CLASSES

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus():
    """Separable 7-class corpus, 40 documents per class."""
    return synthetic.make_corpus({c: 40 for c in CLASSES}, seed=3)


@pytest.fixture(scope="session")
def small_cantm(small_corpus):
    # adam converges in far fewer steps than the default sgd on a corpus this small
    cfg = cantm.CantmConfig(K=10, K_s=5, epochs=20, optimizer="adam", learning_rate=0.01, seed=0)
    return cantm.train(small_corpus.docs, cantm.EncoderSpec("bow_mlp", 64), cfg)


@pytest.fixture(scope="session")
def attention_cantm(small_corpus):
    cfg = cantm.CantmConfig(K=10, K_s=5, epochs=10, optimizer="adam", learning_rate=0.01, seed=0)
    return cantm.train(small_corpus.docs, cantm.EncoderSpec("embed_avg", 16), cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["numpy", "numba"])
def kernel_backend(request):
    """Name of a kernel backend; numba is skipped when unavailable."""
    from narrative_cantm import kernels

    if request.param == "numba" and not kernels.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    return request.param


@pytest.fixture
def reload_kernels(monkeypatch):
    """Re-import the kernel module under a given env setting; restores afterwards."""
    from narrative_cantm import kernels

    def _reload(disable: str):
        monkeypatch.setenv("NARRATIVE_CANTM_DISABLE_NUMBA", disable)
        return importlib.reload(kernels)

    yield _reload
    os.environ.pop("NARRATIVE_CANTM_DISABLE_NUMBA", None)
    importlib.reload(kernels)
