import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from docanon.geometry import BBox, RedactionClass
from docanon.pipeline import Corpus
from docanon.synthdoc import default_templates, make_corpus

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def box_strategy(cls=RedactionClass.TEXT, lo=0.0, hi=200.0, max_size=80.0):
    coord = st.floats(lo, hi, allow_nan=False, allow_infinity=False)
    size = st.floats(0.5, max_size, allow_nan=False, allow_infinity=False)
    return st.builds(lambda x, y, w, h: BBox(x, y, w, h, cls), coord, coord, size, size)


def random_box(rng, cls=RedactionClass.TEXT, extent=100.0, score=None):
    x, y = rng.uniform(0, extent, 2)
    w, h = rng.uniform(2, extent / 2, 2)
    return BBox(float(x), float(y), float(w), float(h), cls,
                1.0 if score is None else float(score))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """3 models x 6 documents, reference plus five perturbed pages each."""
    root = tmp_path_factory.mktemp("corpus")
    make_corpus(default_templates(3, 0), 6, seed=11, out_dir=root)
    return Corpus(root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
