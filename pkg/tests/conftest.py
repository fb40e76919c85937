import numpy as np
import pytest

from reflsim.config import SimulationConfig
from reflsim.dataset import Corpus
from reflsim.desk import make_desk_corpus
from reflsim.search import CorpusStats


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("desk")
    make_desk_corpus(d, seed=0)
    return d


@pytest.fixture(scope="session")
def desk_corpus(desk_dir):
    return Corpus.load(desk_dir / "corpus.jsonl")


@pytest.fixture(scope="session")
def desk_stats(desk_dir):
    return CorpusStats.load(desk_dir / "stats.json")


@pytest.fixture(scope="session")
def small_config():
    return SimulationConfig(resolution=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
