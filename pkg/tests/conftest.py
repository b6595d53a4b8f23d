import numpy as np
import pytest

from prodrop.config import TrainConfig
from prodrop.corpus import SyntheticSpec, generate_synthetic
from prodrop.model import JointModel

SMALL = dict(d_emb=6, d_hidden=4, d_arc=5, d_rel=5, dropout=0.0, val_fraction=0.0)


def small_config(**overrides):
    return TrainConfig(**{**SMALL, **overrides})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_corpus():
    return generate_synthetic(SyntheticSpec(n_snippets=4, vocab_size=20, seed=3))


@pytest.fixture
def tiny_model(tiny_corpus):
    return JointModel.from_corpus(tiny_corpus, small_config())


# criterion lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
