import sys

import numpy as np
import pytest

from gtan.corpus import UNK, Answer, Question, Vocabulary, compute_tfidf
from gtan.dataset import prepare_dataset
from gtan.model import ModelConfig
from gtan.ranker import GTAN
from gtan.synthetic import generate_synthetic

SMALL = ModelConfig(dim=6, layers=2, fc_layers=2, hidden=7, att_dim=5)


def random_question(rng, vocab_size=15, max_answers=5, num_respondents=6, qid="q"):
    """Encoded question with random lengths, shared words and distinct votes."""
    n = int(rng.integers(1, max_answers + 1))
    votes = rng.permutation(n * 3)[:n]

    def text(lo, hi):
        return tuple(int(t) for t in rng.integers(0, vocab_size, size=int(rng.integers(lo, hi + 1))))

    answers = tuple(Answer(f"{qid}a{i}", text(1, 6), f"u{int(rng.integers(num_respondents))}",
                           int(votes[i])) for i in range(n))
    return Question(qid, text(1, 5), answers)


def toy_vocab(size):
    tokens = (UNK,) + tuple(f"w{i}" for i in range(1, size))
    return Vocabulary(tokens, (1,) * size, (1,) * size)


def toy_model(rng, config=SMALL, vocab_size=15, num_questions=20):
    qs = [random_question(rng, vocab_size, qid=f"t{k}") for k in range(num_questions)]
    return GTAN.initialize(config, qs, toy_vocab(vocab_size), rng), qs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    raw = generate_synthetic(60, 5, vocab_size=150, seed=5)
    return prepare_dataset(raw, seed=5)


@pytest.fixture
def tfidf15():
    rng = np.random.default_rng(0)
    return compute_tfidf([random_question(rng, 15, qid=f"d{k}") for k in range(30)], 15)


def pytest_terminal_summary(terminalreporter):
    suite = sys.modules.get("test_acceptance")
    if suite is not None and suite.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in suite.RESULTS:
            terminalreporter.write_line(line)
