import numpy as np
import pytest

from gtan import gradcheck as gc
from gtan import tensor as T
from gtan.model import AblationConfig
from gtan.tensor import Tensor


def test_relative_error_cases():
    a = np.array([[1.0, 2.0]])
    assert gc.relative_error(a, a) == 0.0
    assert gc.relative_error(a, 1.01 * a) == pytest.approx(0.01 / 1.01)
    assert gc.relative_error(np.zeros((1, 2)), np.full((1, 2), 1e-12)) < 1e-11


def test_toy_question_has_strict_votes():
    q, vocab = gc.toy_question(np.random.default_rng(0))
    assert len(q.answers) == 3 and sorted(q.votes) == [1, 2, 3]
    assert all(0 < t < len(vocab) for a in q.answers for t in a.tokens)


@pytest.mark.parametrize("flags", [(), ("no_graph",), ("no_question",)])
def test_variant_passes(flags):
    r = gc.gradcheck(AblationConfig.from_names(flags), seed=1)
    assert r.passed, r.line()
    assert "emb.words" in r.errors and r.line().startswith("PASS")


def test_larger_epsilon_stays_bounded():
    r = gc.gradcheck(seed=0, epsilon=1e-3)
    assert r.worst[1] < 1e-2


def test_a_missing_gradient_path_is_caught(monkeypatch):
    def leaky(scores, pairs, margin):
        # the detached copy contributes to the value but not to the tape
        return T.add(gc.question_loss(scores, pairs, margin),
                     T.reduce(Tensor(scores.data), "sum"))

    monkeypatch.setattr(gc, "_loss", lambda model, q, params, pairs, margin:
                        leaky(model.forward(q, params).scores, pairs, margin))
    r = gc.gradcheck(seed=0)
    assert not r.passed and r.line().startswith("FAIL")
