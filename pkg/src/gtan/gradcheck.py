"""Compare tape gradients of the ranking loss against central differences."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .corpus import UNK, Answer, Question, Vocabulary
from .model import ABLATION_FLAGS, AblationConfig, ModelConfig, as_tensors
from .ranker import GTAN
from .tensor import Tensor
from .trainer import make_pairs, question_loss

TOY_CONFIG = ModelConfig(dim=4, layers=2, fc_layers=2, hidden=5, att_dim=3)


def toy_question(rng: np.random.Generator, num_answers: int = 3,
                 vocab_size: int = 12) -> tuple[Question, Vocabulary]:
    """A random encoded question whose answers share some words, with
    strictly ordered votes so every answer pair contributes to the loss."""
    def text(length):
        return tuple(int(t) for t in rng.integers(1, vocab_size, size=length))

    votes = rng.permutation(num_answers) + 1
    answers = tuple(Answer(f"a{i}", text(int(rng.integers(3, 6))), f"u{i}", int(votes[i]))
                    for i in range(num_answers))
    q = Question("toy", text(4), answers)
    tokens = (UNK,) + tuple(f"t{i}" for i in range(1, vocab_size))
    vocab = Vocabulary(tokens, (0,) * vocab_size, (0,) * vocab_size)
    return q, vocab


def _loss(model: GTAN, q: Question, params, pairs, margin) -> Tensor:
    return question_loss(model.forward(q, params).scores, pairs, margin)


def numeric_gradient(model: GTAN, q: Question, params: dict[str, np.ndarray], name: str,
                     pairs, margin: float = 1.0, epsilon: float = 1e-5) -> np.ndarray:
    base = {k: Tensor(v) for k, v in params.items()}
    grad = np.zeros_like(params[name])
    work = params[name].copy()
    for idx in np.ndindex(work.shape):
        orig = work[idx]
        vals = []
        for step in (epsilon, -epsilon):
            work[idx] = orig + step
            base[name] = Tensor(work)
            vals.append(_loss(model, q, base, pairs, margin).item())
        work[idx] = orig
        grad[idx] = (vals[0] - vals[1]) / (2 * epsilon)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), or the absolute gap when both are ~0."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return diff if scale < 1e-10 else diff / scale


@dataclass
class GradcheckResult:
    label: str
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def passed(self) -> bool:
        return self.worst[1] < self.tolerance

    def line(self) -> str:
        name, err = self.worst
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.label:<14} max_rel_err={err:.3e} worst={name}"


def gradcheck(ablation: AblationConfig | None = None, seed: int = 0,
              epsilon: float = 1e-5, tolerance: float = 1e-4,
              config: ModelConfig = TOY_CONFIG, train_words: bool = True) -> GradcheckResult:
    """Check every parameter gradient of the full forward plus hinge loss on
    a random 3-answer question."""
    rng = np.random.default_rng(seed)
    if ablation is not None:
        config = replace(config, ablation=ablation)
    q, vocab = toy_question(rng)
    model = GTAN.initialize(config, [q], vocab, rng)
    params = dict(model.params)
    if train_words:
        params["emb.words"] = np.array(model.tables.words)
    pairs = make_pairs(q.votes)

    P = as_tensors(params)
    with T.Tape() as tape:
        loss = _loss(model, q, P, pairs, 1.0)
    grads = T.backward(tape, loss, P)

    result = GradcheckResult(config.ablation.label, tolerance=tolerance)
    for name in params:
        num = numeric_gradient(model, q, params, name, pairs, 1.0, epsilon)
        result.errors[name] = relative_error(grads[name], num)
    return result


def gradcheck_all(seed: int = 0, epsilon: float = 1e-5,
                  tolerance: float = 1e-4) -> list[GradcheckResult]:
    """Full model followed by each single-flag ablation."""
    variants = [AblationConfig()] + [AblationConfig(**{f: True}) for f in ABLATION_FLAGS]
    return [gradcheck(v, seed, epsilon, tolerance) for v in variants]
