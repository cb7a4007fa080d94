"""Pairwise hinge training with Adam and validation-MRR model selection."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import Question
from .errors import ConfigError, DivergenceError, NonFiniteError
from .evaluation import MetricReport, metric_report
from .model import ModelConfig, as_tensors
from .optim import AdamState, adam_step, clip_by_global_norm
from .ranker import GTAN
from .tensor import Tensor

log = logging.getLogger(__name__)

# per-purpose random streams derived from the run seed
STREAM_SPLIT, STREAM_INIT, STREAM_SHUFFLE, STREAM_PAIRS = 1, 2, 3, 4


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.0
    lr: float = 0.0005
    epochs: int = 100
    patience: int = 10
    max_pairs: int | None = None
    batch_size: int = 1
    clip_norm: float | None = 5.0
    train_word_embeddings: bool = False
    seed: int = 0
    workers: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_pairs is not None and self.max_pairs < 1:
            raise ConfigError("max_pairs must be >= 1")


def make_pairs(votes: Sequence[int], max_pairs: int | None = None,
               rng: np.random.Generator | None = None) -> list[tuple[int, int]]:
    """All (i, j) with votes[i] > votes[j], optionally subsampled without
    replacement to ``max_pairs`` (order preserved)."""
    pairs = [(i, j) for i in range(len(votes)) for j in range(len(votes)) if votes[i] > votes[j]]
    if max_pairs is not None and len(pairs) > max_pairs:
        if rng is None:
            raise ValueError("subsampling pairs needs a random generator")
        keep = np.sort(rng.choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[k] for k in keep]
    return pairs


def question_loss(scores: Tensor, pairs: Sequence[tuple[int, int]], margin: float = 1.0) -> Tensor:
    """Sum over pairs of max(0, margin + s_j - s_i); ``scores`` is n x 1."""
    if not pairs:
        return Tensor(0.0)
    better = T.lookup(scores, [i for i, _ in pairs])
    worse = T.lookup(scores, [j for _, j in pairs])
    return T.reduce(T.relu(T.add_scalar(T.sub(worse, better), margin)), "sum")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    updates: int
    val_p_at_1: float
    val_mrr: float
    val_ndcg3: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    selected_epoch: int = 0
    seconds_per_question: float = field(default=0.0, compare=False)

    def records(self) -> list[dict]:
        return [asdict(e) for e in self.epochs]

    def jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def summary(self) -> str:
        lines = [f"{'epoch':>6}{'loss':>12}{'P@1':>8}{'MRR':>8}{'NDCG@3':>8}"]
        for e in self.epochs:
            mark = " *" if e.epoch == self.selected_epoch else ""
            lines.append(f"{e.epoch:>6}{e.train_loss:>12.4f}{e.val_p_at_1:>8.4f}"
                         f"{e.val_mrr:>8.4f}{e.val_ndcg3:>8.4f}{mark}")
        lines.append(f"selected epoch {self.selected_epoch}; "
                     f"{1000 * self.seconds_per_question:.2f} ms per training question")
        return "\n".join(lines) + "\n"


def evaluate_model(model: GTAN, questions: Sequence[Question], k: int = 3,
                   workers: int = 1) -> MetricReport:
    """Forward every question over a read-only parameter snapshot.

    ``workers`` > 1 scores questions on a thread pool; 0 means one thread
    per core. Results are identical for any worker count.
    """
    P = as_tensors(model.params)
    for q in questions:
        model.graph(q)  # fill the graph cache before any threads start

    def score(q):
        return q.question_id, model.forward(q, P).score_values, q.votes

    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(questions) < 2:
        items = [score(q) for q in questions]
    else:
        with ThreadPoolExecutor(workers) as pool:
            items = list(pool.map(score, questions))
    return metric_report(items, k)


def train(model: GTAN, train_questions: Sequence[Question],
          validation_questions: Sequence[Question],
          config: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[GTAN, TrainReport]:
    """Train on encoded questions and return the best-validation-MRR model.

    One Adam step per ``batch_size`` questions; questions whose answers are
    all vote-tied produce no pairs and no update. ``on_epoch`` receives each
    epoch record as soon as it is computed.
    """
    if not train_questions or not validation_questions:
        raise ConfigError("training needs nonempty train and validation splits")
    shuffle_rng = rng_for(config.seed, STREAM_SHUFFLE)
    pair_rng = rng_for(config.seed, STREAM_PAIRS)
    params = dict(model.params)
    if config.train_word_embeddings and "emb.words" not in params:
        params["emb.words"] = np.array(model.tables.words)
    state = AdamState(lr=config.lr)
    report = TrainReport()
    best_mrr, best_params, stale = -1.0, dict(params), 0
    busy, seen = 0.0, 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_questions))
        total, counted, updates = 0.0, 0, 0
        pending: dict[str, np.ndarray] | None = None
        in_batch = 0
        for pos, qi in enumerate(order):
            q = train_questions[qi]
            pairs = make_pairs(q.votes, config.max_pairs, pair_rng)
            if pairs:
                start = time.perf_counter()
                P = as_tensors(params)
                try:
                    with T.Tape() as tape:
                        out = model.forward(q, P)
                        loss = question_loss(out.scores, pairs, config.margin)
                    value = loss.item()
                except NonFiniteError:
                    value = float("nan")
                if not np.isfinite(value):
                    raise DivergenceError(q.question_id, epoch, value)
                grads = T.backward(tape, loss, P)
                total += value
                counted += 1
                pending = grads if pending is None else {k: pending[k] + grads[k] for k in grads}
                in_batch += 1
                busy += time.perf_counter() - start
                seen += 1
            last = pos == len(order) - 1
            if pending is not None and (in_batch == config.batch_size or last):
                start = time.perf_counter()
                if config.clip_norm:
                    pending = clip_by_global_norm(pending, config.clip_norm)
                params, state = adam_step(params, pending, state)
                busy += time.perf_counter() - start
                updates += 1
                pending, in_batch = None, 0

        current = model.with_params(params)
        val = evaluate_model(current, validation_questions, workers=config.workers)
        rec = EpochRecord(epoch, total / counted if counted else 0.0, updates,
                          val.p_at_1, val.mrr, val.ndcg)
        report.epochs.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.info("epoch %d loss %.4f val P@1 %.4f MRR %.4f", epoch, rec.train_loss,
                 rec.val_p_at_1, rec.val_mrr)
        if val.mrr > best_mrr:
            best_mrr, best_params, stale = val.mrr, dict(params), 0
            report.selected_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break

    report.seconds_per_question = busy / seen if seen else 0.0
    return model.with_params(best_params), report
