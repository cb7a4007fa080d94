"""A trained or trainable GTAN bundled with everything needed to score raw
questions: vocabulary, IDF table, word vectors and respondent index."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import Question, TfidfIndex, Vocabulary, compute_tfidf, respondent_index
from .graph import QuestionGraph, build_graph, normalize_adjacency
from .model import (EmbeddingTables, ForwardOutput, ModelConfig, as_tensors, forward,
                    init_params, init_word_table)
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class GTAN:
    config: ModelConfig
    params: dict[str, np.ndarray]
    tables: EmbeddingTables
    vocab: Vocabulary
    tfidf: TfidfIndex
    _graphs: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def initialize(cls, config: ModelConfig, train_questions: Sequence[Question],
                   vocab: Vocabulary, rng: np.random.Generator,
                   word_table: np.ndarray | None = None) -> "GTAN":
        """Fresh model for encoded training questions; IDF and the respondent
        index come from the training split only."""
        tfidf = compute_tfidf(train_questions, len(vocab))
        respondents = respondent_index(train_questions)
        params = init_params(config, len(respondents), rng)
        if word_table is None:
            word_table = init_word_table(len(vocab), config.dim, rng)
        return cls(config, params, EmbeddingTables(word_table, respondents), vocab, tfidf)

    def with_params(self, params: Mapping[str, np.ndarray]) -> "GTAN":
        return replace(self, params=dict(params), _graphs=self._graphs)

    def graph(self, question: Question) -> QuestionGraph:
        g = self._graphs.get(question)
        if g is None:
            g = normalize_adjacency(build_graph(question, self.tfidf), self.config.normalization)
            self._graphs[question] = g
        return g

    def forward(self, question: Question, params: Mapping[str, Tensor] | None = None) -> ForwardOutput:
        if params is None:
            params = as_tensors(self.params)
        return forward(question, self.graph(question), self.tables, params, self.config)

    def scores(self, question: Question) -> np.ndarray:
        return self.forward(question).score_values

    def encode(self, question: Question, warn: bool = True) -> Question:
        """Map string tokens to vocabulary ids, warning about unknown words
        and respondents (they fall back to the UNK rows)."""
        if warn:
            unknown = {t for t in question.tokens if t not in self.vocab}
            for a in question.answers:
                unknown.update(t for t in a.tokens if t not in self.vocab)
            if unknown:
                log.warning("question %s: %d unknown word(s) mapped to UNK",
                            question.question_id, len(unknown))
            new_resp = {a.respondent_id for a in question.answers
                        if a.respondent_id not in self.tables.respondents}
            if new_resp:
                log.warning("question %s: unknown respondent(s) %s use the UNK row",
                            question.question_id, ", ".join(sorted(new_resp)))
        return self.vocab.encode(question)
