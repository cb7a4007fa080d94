"""Per-question heterogeneous text graphs.

Node order is fixed: the question node, then one node per answer in input
order, then one node per distinct word in order of first occurrence
(question text first, then answers). Question-word and answer-word edges
carry TF-IDF weights; every node has a unit self-loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .corpus import Question, TfidfIndex
from .errors import ContractError

QUESTION, ANSWER, WORD = "question", "answer", "word"
NORMALIZATION_MODES = ("none", "row_l1")


@dataclass(frozen=True)
class QuestionGraph:
    node_types: tuple[str, ...]
    node_ids: tuple           # question id, answer ids, then vocabulary indices
    edges: dict = field(repr=False)   # (i, j) -> weight, off-diagonal, both directions
    question_positions: tuple[int, ...]          # node of each question token
    answer_positions: tuple[tuple[int, ...], ...]  # node of each answer token
    normalization: str = "none"

    @property
    def num_nodes(self) -> int:
        return len(self.node_types)

    @property
    def num_answers(self) -> int:
        return len(self.answer_positions)

    @property
    def answer_nodes(self) -> range:
        return range(1, 1 + self.num_answers)

    @property
    def word_nodes(self) -> range:
        return range(1 + self.num_answers, self.num_nodes)

    @property
    def word_ids(self) -> tuple[int, ...]:
        return tuple(self.node_ids[1 + self.num_answers:])

    def word_node(self, word_id: int) -> int:
        return self._word_lookup[word_id]

    @cached_property
    def _word_lookup(self) -> dict[int, int]:
        return {w: i for i, w in zip(self.word_nodes, self.word_ids)}

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense matrix A with the unit diagonal included. Read-only."""
        a = np.eye(self.num_nodes)
        for (i, j), w in self.edges.items():
            a[i, j] = w
        a.setflags(write=False)
        return a

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for (r, j) in self.edges if r == i)

    def degree(self, i: int) -> int:
        return sum(1 for (r, _) in self.edges if r == i)

    def permuted(self, order) -> "QuestionGraph":
        """Relabel nodes so that new node ``k`` is old node ``order[k]``.

        ``order`` must keep the question first and the node types contiguous.
        """
        order = list(order)
        inv = {old: new for new, old in enumerate(order)}
        n = self.num_answers
        return QuestionGraph(
            node_types=tuple(self.node_types[o] for o in order),
            node_ids=tuple(self.node_ids[o] for o in order),
            edges={(inv[i], inv[j]): w for (i, j), w in self.edges.items()},
            question_positions=tuple(inv[p] for p in self.question_positions),
            answer_positions=tuple(tuple(inv[p] for p in self.answer_positions[order[k] - 1])
                                   for k in range(1, 1 + n)),
            normalization=self.normalization,
        )


def build_graph(question: Question, tfidf: TfidfIndex) -> QuestionGraph:
    """Build the graph of an encoded question (tokens are vocabulary ids)."""
    vocab_size = len(tfidf.idf)
    n = len(question.answers)
    words: dict[int, int] = {}
    texts = [question.tokens] + [a.tokens for a in question.answers]
    for toks in texts:
        for t in toks:
            if not 0 <= t < vocab_size:
                raise ContractError(f"token id {t} outside vocabulary of size {vocab_size}")
            if t not in words:
                words[t] = 1 + n + len(words)

    edges = {}
    for src, toks in enumerate(texts):
        for t, w in tfidf.weights(toks).items():
            dst = words[t]
            edges[(src, dst)] = w
            edges[(dst, src)] = w

    return QuestionGraph(
        node_types=(QUESTION,) + (ANSWER,) * n + (WORD,) * len(words),
        node_ids=(question.question_id,) + tuple(a.answer_id for a in question.answers)
        + tuple(words),
        edges=edges,
        question_positions=tuple(words[t] for t in question.tokens),
        answer_positions=tuple(tuple(words[t] for t in a.tokens) for a in question.answers),
    )


def normalize_adjacency(graph: QuestionGraph, mode: str = "none") -> QuestionGraph:
    """``row_l1`` rescales each row's off-diagonal weights to sum to one.

    The result is no longer symmetric; row ``i`` then holds the aggregation
    weights node ``i`` applies to its neighbors. Self-loops stay at 1.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization {mode!r}")
    if mode == "none" or graph.normalization == mode:
        return graph
    sums: dict[int, float] = {}
    for (i, _), w in graph.edges.items():
        sums[i] = sums.get(i, 0.0) + w
    edges = {(i, j): w / sums[i] for (i, j), w in graph.edges.items()}
    return QuestionGraph(graph.node_types, graph.node_ids, edges, graph.question_positions,
                         graph.answer_positions, normalization=mode)


def dump_edges(graph: QuestionGraph) -> str:
    """Edge list, one ``src_type:src_id dst_type:dst_id weight`` per line.

    Self-loops are included so the dump reconstructs ``A`` exactly.
    """
    lines = []
    label = [f"{t}:{i}" for t, i in zip(graph.node_types, graph.node_ids)]
    for i in range(graph.num_nodes):
        lines.append(f"{label[i]} {label[i]} {1.0!r}")
    for (i, j) in sorted(graph.edges):
        lines.append(f"{label[i]} {label[j]} {graph.edges[(i, j)]!r}")
    return "\n".join(lines) + "\n"
