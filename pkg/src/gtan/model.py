"""GTAN forward pass: typed gated GNN, tri-attention and the scoring head.

Row-vector convention throughout: node and answer representations are rows,
and a weight matrix ``W`` of shape (out, in) acts as ``x @ W.T``.

Node-type index of the type-specific GNN matrices: question=1, answer=2,
word=3. Parameter names encode it as ``gnn.W{t}.question`` and so on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .corpus import Question
from .errors import ContractError, DimensionError
from .graph import ANSWER, QUESTION, WORD, QuestionGraph
from .tensor import Tensor

NODE_TYPES = (QUESTION, ANSWER, WORD)

ABLATION_FLAGS = (
    "no_graph", "no_type_matrices", "no_question", "no_respondent", "no_tri_attention",
    "no_question_attention", "no_respondent_in_answer_attention", "no_respondent_gate",
)
ABLATION_ALIASES = {
    "no_tmat": "no_type_matrices", "no_que": "no_question", "no_res": "no_respondent",
    "no_tri_att": "no_tri_attention", "no_que_att": "no_question_attention",
    "no_res_att": "no_respondent_in_answer_attention", "no_res_gate": "no_respondent_gate",
}
ABLATION_LABELS = {
    "no_graph": "w/o Graph", "no_type_matrices": "w/o T-MAT", "no_question": "w/o Que",
    "no_respondent": "w/o Res", "no_tri_attention": "w/o Tri-Att",
    "no_question_attention": "w/o Que-Att", "no_respondent_in_answer_attention": "w/o Res-Att",
    "no_respondent_gate": "w/o Res-Gate",
}


@dataclass(frozen=True)
class AblationConfig:
    no_graph: bool = False
    no_type_matrices: bool = False
    no_question: bool = False
    no_respondent: bool = False
    no_tri_attention: bool = False
    no_question_attention: bool = False
    no_respondent_in_answer_attention: bool = False
    no_respondent_gate: bool = False

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AblationConfig":
        flags = {}
        for name in names:
            key = ABLATION_ALIASES.get(name, name)
            if key not in ABLATION_FLAGS:
                raise ValueError(f"unknown ablation {name!r}")
            flags[key] = True
        return cls(**flags)

    def names(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]

    @property
    def label(self) -> str:
        names = self.names()
        if not names:
            return "GTAN"
        return ", ".join(ABLATION_LABELS[n] for n in names)


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    layers: int = 2
    fc_layers: int = 2
    hidden: int = 64
    att_dim: int = 64
    ablation: AblationConfig = field(default_factory=AblationConfig)
    normalization: str = "none"

    def __post_init__(self):
        if self.dim <= 0 or self.hidden <= 0 or self.att_dim <= 0:
            raise ValueError("dimensions must be positive")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.fc_layers < 1:
            raise ValueError("fc_layers must be >= 1")

    @property
    def head_width(self) -> int:
        return (3 if self.ablation.no_tri_attention else 5) * self.dim


@dataclass
class EmbeddingTables:
    """Input word vectors (frozen unless trained through ``emb.words``) and
    the respondent id -> row map of ``resp.E``; unknown ids use the last row."""
    words: np.ndarray
    respondents: dict[str, int]

    def __post_init__(self):
        self._word_tensor = Tensor(self.words)

    @property
    def word_tensor(self) -> Tensor:
        return self._word_tensor

    @property
    def unk_respondent(self) -> int:
        return len(self.respondents)

    def respondent_row(self, respondent_id: str) -> int:
        return self.respondents.get(respondent_id, len(self.respondents))


def param_shapes(config: ModelConfig, num_respondents: int) -> list[tuple[str, tuple[int, int]]]:
    """Every trainable tensor in declaration order. ``num_respondents``
    excludes the UNK row."""
    d, a, h = config.dim, config.att_dim, config.hidden
    shapes = []
    for t in range(1, config.layers + 1):
        for tau in NODE_TYPES:
            shapes.append((f"gnn.W{t}.{tau}", (d, 3 * d)))
    shapes += [
        ("gnn.W_gate", (d, 2 * d)), ("gnn.b_gate", (1, d)),
        ("resp.W", (d, 2 * d)), ("resp.b", (1, d)), ("resp.E", (num_respondents + 1, d)),
        ("qatt.omega", (1, a)), ("qatt.W", (a, 2 * d)), ("qatt.b", (1, a)),
        ("aatt.omega", (1, a)), ("aatt.W", (a, 4 * d)), ("aatt.b", (1, a)),
    ]
    width = config.head_width
    for k in range(1, config.fc_layers + 1):
        out = 1 if k == config.fc_layers else h
        shapes += [(f"fc{k}.W", (out, width)), (f"fc{k}.b", (1, out))]
        width = out
    return shapes


def init_params(config: ModelConfig, num_respondents: int,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, N(0, 0.1) respondent embeddings."""
    params = {}
    for name, (rows, cols) in param_shapes(config, num_respondents):
        leaf = name.rsplit(".", 1)[1]
        if name == "resp.E":
            params[name] = rng.normal(0.0, 0.1, size=(rows, cols))
        elif leaf.startswith("b"):
            params[name] = np.zeros((rows, cols))
        else:
            limit = math.sqrt(6.0 / (rows + cols))
            params[name] = rng.uniform(-limit, limit, size=(rows, cols))
    return params


def init_word_table(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 0.1, size=(vocab_size, dim))


def load_word_vectors(path, tokens: Sequence[str], dim: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Random table overwritten by any rows found in a ``word v1 v2 ...`` text
    file. Returns the table and how many rows were loaded."""
    table = init_word_table(len(tokens), dim, rng)
    index = {t: i for i, t in enumerate(tokens)}
    found = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1 or parts[0] not in index:
                continue
            table[index[parts[0]]] = [float(x) for x in parts[1:]]
            found += 1
    return table, found


def as_tensors(params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor.parameter(v, name=k) for k, v in params.items()}


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    y = T.matmul(x, T.transpose(W))
    return y if b is None else T.add_bias(y, b)


# --------------------------------------------------------------- components


def init_inputs(graph: QuestionGraph, word_table: Tensor) -> Tensor:
    """E^0: word nodes take their table rows; question and answer nodes the
    mean of their token embeddings."""
    words = graph.word_ids
    col = {node: c for c, node in enumerate(graph.word_nodes)}
    pool = np.zeros((graph.num_nodes, len(words)))
    for row, positions in enumerate((graph.question_positions,) + graph.answer_positions):
        if positions:
            for p in positions:
                pool[row, col[p]] += 1.0
            pool[row] /= len(positions)
    for node, c in col.items():
        pool[node, c] = 1.0
    return T.matmul(Tensor(pool), T.lookup(word_table, words))


def gnn_layer(E: Tensor, graph: QuestionGraph, params: Mapping[str, Tensor], layer: int,
              adjacency: np.ndarray | None = None,
              tie_types: bool = False) -> tuple[Tensor, np.ndarray]:
    """One round of aggregation, type-specific update and gated blending.

    ``layer`` is 1-based. Returns the new node matrix and the gate values.
    """
    if E.rows != graph.num_nodes:
        raise DimensionError(f"node matrix has {E.rows} rows, graph has {graph.num_nodes} nodes")
    A = Tensor(graph.adjacency if adjacency is None else adjacency)
    H = T.matmul(A, E)
    X = T.concat_rows([E, H, T.mul(E, H)])
    if tie_types:
        Ebar = linear(X, params[f"gnn.W{layer}.{QUESTION}"])
    else:
        n = graph.num_answers
        bounds = [(QUESTION, 0, 1), (ANSWER, 1, 1 + n), (WORD, 1 + n, graph.num_nodes)]
        parts = [linear(T.slice_rows(X, lo, hi), params[f"gnn.W{layer}.{tau}"])
                 for tau, lo, hi in bounds if hi > lo]
        Ebar = T.stack_rows(parts)
    Ebar = T.relu(Ebar)
    gate = T.sigmoid(linear(T.concat_rows([Ebar, E]), params["gnn.W_gate"], params["gnn.b_gate"]))
    return T.add(E, T.mul(gate, T.sub(Ebar, E))), gate.data


def respondent_gate(question_rep: Tensor, answer_rep: Tensor, respondent: Tensor,
                    params: Mapping[str, Tensor],
                    disabled: bool = False) -> tuple[Tensor, np.ndarray | None]:
    """Per-dimension sigmoid filter on the respondent rows, conditioned on
    the question and answer representations. All inputs are n x d."""
    if disabled:
        return respondent, None
    gate = T.sigmoid(linear(T.concat_rows([question_rep, answer_rep]),
                            params["resp.W"], params["resp.b"]))
    return T.mul(gate, respondent), gate.data


def _segment_sum(x: Tensor, lengths: Sequence[int]) -> Tensor:
    seg = np.repeat(np.arange(len(lengths)), lengths)
    S = np.zeros((len(lengths), x.rows))
    S[seg, np.arange(x.rows)] = 1.0
    return T.matmul(Tensor(S), x)


def _attend(query: Tensor, keys: Tensor, lengths: Sequence[int], omega: Tensor, W: Tensor,
            b: Tensor) -> tuple[Tensor, np.ndarray]:
    # query and keys are aligned row by row, one row per attention slot
    logits = linear(T.tanh(linear(T.concat_rows([query, keys]), W, b)), omega)
    weights = T.segment_softmax(logits, lengths)
    return _segment_sum(T.scale_rows(keys, weights), lengths), weights.data[:, 0]


def question_attention(answer_reps: Tensor, word_reps: Tensor, params: Mapping[str, Tensor],
                       uniform: bool = False) -> tuple[Tensor, np.ndarray]:
    """Answer-specific question vectors.

    ``answer_reps`` is n x d (one query per answer), ``word_reps`` is
    l(q) x d. Returns the n x d representations and the n x l(q) weights.
    """
    n, lq = answer_reps.rows, word_reps.rows
    if lq == 0:
        raise ContractError("question attention over an empty question")
    if uniform:
        mean = T.reduce(word_reps, "mean_rows")
        return T.lookup(mean, [0] * n), np.full((n, lq), 1.0 / lq)
    query = T.lookup(answer_reps, np.repeat(np.arange(n), lq))
    keys = T.lookup(word_reps, np.tile(np.arange(lq), n))
    out, w = _attend(query, keys, [lq] * n, params["qatt.omega"], params["qatt.W"],
                     params["qatt.b"])
    return out, w.reshape(n, lq)


def answer_attention(question_reps: Tensor, respondent_reps: Tensor, word_reps: Tensor,
                     lengths: Sequence[int],
                     params: Mapping[str, Tensor]) -> tuple[Tensor, list[np.ndarray]]:
    """Context-aware answer vectors.

    ``question_reps`` is n x 2d, ``respondent_reps`` n x d, and
    ``word_reps`` stacks every answer's token representations (sum of
    ``lengths`` rows). Returns n x d vectors and one weight array per answer.
    """
    lengths = list(lengths)
    if any(l <= 0 for l in lengths):
        raise ContractError("answer attention over an empty answer")
    if word_reps.rows != sum(lengths):
        raise DimensionError(f"{word_reps.rows} word rows for answer lengths {lengths}")
    per_slot = np.repeat(np.arange(len(lengths)), lengths)
    query = T.lookup(T.concat_rows([question_reps, respondent_reps]), per_slot)
    out, w = _attend(query, word_reps, lengths, params["aatt.omega"], params["aatt.W"],
                     params["aatt.b"])
    return out, np.split(w, np.cumsum(lengths)[:-1])


def score_head(z: Tensor, params: Mapping[str, Tensor], fc_layers: int) -> Tensor:
    """K fully-connected layers, ReLU between them, linear output (n x 1)."""
    h = z
    for k in range(1, fc_layers + 1):
        W = params[f"fc{k}.W"]
        if h.cols != W.cols:
            raise DimensionError(f"score head layer {k} expects width {W.cols}, got {h.cols}")
        h = linear(h, W, params[f"fc{k}.b"])
        if k < fc_layers:
            h = T.relu(h)
    return h


# ------------------------------------------------------------------ forward


@dataclass
class ForwardOutput:
    scores: Tensor                      # n x 1, input answer order
    alpha: list[np.ndarray]             # question-word weights per answer
    beta: list[np.ndarray]              # answer-word weights per answer
    respondent_gates: np.ndarray | None  # n x d
    gnn_gates: list[np.ndarray] = field(default_factory=list)
    representations: Tensor | None = None  # graph-based node matrix (canonical order)

    @property
    def score_values(self) -> np.ndarray:
        return self.scores.data[:, 0].copy()


def canonical_order(question: Question, graph: QuestionGraph) -> tuple[list[int], list[int]]:
    """Node order that depends only on answer and word content.

    Answers are sorted by (id, respondent, tokens) and word nodes by
    vocabulary index, so permuting the input answers yields bitwise-identical
    arithmetic and exactly permuted scores.
    """
    answers = sorted(range(len(question.answers)),
                     key=lambda k: (question.answers[k].answer_id,
                                    question.answers[k].respondent_id,
                                    question.answers[k].tokens))
    words = sorted(graph.word_nodes, key=lambda i: graph.node_ids[i])
    return [0] + [1 + k for k in answers] + words, answers


def forward(question: Question, graph: QuestionGraph, tables: EmbeddingTables,
            params: Mapping[str, Tensor], config: ModelConfig) -> ForwardOutput:
    """Score every answer of an encoded question.

    ``params`` maps names to tensors (see :func:`as_tensors`); include
    ``emb.words`` to train the word table.
    """
    n = len(question.answers)
    if n != graph.num_answers:
        raise ContractError(f"question has {n} answers, graph has {graph.num_answers}")
    if n == 0:
        raise ContractError("question without answers")
    ab = config.ablation
    order, answer_order = canonical_order(question, graph)
    g = graph.permuted(order)
    answers = [question.answers[k] for k in answer_order]
    d = config.dim

    word_table = params.get("emb.words", tables.word_tensor)
    E = init_inputs(g, word_table)
    adjacency = None
    if ab.no_question:
        adjacency = np.array(g.adjacency)
        adjacency[0, :] = 0.0
        adjacency[:, 0] = 0.0
        adjacency[0, 0] = 1.0
    gnn_gates = []
    if not ab.no_graph:
        for t in range(1, config.layers + 1):
            E, gate = gnn_layer(E, g, params, t, adjacency, tie_types=ab.no_type_matrices)
            gnn_gates.append(gate)

    zeros_d = Tensor.zeros(n, d)
    q_rep = zeros_d if ab.no_question else T.lookup(E, [0] * n)
    a_rep = T.slice_rows(E, 1, 1 + n)
    e_u = T.lookup(params["resp.E"], [tables.respondent_row(a.respondent_id) for a in answers])

    alpha = [np.zeros(0)] * n
    beta = [np.zeros(0)] * n
    resp_gates = None
    if ab.no_tri_attention:
        z = T.concat_rows([q_rep, a_rep, zeros_d if ab.no_respondent else e_u])
    else:
        eu_bar, resp_gates = respondent_gate(q_rep, a_rep, e_u, params,
                                             disabled=ab.no_respondent_gate)
        if ab.no_respondent:
            eu_bar = zeros_d
        if ab.no_question:
            q_bar = Tensor.zeros(n, 2 * d)
        else:
            q_words = T.lookup(E, g.question_positions)
            q_tilde, alpha_m = question_attention(a_rep, q_words, params,
                                                  uniform=ab.no_question_attention)
            q_bar = T.concat_rows([q_tilde, q_rep])
            alpha = list(alpha_m)
        lengths = [len(p) for p in g.answer_positions]
        a_words = T.lookup(E, [p for pos in g.answer_positions for p in pos])
        att_resp = zeros_d if ab.no_respondent_in_answer_attention else eu_bar
        a_tilde, beta = answer_attention(q_bar, att_resp, a_words, lengths, params)
        a_bar = T.concat_rows([a_tilde, a_rep])
        z = T.concat_rows([q_bar, a_bar, eu_bar])

    scores = score_head(z, params, config.fc_layers)
    if answer_order != list(range(n)):
        inv = np.empty(n, dtype=np.int64)
        inv[answer_order] = np.arange(n)
        scores = T.lookup(scores, inv)
        alpha = [alpha[i] for i in inv]
        beta = [beta[i] for i in inv]
        if resp_gates is not None:
            resp_gates = resp_gates[inv]
    return ForwardOutput(scores, alpha, beta, resp_gates, gnn_gates, E)
