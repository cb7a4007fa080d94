import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL, random_question, toy_model
from gtan.corpus import Answer, Question
from gtan.errors import ContractError, DimensionError
from gtan.graph import build_graph
from gtan.model import (ABLATION_FLAGS, AblationConfig, ModelConfig, answer_attention,
                        as_tensors, canonical_order, forward, gnn_layer, init_inputs,
                        param_shapes, question_attention, respondent_gate, score_head)
from gtan.tensor import Tensor


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def params_for(rng, config=SMALL, num_respondents=3, scale=0.5):
    return {name: rng.normal(0.0, scale, size=shape)
            for name, shape in param_shapes(config, num_respondents)}


# ------------------------------------------------------------- input layer


def test_init_inputs_uses_word_rows_and_text_means(tfidf15):
    table = np.arange(15 * 2, dtype=float).reshape(15, 2)
    q = Question("q", (1, 2), (Answer("a", (3,), "u", 1), Answer("b", (2, 2, 4), "v", 0)))
    g = build_graph(q, tfidf15)
    E = init_inputs(g, Tensor(table)).data
    assert np.array_equal(E[0], (table[1] + table[2]) / 2)
    assert np.array_equal(E[1], table[3])
    assert np.allclose(E[2], (2 * table[2] + table[4]) / 3)
    for node in g.word_nodes:
        assert np.array_equal(E[node], table[g.node_ids[node]])


# --------------------------------------------------------------- GNN layer


def dense_gnn_layer(E, A, types, W, Wg, bg):
    """Direct row-by-row evaluation of one layer."""
    H = A @ E
    X = np.hstack([E, H, E * H])
    Ebar = np.stack([np.maximum(W[types[i]] @ X[i], 0.0) for i in range(len(E))])
    gate = sigmoid(np.hstack([Ebar, E]) @ Wg.T + bg)
    return gate * Ebar + (1 - gate) * E, gate


def test_gnn_layer_matches_dense_oracle(rng, tfidf15):
    for k in range(20):
        q = random_question(rng, 15, qid=f"g{k}")
        g = build_graph(q, tfidf15)
        p = params_for(rng)
        E = rng.normal(size=(g.num_nodes, SMALL.dim))
        out, gate = gnn_layer(Tensor(E), g, as_tensors(p), 1)
        W = {t: p[f"gnn.W1.{t}"] for t in ("question", "answer", "word")}
        ref, ref_gate = dense_gnn_layer(E, g.adjacency, g.node_types, W, p["gnn.W_gate"],
                                        p["gnn.b_gate"])
        assert np.allclose(out.data, ref, atol=1e-12)
        assert np.allclose(gate, ref_gate, atol=1e-12)


def test_gnn_layer_with_zero_weights_halves_the_input(rng, tfidf15):
    q = random_question(rng, 15)
    g = build_graph(q, tfidf15)
    p = {k: np.zeros_like(v) for k, v in params_for(rng).items()}
    E = rng.normal(size=(g.num_nodes, SMALL.dim))
    out, gate = gnn_layer(Tensor(E), g, as_tensors(p), 1)
    assert np.allclose(gate, 0.5)
    assert np.allclose(out.data, 0.5 * E)


def test_isolated_node_uses_only_itself(rng, tfidf15):
    # the answer below has no words, so its aggregation is just E_i
    q = Question("q", (1,), (Answer("a", (), "u", 1), Answer("b", (1,), "v", 0)))
    g = build_graph(q, tfidf15)
    p = params_for(rng)
    E = rng.normal(size=(g.num_nodes, SMALL.dim))
    out, _ = gnn_layer(Tensor(E), g, as_tensors(p), 1)
    e = E[1]
    x = np.concatenate([e, e, e * e])
    ebar = np.maximum(p["gnn.W1.answer"] @ x, 0)
    gt = sigmoid(p["gnn.W_gate"] @ np.concatenate([ebar, e]) + p["gnn.b_gate"][0])
    assert np.allclose(out.data[1], gt * ebar + (1 - gt) * e)


def test_gnn_layer_rejects_wrong_row_count(rng, tfidf15):
    g = build_graph(random_question(rng, 15), tfidf15)
    with pytest.raises(DimensionError):
        gnn_layer(Tensor(np.zeros((g.num_nodes + 1, SMALL.dim))), g,
                  as_tensors(params_for(rng)), 1)


# --------------------------------------------------------- respondent gate


def test_respondent_gate_examples(rng):
    d = SMALL.dim
    e = rng.normal(size=(2, d))
    zero = {"resp.W": Tensor(np.zeros((d, 2 * d))), "resp.b": Tensor(np.zeros((1, d)))}
    out, gate = respondent_gate(Tensor(e), Tensor(e), Tensor(e), zero)
    assert np.allclose(out.data, 0.5 * e) and np.allclose(gate, 0.5)
    open_ = {"resp.W": Tensor(np.zeros((d, 2 * d))), "resp.b": Tensor(np.full((1, d), 50.0))}
    out, _ = respondent_gate(Tensor(e), Tensor(e), Tensor(e), open_)
    assert np.allclose(out.data, e)
    out, gate = respondent_gate(Tensor(e), Tensor(e), Tensor(e), zero, disabled=True)
    assert np.array_equal(out.data, e) and gate is None


# --------------------------------------------------------------- attention


def test_question_attention_single_word_and_identical_words(rng):
    p = as_tensors(params_for(rng))
    a = Tensor(rng.normal(size=(3, SMALL.dim)))
    w = rng.normal(size=(1, SMALL.dim))
    out, alpha = question_attention(a, Tensor(w), p)
    assert np.array_equal(alpha, np.ones((3, 1)))
    assert np.allclose(out.data, np.repeat(w, 3, axis=0))
    same = Tensor(np.repeat(w, 4, axis=0))
    _, alpha = question_attention(a, same, p)
    assert np.allclose(alpha, 0.25)


def test_question_attention_depends_on_the_answer(rng):
    p = as_tensors(params_for(rng, scale=1.0))
    a = Tensor(rng.normal(size=(2, SMALL.dim)))
    _, alpha = question_attention(a, Tensor(rng.normal(size=(5, SMALL.dim))), p)
    assert np.allclose(alpha.sum(axis=1), 1.0)
    assert not np.allclose(alpha[0], alpha[1])
    with pytest.raises(ContractError):
        question_attention(a, Tensor(np.zeros((0, SMALL.dim))), p)


def test_answer_attention_weights_per_answer(rng):
    p = as_tensors(params_for(rng))
    d = SMALL.dim
    lengths = [1, 3, 2]
    words = Tensor(rng.normal(size=(6, d)))
    out, beta = answer_attention(Tensor(rng.normal(size=(3, 2 * d))),
                                 Tensor(rng.normal(size=(3, d))), words, lengths, p)
    assert out.shape == (3, d)
    assert [len(b) for b in beta] == lengths
    assert beta[0][0] == 1.0 and np.allclose(out.data[0], words.data[0])
    assert all(abs(b.sum() - 1) < 1e-12 for b in beta)
    with pytest.raises(ContractError):
        answer_attention(Tensor(np.zeros((1, 2 * d))), Tensor(np.zeros((1, d))),
                         Tensor(np.zeros((0, d))), [0], p)


# -------------------------------------------------------------- score head


def test_score_head_zero_bias_and_hand_values():
    config = ModelConfig(dim=1, hidden=2, att_dim=1, fc_layers=2)
    names = dict(param_shapes(config, 0))
    zero = {k: Tensor(np.zeros(names[k])) for k in ("fc1.W", "fc1.b", "fc2.W", "fc2.b")}
    z = Tensor(np.arange(10.0).reshape(2, 5))
    assert np.array_equal(score_head(z, zero, 2).data, np.zeros((2, 1)))
    biased = dict(zero, **{"fc2.b": Tensor(np.array([[0.7]]))})
    assert np.array_equal(score_head(z, biased, 2).data, np.full((2, 1), 0.7))
    hand = {"fc1.W": Tensor(np.array([[1.0, 0, 0, 0, 0], [0, -1.0, 0, 0, 0]])),
            "fc1.b": Tensor(np.array([[0.0, 0.5]])),
            "fc2.W": Tensor(np.array([[2.0, 3.0]])), "fc2.b": Tensor(np.array([[1.0]]))}
    x = Tensor(np.array([[1.0, 0.2, 0, 0, 0]]))
    # hidden: relu([1, 0.3]) -> 2*1 + 3*0.3 + 1
    assert score_head(x, hand, 2).data[0, 0] == pytest.approx(3.9)
    with pytest.raises(DimensionError):
        score_head(Tensor(np.zeros((1, 4))), hand, 2)


# ------------------------------------------------------------ full forward


def test_zero_layers_leave_inputs_untouched(rng):
    model, qs = toy_model(rng, ModelConfig(dim=6, layers=0, hidden=7, att_dim=5))
    q = qs[0]
    out = model.forward(q)
    g = model.graph(q)
    order, _ = canonical_order(q, g)
    E0 = init_inputs(g.permuted(order), model.tables.word_tensor).data
    assert np.array_equal(out.representations.data, E0)
    assert out.gnn_gates == []


def test_scores_are_exactly_permutation_equivariant(rng):
    model, qs = toy_model(rng)
    for q in qs:
        s = model.scores(q)
        perm = rng.permutation(len(q.answers))
        shuffled = Question(q.question_id, q.tokens, tuple(q.answers[i] for i in perm))
        assert np.array_equal(model.scores(shuffled), s[perm])


def test_attention_weights_are_distributions_and_gates_open(rng):
    model, qs = toy_model(rng)
    for q in qs:
        out = model.forward(q)
        assert out.scores.shape == (len(q.answers), 1)
        for a, ans in zip(out.alpha, q.answers):
            assert len(a) == len(q.tokens) and abs(a.sum() - 1) < 1e-9 and (a >= 0).all()
        for b, ans in zip(out.beta, q.answers):
            assert len(b) == len(ans.tokens) and abs(b.sum() - 1) < 1e-9 and (b >= 0).all()
        assert ((out.respondent_gates > 0) & (out.respondent_gates < 1)).all()
        assert all(((g > 0) & (g < 1)).all() for g in out.gnn_gates)


@pytest.mark.parametrize("flag", ABLATION_FLAGS)
def test_every_ablation_runs_and_scores_each_answer(rng, flag):
    config = ModelConfig(dim=6, hidden=7, att_dim=5, ablation=AblationConfig(**{flag: True}))
    model, qs = toy_model(rng, config)
    for q in qs[:5]:
        out = model.forward(q)
        assert out.scores.shape == (len(q.answers), 1)
        assert np.isfinite(out.score_values).all()
    if flag == "no_graph":
        assert model.forward(qs[0]).gnn_gates == []
    if flag == "no_question_attention":
        a = model.forward(qs[0]).alpha[0]
        assert np.allclose(a, 1.0 / len(a))
    if flag == "no_respondent_gate":
        assert model.forward(qs[0]).respondent_gates is None


def _with_respondent(q, rid):
    return Question(q.question_id, q.tokens, tuple(
        Answer(a.answer_id, a.tokens, rid, a.votes) for a in q.answers))


@pytest.mark.parametrize("ablate", [False, True])
def test_respondent_identity_matters_unless_ablated(rng, ablate):
    config = ModelConfig(dim=6, hidden=7, att_dim=5,
                         ablation=AblationConfig(no_respondent=ablate))
    model, qs = toy_model(rng, config)
    known = sorted(model.tables.respondents)
    q = qs[0]
    same = np.array_equal(model.scores(_with_respondent(q, known[0])),
                          model.scores(_with_respondent(q, known[1])))
    assert same == ablate


def test_degenerate_model_scores_constant(rng):
    config = ModelConfig(dim=6, hidden=7, att_dim=5,
                         ablation=AblationConfig(no_graph=True, no_tri_attention=True))
    model, qs = toy_model(rng, config)
    p = dict(model.params)
    p["fc2.W"] = np.zeros_like(p["fc2.W"])
    p["fc2.b"] = np.array([[0.25]])
    s = model.with_params(p).scores(qs[0])
    assert np.array_equal(s, np.full(len(qs[0].answers), 0.25))


def test_tied_type_matrices_ignore_other_type_weights(rng):
    config = ModelConfig(dim=6, hidden=7, att_dim=5,
                         ablation=AblationConfig(no_type_matrices=True))
    model, qs = toy_model(rng, config)
    p = dict(model.params)
    for t in (1, 2):
        p[f"gnn.W{t}.answer"] = p[f"gnn.W{t}.answer"] + 1.0
        p[f"gnn.W{t}.word"] = -p[f"gnn.W{t}.word"]
    assert np.array_equal(model.with_params(p).scores(qs[0]), model.scores(qs[0]))


def test_answer_count_mismatch_is_a_contract_error(rng):
    model, qs = toy_model(rng)
    q = qs[0]
    g = model.graph(q)
    fewer = Question(q.question_id, q.tokens, q.answers + (Answer("z", (1,), "u0", 0),))
    with pytest.raises(ContractError):
        forward(fewer, g, model.tables, as_tensors(model.params), model.config)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_equivariance_property(seed):
    rng = np.random.default_rng(seed)
    model, qs = toy_model(rng, num_questions=3)
    q = qs[0]
    perm = rng.permutation(len(q.answers))
    shuffled = Question(q.question_id, q.tokens, tuple(q.answers[i] for i in perm))
    out, out_s = model.forward(q), model.forward(shuffled)
    assert np.array_equal(out_s.score_values, out.score_values[perm])
    for i, j in enumerate(perm):
        assert np.array_equal(out_s.beta[i], out.beta[j])
        assert np.array_equal(out_s.alpha[i], out.alpha[j])
