"""Planted-signal CQA corpora for desk-scale verification.

Each question draws a private set of topic words. Answers are built from
``focus_words`` distinct content words plus common filler words; the
higher an answer's latent content quality, the more of its focus words
come from the question's topic set. Low-quality answers take their focus
words from their own random sets instead. Every content word is equally
likely to be topical or not across the corpus, so no single word predicts
quality: only agreement with sibling answers does. That agreement is
visible through answer-word-answer paths in the question graph.

Respondents carry a latent skill. ``mode`` selects which latent drives
the votes:

* ``"both"``: skill plus content quality
* ``"respondent"``: skill only, and no answer shares topic words
* ``"correlation"``: content quality only
"""
from __future__ import annotations

import math

import numpy as np

from .corpus import Answer, Question

MODES = ("both", "respondent", "correlation")


def _pick_respondents(rng, usage: np.ndarray, n: int) -> np.ndarray:
    # least-used first with random tie-breaks: keeps every respondent near
    # the pool average so the respondent filter never bites
    key = usage + rng.random(len(usage))
    chosen = np.argsort(key, kind="stable")[:n]
    usage[chosen] += 1
    return chosen


def _votes_from_latent(rng, z: np.ndarray) -> list[int]:
    order = np.argsort(-z, kind="stable")
    votes = np.empty(len(z), dtype=np.int64)
    v = int(rng.integers(0, 3))
    for pos in order[::-1]:
        votes[pos] = v
        v += int(rng.geometric(0.3))
    return votes.tolist()


def generate_synthetic(num_questions: int = 200, answers_per_question: int = 5,
                       vocab_size: int = 400, respondent_pool: int = 40,
                       signal_strength: float = 1.0, seed: int = 0, *,
                       mode: str = "both", answer_length: int = 16,
                       question_length: int = 10, focus_words: int = 8,
                       topic_size: int = 8, question_overlap: float = 0.2,
                       common_words: int = 20) -> list[Question]:
    """Generate a corpus of questions with string tokens.

    ``signal_strength`` in [0, 1] blends the planted latent with independent
    noise when drawing votes; at 0 the votes ignore text and respondents.
    ``vocab_size`` counts content words only; ``common_words`` filler words
    come on top.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    for name, val in [("num_questions", num_questions),
                      ("answers_per_question", answers_per_question),
                      ("vocab_size", vocab_size), ("respondent_pool", respondent_pool),
                      ("answer_length", answer_length), ("question_length", question_length),
                      ("focus_words", focus_words), ("topic_size", topic_size)]:
        if val <= 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if not 0.0 <= signal_strength <= 1.0:
        raise ValueError("signal_strength must lie in [0, 1]")
    if answers_per_question > respondent_pool:
        raise ValueError("respondent_pool must be at least answers_per_question")
    if focus_words > answer_length:
        raise ValueError("focus_words cannot exceed answer_length")
    if topic_size + 2 * max(focus_words, question_length) > vocab_size:
        raise ValueError("vocab_size too small for the requested topic/focus sizes")

    rng = np.random.default_rng(seed)
    content = np.array([f"w{k:04d}" for k in range(vocab_size)])
    filler = np.array([f"c{k:02d}" for k in range(common_words)])
    filler_p = 1.0 / np.arange(1, common_words + 1)
    filler_p /= filler_p.sum()
    skill = rng.standard_normal(respondent_pool)
    usage = np.zeros(respondent_pool)
    n = answers_per_question
    s = float(signal_strength)

    def fill(count):
        if count <= 0 or common_words == 0:
            return []
        return list(rng.choice(filler, size=count, p=filler_p))

    def off_topic(topic_idx, count):
        mask = np.ones(vocab_size, dtype=bool)
        mask[topic_idx] = False
        return list(rng.choice(content[mask], size=count, replace=False))

    questions = []
    for qi in range(num_questions):
        resp = _pick_respondents(rng, usage, n)
        quality = rng.standard_normal(n)
        noise = rng.standard_normal(n)
        topic_idx = rng.choice(vocab_size, size=topic_size, replace=False)
        topic = content[topic_idx]

        if mode == "both":
            signal = (skill[resp] + quality) / math.sqrt(2.0)
        elif mode == "respondent":
            signal = skill[resp]
        else:
            signal = quality
        votes = _votes_from_latent(rng, s * signal + (1.0 - s) * noise)

        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(-quality, kind="stable")] = np.arange(n)
        q_time = qi * 60
        answers = []
        for k in range(n):
            if mode == "respondent":
                shared = 0
            elif n == 1:
                shared = focus_words
            else:
                shared = int(round(focus_words * (n - 1 - rank[k]) / (n - 1)))
            shared = min(shared, topic_size)
            words = list(rng.choice(topic, size=shared, replace=False)) if shared else []
            words += off_topic(topic_idx, focus_words - shared)
            words += fill(answer_length - focus_words)
            rng.shuffle(words)
            delay = int(rng.lognormal(mean=math.log(60.0), sigma=1.5))
            answers.append(Answer(answer_id=f"a{qi:05d}_{k}", tokens=tuple(str(w) for w in words),
                                  respondent_id=f"u{int(resp[k]):04d}", votes=votes[k],
                                  timestamp=q_time + delay))

        overlap = int(round(question_overlap * question_length)) if mode != "respondent" else 0
        overlap = min(overlap, topic_size)
        q_words = list(rng.choice(topic, size=overlap, replace=False)) if overlap else []
        rest = question_length - overlap
        q_words += off_topic(topic_idx, rest - rest // 2)
        q_words += fill(rest // 2)
        rng.shuffle(q_words)
        questions.append(Question(question_id=f"q{qi:05d}", tokens=tuple(str(w) for w in q_words),
                                  answers=tuple(answers), timestamp=q_time))
    return questions
