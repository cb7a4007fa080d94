"""Corpus ingestion: parsing, tokenization, filtering, vocabulary, splits, TF-IDF.

Questions and answers carry string tokens until :meth:`Vocabulary.encode`
turns them into vocabulary indices; the same dataclasses serve both stages.
"""
from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, CorpusParseError, EmptyCorpusError

UNK = "<unk>"
UNK_INDEX = 0

_PUNCT = string.punctuation


@dataclass(frozen=True)
class Answer:
    answer_id: str
    tokens: tuple
    respondent_id: str
    votes: int
    timestamp: int | None = None


@dataclass(frozen=True)
class Question:
    question_id: str
    tokens: tuple
    answers: tuple[Answer, ...]
    timestamp: int | None = None

    @property
    def votes(self) -> list[int]:
        return [a.votes for a in self.answers]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip surrounding punctuation."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


# ------------------------------------------------------------------ file IO


def _require(rec: dict, key: str, kind, line: int, where: str):
    if key not in rec:
        raise CorpusParseError(f"{where} is missing field {key!r}", line)
    val = rec[key]
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise CorpusParseError(f"{where} field {key!r} has type {type(val).__name__}", line)
    return val


def _timestamp(rec: dict, line: int, where: str) -> int | None:
    ts = rec.get("timestamp")
    if ts is None:
        return None
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise CorpusParseError(f"{where} timestamp must be a number", line)
    return int(ts)


def _tokens(rec: dict, line: int, where: str) -> tuple[str, ...]:
    if "tokens" in rec:
        toks = rec["tokens"]
        if not isinstance(toks, list) or not all(isinstance(t, str) for t in toks):
            raise CorpusParseError(f"{where} tokens must be a list of strings", line)
        return tuple(toks)
    return tuple(tokenize(_require(rec, "text", str, line, where)))


def parse_record(rec: dict, line: int | None = None) -> Question:
    if not isinstance(rec, dict):
        raise CorpusParseError("record is not an object", line)
    qid = str(_require(rec, "question_id", (str, int), line, "question"))
    answers = []
    for k, a in enumerate(_require(rec, "answers", list, line, f"question {qid}")):
        where = f"answer {k} of question {qid}"
        if not isinstance(a, dict):
            raise CorpusParseError(f"{where} is not an object", line)
        votes = _require(a, "votes", int, line, where)
        if votes < 0:
            raise CorpusParseError(f"{where} has negative votes", line)
        answers.append(Answer(
            answer_id=str(_require(a, "answer_id", (str, int), line, where)),
            tokens=_tokens(a, line, where),
            respondent_id=str(_require(a, "respondent_id", (str, int), line, where)),
            votes=votes,
            timestamp=_timestamp(a, line, where),
        ))
    return Question(qid, _tokens(rec, line, f"question {qid}"), tuple(answers),
                    _timestamp(rec, line, f"question {qid}"))


def read_corpus(path) -> list[Question]:
    questions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"malformed JSON: {exc.msg}", lineno) from None
            questions.append(parse_record(rec, lineno))
    return questions


def question_record(q: Question, with_tokens: bool = False) -> dict:
    def text_fields(tokens):
        d = {"text": " ".join(str(t) for t in tokens)}
        if with_tokens:
            d["tokens"] = list(tokens)
        return d

    rec = {"question_id": q.question_id, **text_fields(q.tokens)}
    if q.timestamp is not None:
        rec["timestamp"] = q.timestamp
    answers = []
    for a in q.answers:
        ar = {"answer_id": a.answer_id, **text_fields(a.tokens),
              "respondent_id": a.respondent_id, "votes": a.votes}
        if a.timestamp is not None:
            ar["timestamp"] = a.timestamp
        answers.append(ar)
    rec["answers"] = answers
    return rec


def write_corpus(questions: Iterable[Question], path, with_tokens: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in questions:
            fh.write(json.dumps(question_record(q, with_tokens), ensure_ascii=False,
                                sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------- filtering


@dataclass
class FilterReport:
    passes: list[dict] = field(default_factory=list)

    @property
    def num_passes(self) -> int:
        return len(self.passes)


def _word_counts(questions: Sequence[Question]) -> Counter:
    counts = Counter()
    for q in questions:
        counts.update(q.tokens)
        for a in q.answers:
            counts.update(a.tokens)
    counts.pop(UNK, None)
    return counts


def filter_corpus(questions: Sequence[Question], min_resp_answers: int = 5,
                  min_answer_words: int = 5, min_answers: int = 5,
                  max_answers: int = 1000, min_word_freq: int = 10,
                  max_passes: int = 100) -> tuple[list[Question], FilterReport]:
    """Apply the respondent, answer-length, answer-count and word-frequency
    filters repeatedly until nothing changes.

    Rare words become :data:`UNK` instead of disappearing, so text lengths are
    preserved. Raises :class:`EmptyCorpusError` if nothing survives.
    """
    current = list(questions)
    report = FilterReport()
    for _ in range(max_passes):
        stats = {"respondent_answers_removed": 0, "short_answers_removed": 0,
                 "questions_removed": 0, "words_replaced": 0}

        per_resp = Counter(a.respondent_id for q in current for a in q.answers)
        weak = {r for r, c in per_resp.items() if c < min_resp_answers}
        staged = []
        for q in current:
            kept = []
            for a in q.answers:
                if a.respondent_id in weak:
                    stats["respondent_answers_removed"] += 1
                elif len(a.tokens) < min_answer_words:
                    stats["short_answers_removed"] += 1
                else:
                    kept.append(a)
            if not q.tokens or not (min_answers <= len(kept) <= max_answers):
                stats["questions_removed"] += 1
                continue
            staged.append(q if len(kept) == len(q.answers) else replace(q, answers=tuple(kept)))

        counts = _word_counts(staged)
        rare = {w for w, c in counts.items() if c < min_word_freq}
        if rare:
            def scrub(tokens):
                return tuple(UNK if t in rare else t for t in tokens)

            stats["words_replaced"] = len(rare)
            staged = [replace(q, tokens=scrub(q.tokens),
                              answers=tuple(replace(a, tokens=scrub(a.tokens)) for a in q.answers))
                      for q in staged]
        report.passes.append(stats)
        current = staged
        if not any(stats.values()):
            break
    if not current:
        raise EmptyCorpusError("no questions survive filtering")
    return current, report


# --------------------------------------------------------------- vocabulary


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    freq: tuple[int, ...]
    doc_freq: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def encode_tokens(self, tokens: Iterable[str]) -> tuple[int, ...]:
        get = self._index.get
        return tuple(get(t, UNK_INDEX) for t in tokens)

    def encode(self, q: Question) -> Question:
        return replace(q, tokens=self.encode_tokens(q.tokens),
                       answers=tuple(replace(a, tokens=self.encode_tokens(a.tokens))
                                     for a in q.answers))

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def build(cls, questions: Sequence[Question]) -> "Vocabulary":
        """Index every non-UNK token; most frequent first, ties alphabetical."""
        freq = _word_counts(questions)
        df = Counter()
        unk_freq = unk_df = 0
        for q in questions:
            for toks in [q.tokens] + [a.tokens for a in q.answers]:
                df.update(set(toks))
                unk_freq += sum(1 for t in toks if t == UNK)
                unk_df += UNK in toks
        words = sorted(freq, key=lambda w: (-freq[w], w))
        return cls(tokens=(UNK, *words),
                   freq=(unk_freq, *(freq[w] for w in words)),
                   doc_freq=(unk_df, *(df[w] for w in words)))


# ------------------------------------------------------------------- splits


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)

    def select(self, questions: Sequence[Question], part: str) -> list[Question]:
        by_id = {q.question_id: q for q in questions}
        return [by_id[qid] for qid in getattr(self, part)]


def split_corpus(questions: Sequence[Question], seed: int) -> DatasetSplit:
    """Shuffle question ids under ``seed`` and cut 80/10/10.

    Train and validation sizes are floored; the remainder goes to test.
    """
    n = len(questions)
    if n < 10:
        raise ContractError(f"split_corpus needs at least 10 questions, got {n}")
    ids = [q.question_id for q in questions]
    if len(set(ids)) != n:
        raise ContractError("duplicate question ids")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    n_train, n_val = (8 * n) // 10, n // 10
    return DatasetSplit(tuple(shuffled[:n_train]),
                        tuple(shuffled[n_train:n_train + n_val]),
                        tuple(shuffled[n_train + n_val:]))


# ------------------------------------------------------------------- TF-IDF


@dataclass(frozen=True)
class TfidfIndex:
    """Smoothed IDF table over training documents.

    A document is one question text or one answer text.
    ``doc_weights`` holds the precomputed maps of the training documents,
    keyed ``("q", question_id)`` or ``("a", answer_id)``.
    """
    idf: np.ndarray
    num_documents: int
    doc_weights: dict = field(default_factory=dict, compare=False, repr=False)

    def weights(self, tokens: Sequence[int]) -> dict[int, float]:
        if not tokens:
            return {}
        n = len(tokens)
        return {t: (c / n) * float(self.idf[t]) for t, c in Counter(tokens).items()}


def idf_from_counts(doc_freq: np.ndarray, num_documents: int) -> np.ndarray:
    return np.log((1.0 + num_documents) / (1.0 + doc_freq)) + 1.0


def compute_tfidf(train_questions: Sequence[Question], vocab_size: int) -> TfidfIndex:
    """Build the IDF table from encoded training questions only."""
    df = np.zeros(vocab_size, dtype=np.float64)
    docs = []
    for q in train_questions:
        docs.append((("q", q.question_id), q.tokens))
        docs.extend((("a", a.answer_id), a.tokens) for a in q.answers)
    for _, toks in docs:
        df[list(set(toks))] += 1
    index = TfidfIndex(idf_from_counts(df, len(docs)), len(docs))
    for key, toks in docs:
        index.doc_weights[key] = index.weights(toks)
    return index


# -------------------------------------------------------------------- stats


def corpus_stats(questions: Sequence[Question], vocab: Vocabulary | None = None) -> dict:
    n_ans = sum(len(q.answers) for q in questions)
    lengths = sum(len(a.tokens) for q in questions for a in q.answers)
    if vocab is not None:
        vocab_size = len(vocab)
    else:
        vocab_size = len(_word_counts(questions))
    return {
        "questions": len(questions),
        "answers": n_ans,
        "respondents": len({a.respondent_id for q in questions for a in q.answers}),
        "vocab": vocab_size,
        "avg_answer_length": lengths / n_ans if n_ans else 0.0,
    }


def format_stats(stats: dict, name: str = "dataset") -> str:
    head = f"{'Dataset':<12}{'#Que.':>10}{'#Ans.':>10}{'#Resp.':>10}{'Vocab.':>10}{'Avg. Len.':>11}"
    row = (f"{name:<12}{stats['questions']:>10}{stats['answers']:>10}"
           f"{stats['respondents']:>10}{stats['vocab']:>10}{stats['avg_answer_length']:>11.1f}")
    return head + "\n" + row + "\n"


def respondent_index(questions: Sequence[Question]) -> dict[str, int]:
    """Respondent id -> embedding row, in sorted id order. The UNK row is
    ``len(result)``."""
    ids = sorted({a.respondent_id for q in questions for a in q.answers})
    return {r: i for i, r in enumerate(ids)}

