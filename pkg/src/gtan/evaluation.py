"""Ranking metrics, split evaluation and corpus analyses.

Votes define the ground truth. The "best answer" is any answer holding the
maximum vote count, so a vote-tied best answer at rank 1 counts as a hit.
NDCG@K uses binary relevance: an answer is relevant when it belongs to the
K highest-voted answers (vote ties broken by input order).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Question
from .errors import ContractError, UnsupportedDataError


def rank_answers(scores: Sequence[float]) -> list[int]:
    """Indices by descending score; equal scores keep input order."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ContractError("cannot rank an empty score list")
    return np.argsort(-s, kind="stable").tolist()


def _check(ranking, votes):
    if len(ranking) != len(votes):
        raise ContractError(f"ranking has {len(ranking)} entries, votes {len(votes)}")
    if not len(votes):
        raise ContractError("empty ranking")


def p_at_1(ranking: Sequence[int], votes: Sequence[int]) -> float:
    _check(ranking, votes)
    return 1.0 if votes[ranking[0]] == max(votes) else 0.0


def reciprocal_rank(ranking: Sequence[int], votes: Sequence[int]) -> float:
    _check(ranking, votes)
    best = max(votes)
    for pos, idx in enumerate(ranking, 1):
        if votes[idx] == best:
            return 1.0 / pos
    raise AssertionError("unreachable")


mrr = reciprocal_rank


def ndcg_at_k(ranking: Sequence[int], votes: Sequence[int], k: int = 3) -> float:
    _check(ranking, votes)
    if k < 1:
        raise ContractError("K must be >= 1")
    n = len(votes)
    cut = min(k, n)
    truth = np.argsort(-np.asarray(votes, dtype=np.float64), kind="stable")[:k]
    relevant = set(truth.tolist())
    discounts = 1.0 / np.log2(np.arange(2, cut + 2))
    dcg = sum(discounts[i] for i in range(cut) if ranking[i] in relevant)
    return float(dcg / discounts.sum())


# -------------------------------------------------------------- evaluation


@dataclass
class MetricReport:
    p_at_1: float
    mrr: float
    ndcg: float
    k: int = 3
    per_question: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {"P@1": self.p_at_1, "MRR": self.mrr, f"NDCG@{self.k}": self.ndcg,
                "questions": len(self.per_question)}

    def table(self) -> str:
        return (f"{'P@1':>8}{'MRR':>10}{f'NDCG@{self.k}':>10}{'#Que.':>8}\n"
                f"{self.p_at_1:>8.4f}{self.mrr:>10.4f}{self.ndcg:>10.4f}"
                f"{len(self.per_question):>8}\n")

    def csv(self) -> str:
        lines = [f"question_id,P@1,reciprocal_rank,NDCG@{self.k}"]
        for row in self.per_question:
            lines.append(f"{row['question_id']},{row['p_at_1']!r},{row['rr']!r},{row['ndcg']!r}")
        return "\n".join(lines) + "\n"


def metric_report(items: Sequence[tuple[str, Sequence[float], Sequence[int]]],
                  k: int = 3) -> MetricReport:
    """Aggregate (question_id, scores, votes) triples."""
    if not items:
        raise ContractError("cannot evaluate an empty split")
    rows = []
    for qid, scores, votes in items:
        ranking = rank_answers(scores)
        rows.append({"question_id": qid, "p_at_1": p_at_1(ranking, votes),
                     "rr": reciprocal_rank(ranking, votes),
                     "ndcg": ndcg_at_k(ranking, votes, k)})
    mean = lambda key: float(np.mean([r[key] for r in rows]))
    return MetricReport(mean("p_at_1"), mean("rr"), mean("ndcg"), k, rows)


def evaluate(score_fn: Callable[[Question], np.ndarray], questions: Sequence[Question],
             k: int = 3) -> MetricReport:
    """Score every question with ``score_fn`` and aggregate the metrics."""
    return metric_report([(q.question_id, score_fn(q), q.votes) for q in questions], k)


def oracle_scores(question: Question) -> np.ndarray:
    return np.asarray(question.votes, dtype=np.float64)


# --------------------------------------------------------- paired testing


def paired_sign_test(a: Sequence[float], b: Sequence[float]) -> dict:
    """Exact two-sided sign test on paired per-question values; ties dropped."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ContractError("paired samples differ in length")
    wins, losses = int((a > b).sum()), int((a < b).sum())
    n = wins + losses
    if n == 0:
        return {"wins": 0, "losses": 0, "ties": int(a.size), "p_value": 1.0}
    tail = sum(math.comb(n, i) for i in range(min(wins, losses) + 1)) / 2.0 ** n
    return {"wins": wins, "losses": losses, "ties": int(a.size) - n,
            "p_value": min(1.0, 2.0 * tail)}


# ----------------------------------------------------- similarity analysis


@dataclass
class SimilarityReport:
    top_top: float
    top_bottom: float
    bottom_bottom: float
    pair_counts: dict = field(default_factory=dict)
    questions_used: int = 0
    questions_skipped: int = 0

    @property
    def relative_gap(self) -> float:
        """(Top-Top - Bottom-Bottom) / |Bottom-Bottom|."""
        if self.bottom_bottom == 0:
            return math.inf if self.top_top > 0 else 0.0
        return (self.top_top - self.bottom_bottom) / abs(self.bottom_bottom)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["relative_gap"] = self.relative_gap
        return d

    def table(self) -> str:
        return (f"{'Top-Top':>10}{'Top-Bot':>10}{'Bot-Bot':>10}{'gap':>9}\n"
                f"{self.top_top:>10.4f}{self.top_bottom:>10.4f}{self.bottom_bottom:>10.4f}"
                f"{self.relative_gap:>9.1%}\n")


def quartile_groups(votes: Sequence[int]) -> tuple[list[int], list[int]]:
    """Top = vote ranks 1..ceil(n/4), Bottom = ranks floor(3n/4)+1..n."""
    n = len(votes)
    order = np.argsort(-np.asarray(votes, dtype=np.float64), kind="stable").tolist()
    return order[:math.ceil(n / 4)], order[(3 * n) // 4:]


def _cos(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def analyze_similarity(questions: Sequence[Question], embeddings: np.ndarray) -> SimilarityReport:
    """Mean cosine similarity of mean-pooled answer vectors within and across
    the top and bottom vote quartiles.

    ``questions`` are encoded; ``embeddings`` is indexed by token id. Each
    category is averaged per question first, then across questions.
    """
    sums = {"top_top": [], "top_bottom": [], "bottom_bottom": []}
    counts = {k: 0 for k in sums}
    used = skipped = 0
    for q in questions:
        if len(q.answers) < 4:
            skipped += 1
            continue
        used += 1
        vecs = [embeddings[list(a.tokens)].mean(axis=0) if a.tokens else
                np.zeros(embeddings.shape[1]) for a in q.answers]
        top, bottom = quartile_groups(q.votes)
        groups = {
            "top_top": [(i, j) for x, i in enumerate(top) for j in top[x + 1:]],
            "top_bottom": [(i, j) for i in top for j in bottom],
            "bottom_bottom": [(i, j) for x, i in enumerate(bottom) for j in bottom[x + 1:]],
        }
        for key, pairs in groups.items():
            if pairs:
                sums[key].append(np.mean([_cos(vecs[i], vecs[j]) for i, j in pairs]))
                counts[key] += len(pairs)
    mean = lambda key: float(np.mean(sums[key])) if sums[key] else float("nan")
    return SimilarityReport(mean("top_top"), mean("top_bottom"), mean("bottom_bottom"),
                            counts, used, skipped)


# ----------------------------------------------------- interval histogram

INTERVAL_EDGES = (1, 10, 100, 1_000, 10_000, 100_000)


def interval_histogram(questions: Sequence[Question]) -> dict[str, int]:
    """Counts of answer delays (minutes after the question) in decade bins.

    Bins are labelled by their upper edge: ``<100`` holds delays in
    [10, 100). Delays beyond the last edge land in ``>=100000``.
    """
    labels = [f"<{e}" for e in INTERVAL_EDGES] + [f">={INTERVAL_EDGES[-1]}"]
    hist = {lab: 0 for lab in labels}
    for q in questions:
        if q.timestamp is None:
            raise UnsupportedDataError(f"question {q.question_id} has no timestamp")
        for a in q.answers:
            if a.timestamp is None:
                raise UnsupportedDataError(f"answer {a.answer_id} has no timestamp")
            delay = max(0, a.timestamp - q.timestamp)
            k = int(np.searchsorted(INTERVAL_EDGES, delay, side="right"))
            hist[labels[k]] += 1
    return hist
