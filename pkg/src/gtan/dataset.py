"""Prepared dataset directories: filtered corpus, vocabulary, IDF, splits, stats.

Layout written by :func:`write_dataset`::

    corpus.jsonl   filtered questions, one JSON record per line, with tokens
    vocab.tsv      token, frequency, document frequency (row = vocabulary id)
    idf.tsv        token, smoothed IDF over the training split
    splits.json    question ids of the train / validation / test parts
    stats.txt      dataset statistics table
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import (DatasetSplit, FilterReport, Question, Vocabulary, compute_tfidf,
                     corpus_stats, filter_corpus, format_stats, read_corpus, split_corpus,
                     write_corpus)
from .errors import ContractError

ARTIFACTS = ("corpus.jsonl", "vocab.tsv", "idf.tsv", "splits.json", "stats.txt")
PARTS = ("train", "validation", "test")


@dataclass
class PreparedDataset:
    questions: list[Question]
    vocab: Vocabulary
    split: DatasetSplit
    filter_report: FilterReport | None = None

    def part(self, name: str, encoded: bool = True) -> list[Question]:
        if name not in PARTS:
            raise ContractError(f"unknown split {name!r}; expected one of {PARTS}")
        qs = self.split.select(self.questions, name)
        return [self.vocab.encode(q) for q in qs] if encoded else qs

    def stats(self) -> dict:
        return corpus_stats(self.questions, self.vocab)


def prepare_dataset(raw: Sequence[Question], seed: int = 0, **filters) -> PreparedDataset:
    """Filter, index and split a raw corpus."""
    questions, report = filter_corpus(raw, **filters)
    return PreparedDataset(questions, Vocabulary.build(questions),
                           split_corpus(questions, seed), report)


def write_dataset(ds: PreparedDataset, directory, name: str = "dataset") -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(ds.questions, out / "corpus.jsonl", with_tokens=True)
    v = ds.vocab
    (out / "vocab.tsv").write_text(
        "".join(f"{t}\t{f}\t{d}\n" for t, f, d in zip(v.tokens, v.freq, v.doc_freq)),
        encoding="utf-8")
    idf = compute_tfidf(ds.part("train"), len(v)).idf
    (out / "idf.tsv").write_text(
        "".join(f"{t}\t{x!r}\n" for t, x in zip(v.tokens, idf.tolist())), encoding="utf-8")
    splits = {p: list(getattr(ds.split, p)) for p in PARTS}
    (out / "splits.json").write_text(json.dumps(splits, indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
    (out / "stats.txt").write_text(format_stats(ds.stats(), name), encoding="utf-8")
    return out


def load_dataset(directory) -> PreparedDataset:
    d = Path(directory)
    missing = [a for a in ARTIFACTS if not (d / a).is_file()]
    if missing:
        raise ContractError(f"{d} is not a prepared dataset (missing {', '.join(missing)})")
    questions = read_corpus(d / "corpus.jsonl")
    tokens, freq, df = [], [], []
    for line in (d / "vocab.tsv").read_text(encoding="utf-8").splitlines():
        t, f, n = line.split("\t")
        tokens.append(t)
        freq.append(int(f))
        df.append(int(n))
    splits = json.loads((d / "splits.json").read_text(encoding="utf-8"))
    split = DatasetSplit(*(tuple(splits[p]) for p in PARTS))
    return PreparedDataset(questions, Vocabulary(tuple(tokens), tuple(freq), tuple(df)), split)
