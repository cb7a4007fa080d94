"""Train-and-evaluate recipes shared by the command line and the test suite."""
from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import RunConfig
from .dataset import PreparedDataset
from .evaluation import MetricReport, paired_sign_test
from .model import ABLATION_FLAGS, ABLATION_ALIASES, ABLATION_LABELS, load_word_vectors
from .ranker import GTAN
from .trainer import STREAM_INIT, EpochRecord, TrainReport, evaluate_model, rng_for, train


def fit(ds: PreparedDataset, run: RunConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[GTAN, TrainReport]:
    """Initialize from the run seed and train on the dataset's train split,
    selecting on validation MRR."""
    rng = rng_for(run.seed, STREAM_INIT)
    train_qs = ds.part("train")
    words = None
    if run.word_vectors:
        words, _ = load_word_vectors(run.word_vectors, ds.vocab.tokens, run.dim, rng)
    model = GTAN.initialize(run.model_config(), train_qs, ds.vocab, rng, words)
    return train(model, train_qs, ds.part("validation"), run.train_config(), on_epoch)


def ablation_study(ds: PreparedDataset, run: RunConfig, only: Iterable[str] | None = None,
                   part: str = "test") -> list[dict]:
    """Train the full model and every single-component ablation with the
    shared seed; each row carries test metrics and a sign test on reciprocal
    ranks against the full model."""
    variants = [()] + [(f,) for f in ABLATION_FLAGS]
    if only:
        wanted = {ABLATION_ALIASES.get(n, n) for n in only}
        variants = [v for v in variants if set(v) & wanted or (not v and "full" in wanted)]
    questions = ds.part(part)
    rows, full_rr = [], None
    for flags in variants:
        model, report = fit(ds, replace(run, ablation=flags))
        m = evaluate_model(model, questions, workers=run.workers)
        rr = [r["rr"] for r in m.per_question]
        row = {"label": ABLATION_LABELS[flags[0]] if flags else "GTAN",
               "ablation": list(flags), "P@1": m.p_at_1, "MRR": m.mrr, "NDCG@3": m.ndcg,
               "selected_epoch": report.selected_epoch}
        if not flags:
            full_rr = rr
        elif full_rr is not None:
            row["sign_test_p"] = paired_sign_test(full_rr, rr)["p_value"]
        rows.append(row)
    return rows


def format_ablation(rows: Sequence[dict]) -> str:
    lines = [f"{'Variant':<14}{'P@1':>8}{'MRR':>8}{'NDCG@3':>8}{'sign p':>9}"]
    for r in rows:
        p = r.get("sign_test_p")
        lines.append(f"{r['label']:<14}{r['P@1']:>8.4f}{r['MRR']:>8.4f}{r['NDCG@3']:>8.4f}"
                     f"{'' if p is None else f'{p:.3g}':>9}")
    return "\n".join(lines) + "\n"


def layer_study(ds: PreparedDataset, run: RunConfig, layers: Sequence[int] = (1, 2),
                seeds: Sequence[int] = (0, 1, 2)) -> dict[int, list[float]]:
    """Best validation P@1 for each layer count and seed."""
    out = {}
    for t in layers:
        out[t] = []
        for s in seeds:
            _, report = fit(ds, replace(run, layers=t, seed=s))
            best = next(e for e in report.epochs if e.epoch == report.selected_epoch)
            out[t].append(best.val_p_at_1)
    return out


def split_metrics(model: GTAN, ds: PreparedDataset, part: str = "test",
                 workers: int = 1) -> MetricReport:
    return evaluate_model(model, ds.part(part), workers=workers)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0
