"""Command-line entry point: ``gtan <subcommand> ...``.

Every subcommand exits 0 on success. Failures print one JSON line
``{"error": <type>, "message": <text>}`` to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .corpus import Vocabulary, corpus_stats, format_stats, read_corpus, write_corpus
from .dataset import PARTS, load_dataset, prepare_dataset, write_dataset
from .errors import GTANError
from .evaluation import (analyze_similarity, evaluate, interval_histogram, oracle_scores,
                         rank_answers)
from .experiments import ablation_study, fit, format_ablation
from .gradcheck import gradcheck, gradcheck_all
from .model import (ABLATION_ALIASES, ABLATION_FLAGS, AblationConfig, init_word_table,
                    load_word_vectors)
from .synthetic import MODES, generate_synthetic
from .trainer import STREAM_INIT, evaluate_model, rng_for

log = logging.getLogger("gtan")

ABLATION_CHOICES = sorted(set(ABLATION_FLAGS) | set(ABLATION_ALIASES))


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), flush=True)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in RunConfig.keys()}
    if getattr(args, "ablation", None):
        overrides["ablation"] = tuple(args.ablation)
    return RunConfig.resolve(getattr(args, "config", None), overrides)


# ------------------------------------------------------------------ commands


def cmd_ingest(args) -> int:
    run = _run_config(args)
    raw = read_corpus(args.input)
    ds = prepare_dataset(raw, run.seed, **run.filter_kwargs())
    out = write_dataset(ds, args.out, args.name)
    run.save(out / "config.json")
    for i, p in enumerate(ds.filter_report.passes, 1):
        log.info("filter pass %d: %s", i, p)
    sys.stdout.write((out / "stats.txt").read_text(encoding="utf-8"))
    train, val, test = ds.split.sizes()
    _emit({"event": "ingest", "out": str(out), "train": train, "validation": val,
           "test": test, "vocab": len(ds.vocab), "filter_passes": ds.filter_report.num_passes})
    return 0


def cmd_gen_synthetic(args) -> int:
    run = _run_config(args)
    qs = generate_synthetic(args.questions, args.answers, vocab_size=args.vocab_size,
                            respondent_pool=args.respondents, signal_strength=args.signal,
                            seed=run.seed, mode=args.mode)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_corpus(qs, args.out)
    _emit({"event": "gen-synthetic", "out": args.out, "questions": len(qs),
           "mode": args.mode, "signal": args.signal, "seed": run.seed})
    return 0


def cmd_train(args) -> int:
    run = _run_config(args)
    ds = load_dataset(args.data)
    out = _outdir(args.out)
    run.save(out / "config.json")

    def stream(rec):
        _emit({"event": "epoch", **rec.__dict__})

    model, report = fit(ds, run, stream)
    save_checkpoint(model, out / "model.ckpt")
    (out / "train_report.jsonl").write_text(report.jsonl(), encoding="utf-8")
    (out / "train_summary.txt").write_text(report.summary(), encoding="utf-8")
    plotting.training_curve(report.records(), out / "training_curve.png", report.selected_epoch)
    sys.stdout.write(report.summary())
    _emit({"event": "train", "checkpoint": str(out / "model.ckpt"),
           "selected_epoch": report.selected_epoch})
    return 0


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.data)
    questions = ds.part(args.split)
    if args.oracle:
        report = evaluate(oracle_scores, questions)
    else:
        expect = None
        if args.config or any(getattr(args, k) is not None
                              for k in ("dim", "layers", "fc_layers", "hidden", "att_dim")):
            expect = _run_config(args).model_config()
        model = load_checkpoint(args.checkpoint, expect)
        questions = [model.encode(q, warn=False) for q in ds.part(args.split, encoded=False)]
        report = evaluate_model(model, questions, workers=args.workers or 0)
    sys.stdout.write(report.table())
    _emit({"event": "evaluate", "split": args.split, **report.summary()})
    if args.out:
        out = _outdir(args.out)
        (out / "metrics.txt").write_text(report.table(), encoding="utf-8")
        (out / "metrics.json").write_text(json.dumps(report.summary(), indent=1, sort_keys=True)
                                          + "\n", encoding="utf-8")
        (out / "per_question.csv").write_text(report.csv(), encoding="utf-8")
    return 0


def cmd_ablate(args) -> int:
    run = _run_config(args)
    ds = load_dataset(args.data)
    out = _outdir(args.out)
    run.save(out / "config.json")
    rows = ablation_study(ds, run, args.only, part=args.split)
    table = format_ablation(rows)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    (out / "ablation.json").write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    plotting.ablation_bars(rows, out / "ablation.png")
    sys.stdout.write(table)
    for r in rows:
        _emit({"event": "ablation", **r})
    return 0


def explain(raw_question, res) -> dict:
    """Per-answer question-word (alpha) and answer-word (beta) weights from a
    forward result, keyed by the raw tokens."""
    dump = {"question_id": raw_question.question_id, "answers": []}
    for i, a in enumerate(raw_question.answers):
        dump["answers"].append({
            "answer_id": a.answer_id,
            "score": float(res.score_values[i]),
            "alpha": [[t, float(w)] for t, w in zip(raw_question.tokens, res.alpha[i])],
            "beta": [[t, float(w)] for t, w in zip(a.tokens, res.beta[i])],
        })
    return dump


def cmd_rank(args) -> int:
    model = load_checkpoint(args.checkpoint)
    out = _outdir(args.out) if args.out else None
    for raw in read_corpus(args.questions):
        res = model.forward(model.encode(raw))
        scores = res.score_values
        for pos, i in enumerate(rank_answers(scores), 1):
            a = raw.answers[i]
            print(f"{raw.question_id}\t{pos}\t{a.answer_id}\t{a.respondent_id}\t{float(scores[i])!r}")
        if args.explain:
            dump = explain(raw, res)
            _emit({"event": "explain", **dump})
            if out is not None:
                best = dump["answers"][rank_answers(scores)[0]]
                if best["alpha"]:
                    toks, ws = zip(*best["alpha"])
                    plotting.attention_heatmap(toks, ws, out / f"{raw.question_id}_alpha.png",
                                               f"question words, answer {best['answer_id']}")
                if best["beta"]:
                    toks, ws = zip(*best["beta"])
                    plotting.attention_heatmap(toks, ws, out / f"{raw.question_id}_beta.png",
                                               f"answer {best['answer_id']} words")
    return 0


def cmd_gradcheck(args) -> int:
    run = _run_config(args)
    if args.ablation:
        results = [gradcheck(AblationConfig.from_names(args.ablation), run.seed, args.epsilon,
                             args.tolerance)]
    else:
        results = gradcheck_all(run.seed, args.epsilon, args.tolerance)
    for r in results:
        print(r.line())
        _emit({"event": "gradcheck", "variant": r.label, "passed": r.passed,
               "max_rel_err": r.worst[1], "worst": r.worst[0]})
    failed = [r for r in results if not r.passed]
    if failed:
        worst = max(failed, key=lambda r: r.worst[1])
        raise GTANError(f"gradient check failed for {len(failed)} variant(s); worst "
                        f"{worst.label} {worst.worst[0]} rel err {worst.worst[1]:.3e}")
    return 0


def _load_questions(args):
    if args.data:
        ds = load_dataset(args.data)
        return ds.questions, ds.vocab, Path(args.data).name
    qs = read_corpus(args.corpus)
    return qs, None, Path(args.corpus).stem


def cmd_analyze_sim(args) -> int:
    run = _run_config(args)
    questions, vocab, _ = _load_questions(args)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        vocab, table = model.vocab, model.params.get("emb.words", model.tables.words)
    else:
        if vocab is None:
            vocab = Vocabulary.build(questions)
        rng = rng_for(run.seed, STREAM_INIT)
        if run.word_vectors:
            table, _ = load_word_vectors(run.word_vectors, vocab.tokens, run.dim, rng)
        else:
            table = init_word_table(len(vocab), run.dim, rng)
    report = analyze_similarity([vocab.encode(q) for q in questions], np.asarray(table))
    sys.stdout.write(report.table())
    _emit({"event": "analyze-sim", **report.to_dict()})
    if args.out:
        out = _outdir(args.out)
        (out / "similarity.json").write_text(json.dumps(report.to_dict(), indent=1,
                                                        sort_keys=True) + "\n", encoding="utf-8")
        plotting.similarity_bars(report, out / "similarity.png")
    return 0


def cmd_stats(args) -> int:
    questions, vocab, name = _load_questions(args)
    stats = corpus_stats(questions, vocab)
    sys.stdout.write(format_stats(stats, name))
    _emit({"event": "stats", **stats})
    out = _outdir(args.out) if args.out else None
    if all(q.timestamp is not None and all(a.timestamp is not None for a in q.answers)
           for q in questions):
        hist = interval_histogram(questions)
        total = sum(hist.values()) or 1
        for label, count in hist.items():
            print(f"{label:>10}{count:>10}{100.0 * count / total:>8.1f}%")
        _emit({"event": "interval_histogram", "bins": hist})
        if out is not None:
            plotting.interval_histogram_plot(hist, out / "intervals.png")
    else:
        log.warning("timestamps missing; interval histogram skipped")
    return 0


# -------------------------------------------------------------------- parser


def _model_flags(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--dim", type=int)
    g.add_argument("--layers", type=int, help="propagation layers T")
    g.add_argument("--fc-layers", dest="fc_layers", type=int, help="FC layers K")
    g.add_argument("--hidden", type=int)
    g.add_argument("--att-dim", dest="att_dim", type=int)
    g.add_argument("--normalization", choices=["none", "row_l1"])
    g.add_argument("--ablation", action="append", choices=ABLATION_CHOICES,
                   help="disable a component (repeatable)")
    g.add_argument("--word-vectors", dest="word_vectors", help="text file of word vectors")
    g.add_argument("--margin", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--max-pairs", dest="max_pairs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--clip-norm", dest="clip_norm", type=float)
    g.add_argument("--train-word-embeddings", dest="train_word_embeddings",
                   action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="evaluation threads (0 = all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gtan", description="GTAN answer ranking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="filter, index and split a raw corpus")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="dataset")
    for flag in ("min_resp_answers", "min_answer_words", "min_answers", "max_answers",
                 "min_word_freq"):
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write a planted-signal corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--questions", type=int, default=200)
    p.add_argument("--answers", type=int, default=5)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=400)
    p.add_argument("--respondents", type=int, default=40)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--mode", choices=MODES, default="both")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", parents=[common], help="train and checkpoint a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="metrics of a checkpoint on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=PARTS, default="test")
    p.add_argument("--oracle", action="store_true", help="score answers by their votes")
    p.add_argument("--out")
    _model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="full model against each ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=PARTS, default="test")
    p.add_argument("--only", action="append", choices=ABLATION_CHOICES + ["full"])
    _model_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("rank", parents=[common], help="rank the answers of new questions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--questions", required=True, help="corpus-format JSONL file")
    p.add_argument("--explain", action="store_true")
    p.add_argument("--out", help="directory for attention heatmaps")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--ablation", action="append", choices=ABLATION_CHOICES)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    for name, func, text in (("analyze-sim", cmd_analyze_sim, "answer similarity by vote quartile"),
                             ("stats", cmd_stats, "corpus statistics and answer delays")):
        p = sub.add_parser(name, parents=[common], help=text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--data", help="prepared dataset directory")
        src.add_argument("--corpus", help="raw corpus JSONL")
        p.add_argument("--out")
        if name == "analyze-sim":
            p.add_argument("--checkpoint", help="use this model's word table")
            p.add_argument("--dim", type=int)
            p.add_argument("--word-vectors", dest="word_vectors")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "evaluate" and not args.oracle and not args.checkpoint:
        print(json.dumps({"error": "UsageError",
                          "message": "evaluate needs --checkpoint or --oracle"}), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (GTANError, OSError, ValueError, KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        print(json.dumps({"error": type(exc).__name__, "message": msg.splitlines()[0] if msg else ""}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
