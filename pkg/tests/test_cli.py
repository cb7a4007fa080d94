import csv
import json
import subprocess
import sys

import pytest

from gtan.checkpoint import load_checkpoint
from gtan.cli import main
from gtan.corpus import read_corpus, write_corpus
from gtan.dataset import ARTIFACTS, load_dataset

SMALL_FLAGS = ["--dim", "8", "--hidden", "8", "--att-dim", "8", "--epochs", "2", "--seed", "3"]
FILTERS = ["--min-word-freq", "2", "--seed", "3"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def records(out):
    return [json.loads(line) for line in out.splitlines() if line.startswith("{")]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "raw.jsonl"
    assert main(["gen-synthetic", "--out", str(corpus), "--questions", "40", "--vocab-size",
                 "120", "--seed", "3"]) == 0
    assert main(["ingest", str(corpus), "--out", str(root / "data"), "--name", "toy"]
                + FILTERS) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "run")]
                + SMALL_FLAGS) == 0
    return root


def test_ingest_writes_artifacts_deterministically(pipeline, tmp_path, capsys):
    data = pipeline / "data"
    assert sorted(p.name for p in data.iterdir()) == sorted(ARTIFACTS + ("config.json",))
    code, out, _ = run(["ingest", pipeline / "raw.jsonl", "--out", tmp_path / "again",
                        "--name", "toy"] + FILTERS, capsys)
    assert code == 0
    assert records(out)[-1]["event"] == "ingest"
    for name in ARTIFACTS + ("config.json",):
        assert (tmp_path / "again" / name).read_bytes() == (data / name).read_bytes()


def test_ingest_parse_error_is_one_json_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"question_id": "q", "text": "t", "answers": []}\n{oops\n')
    code, out, err = run(["ingest", bad, "--out", tmp_path / "x"], capsys)
    assert code == 1
    lines = err.strip().splitlines()
    assert len(lines) == 1
    msg = json.loads(lines[0])
    assert msg["error"] == "CorpusParseError" and "line 2" in msg["message"]


def test_train_outputs(pipeline):
    r = pipeline / "run"
    for name in ("model.ckpt", "train_report.jsonl", "train_summary.txt", "training_curve.png",
                 "config.json"):
        assert (r / name).is_file()
    rows = [json.loads(x) for x in (r / "train_report.jsonl").read_text().splitlines()]
    assert [x["epoch"] for x in rows] == [1, 2]
    assert json.loads((r / "config.json").read_text())["dim"] == 8


def test_evaluate_checkpoint_and_oracle(pipeline, tmp_path, capsys):
    code, out, _ = run(["evaluate", "--checkpoint", pipeline / "run" / "model.ckpt", "--data",
                        pipeline / "data", "--out", tmp_path], capsys)
    assert code == 0
    rec = records(out)[-1]
    assert 0 <= rec["P@1"] <= 1 and rec["questions"] > 0
    assert {p.name for p in tmp_path.iterdir()} == {"metrics.txt", "metrics.json",
                                                      "per_question.csv"}
    code, out, _ = run(["evaluate", "--oracle", "--data", pipeline / "data"], capsys)
    rec = records(out)[-1]
    assert (rec["P@1"], rec["MRR"], rec["NDCG@3"]) == (1.0, 1.0, 1.0)


def test_evaluate_with_mismatched_dims_fails_cleanly(pipeline, capsys):
    code, out, err = run(["evaluate", "--checkpoint", pipeline / "run" / "model.ckpt",
                          "--data", pipeline / "data", "--dim", "16"], capsys)
    assert code == 1
    msg = json.loads(err.strip())
    assert msg["error"] == "CheckpointShapeError"
    assert "checkpoint has shape (8, 24), config expects (16, 48)" in msg["message"]


def test_rank_agrees_with_evaluate(pipeline, tmp_path, capsys):
    ds = load_dataset(pipeline / "data")
    questions = tmp_path / "test.jsonl"
    write_corpus(ds.part("test", encoded=False), questions)
    code, out, _ = run(["rank", "--checkpoint", pipeline / "run" / "model.ckpt", "--questions",
                        questions], capsys)
    assert code == 0
    ranked = [line.split("\t") for line in out.splitlines() if not line.startswith("{")]
    model = load_checkpoint(pipeline / "run" / "model.ckpt")
    votes = {a.answer_id: a.votes for q in ds.part("test") for a in q.answers}
    top = {r[0]: r[2] for r in ranked if r[1] == "1"}
    best = {q.question_id: max(q.votes) for q in ds.part("test")}
    hits = {qid: float(votes[aid] == best[qid]) for qid, aid in top.items()}

    run(["evaluate", "--checkpoint", pipeline / "run" / "model.ckpt", "--data",
         pipeline / "data", "--out", tmp_path / "ev"], capsys)
    with open(tmp_path / "ev" / "per_question.csv") as fh:
        per_q = {row["question_id"]: float(row["P@1"]) for row in csv.DictReader(fh)}
    assert hits == per_q

    raw = read_corpus(questions)[0]
    scores = model.scores(model.encode(raw))
    mine = [float(r[4]) for r in ranked if r[0] == raw.question_id]
    assert mine == sorted(scores.tolist(), reverse=True)


def test_rank_explain_weights_sum_to_one(pipeline, tmp_path, capsys):
    ds = load_dataset(pipeline / "data")
    questions = tmp_path / "q.jsonl"
    write_corpus(ds.part("test", encoded=False)[:3], questions)
    code, out, _ = run(["rank", "--checkpoint", pipeline / "run" / "model.ckpt", "--questions",
                        questions, "--explain", "--out", tmp_path / "heat"], capsys)
    dumps = [r for r in records(out) if r["event"] == "explain"]
    assert len(dumps) == 3
    for d in dumps:
        for a in d["answers"]:
            assert sum(w for _, w in a["alpha"]) == pytest.approx(1.0)
            assert sum(w for _, w in a["beta"]) == pytest.approx(1.0)
    assert len(list((tmp_path / "heat").glob("*.png"))) == 6


def test_gradcheck_single_variant_and_epsilon(capsys):
    code, out, _ = run(["gradcheck", "--ablation", "no_res"], capsys)
    assert code == 0 and out.startswith("PASS w/o Res")
    code, out, _ = run(["gradcheck", "--ablation", "no_graph", "--epsilon", "1e-3"], capsys)
    assert code == 0
    assert records(out)[0]["max_rel_err"] < 1e-2
    code, _, err = run(["gradcheck", "--ablation", "no_graph", "--tolerance", "1e-30"], capsys)
    assert code == 1 and json.loads(err)["error"] == "GTANError"


def test_stats_and_analyze_sim(pipeline, tmp_path, capsys):
    code, out, _ = run(["stats", "--data", pipeline / "data", "--out", tmp_path], capsys)
    assert code == 0 and "#Que." in out
    events = {r["event"] for r in records(out)}
    assert events == {"stats", "interval_histogram"}
    assert (tmp_path / "intervals.png").is_file()
    code, out, _ = run(["analyze-sim", "--corpus", pipeline / "raw.jsonl", "--out", tmp_path,
                        "--dim", "16"], capsys)
    rec = records(out)[-1]
    assert code == 0 and rec["questions_used"] == 40
    assert (tmp_path / "similarity.png").is_file() and (tmp_path / "similarity.json").is_file()
    code, out, _ = run(["analyze-sim", "--data", pipeline / "data", "--checkpoint",
                        pipeline / "run" / "model.ckpt"], capsys)
    assert code == 0


def test_seed_environment_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GTAN_SEED", "11")
    code, out, _ = run(["gen-synthetic", "--out", tmp_path / "a.jsonl", "--questions", "12"],
                       capsys)
    assert records(out)[-1]["seed"] == 11
    code, out, _ = run(["gen-synthetic", "--out", tmp_path / "b.jsonl", "--questions", "12",
                        "--seed", "2"], capsys)
    assert records(out)[-1]["seed"] == 2


def test_usage_errors_exit_nonzero(tmp_path, capsys):
    code, _, err = run(["evaluate", "--data", tmp_path], capsys)
    assert code == 1 and json.loads(err)["error"] == "UsageError"
    code, _, err = run(["train", "--data", tmp_path / "missing", "--out", tmp_path / "o"], capsys)
    assert code == 1 and json.loads(err)["error"] == "ContractError"
    proc = subprocess.run([sys.executable, "-m", "gtan.cli", "stats", "--corpus",
                           str(tmp_path / "none.jsonl")], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "FileNotFoundError"
