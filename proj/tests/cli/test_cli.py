import json
import subprocess
import sys
import tempfile
from pathlib import Path

CLI = str(Path(sys.argv[1]).resolve())
TINY = {"model": {"d_model": 16, "num_heads": 2, "num_encoder_layers": 1,
                  "num_decoder_layers": 1, "feedforward_dim": 32}}
failures = []


def run(*args, cwd):
    return subprocess.run([CLI, *args], cwd=cwd, capture_output=True, text=True)


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def lines(path):
    return [json.loads(l) for l in Path(path).read_text().splitlines() if l.strip()]


def first_json(text):
    return json.JSONDecoder().raw_decode(text.strip())[0]


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    (d / "tiny.json").write_text(json.dumps(TINY))
    (d / "iraq.jsonl").write_text(json.dumps(
        {"triples": [["Iraq", "language", "Arabic"]], "text": "Arabic is spoken in Iraq ."}) + "\n")

    r = run("make-synthetic", "--out", "train.jsonl", "--num", "10", "--seed", "1",
            "--heldout", "3", "--heldout-out", "valid.jsonl", cwd=d)
    check(r.returncode == 0, "make-synthetic exits 0")
    check(len(lines(d / "train.jsonl")) == 7 and len(lines(d / "valid.jsonl")) == 3,
          "make-synthetic splits 7/3")
    again = run("make-synthetic", "--out", "again.jsonl", "--num", "10", "--seed", "1",
                "--heldout", "3", "--heldout-out", "again_valid.jsonl", cwd=d)
    check(again.returncode == 0 and (d / "again.jsonl").read_text() == (d / "train.jsonl").read_text(),
          "make-synthetic is deterministic")

    r = run("build-graph", "--data", "iraq.jsonl", "--out", "g.jsonl", cwd=d)
    stats = first_json(r.stdout)
    check(r.returncode == 0, "build-graph exits 0")
    check(stats["forward_non_self_edges"] == 8 and stats["directed_non_self_edges"] == 16,
          "Iraq graph has 8 forward and 16 directed edges")
    graph = lines(d / "g.jsonl")[0]
    check(graph["num_nodes"] == 12, "Iraq graph has 12 nodes")
    check(sum(e[2] != "SELF" for e in graph["edges"]) == 16, "graph dump lists 16 non-self edges")
    r = run("build-graph", "--data", "iraq.jsonl", "--out", "gu.jsonl", "--unidirectional", cwd=d)
    stats = first_json(r.stdout)
    check(stats["directed_non_self_edges"] == 8 and not stats["bidirectional"],
          "unidirectional Iraq graph has 8 directed edges")

    r = run("train", "--config", "tiny.json", "--data", "train.jsonl", "--valid", "valid.jsonl",
            "--out", "run", "--epochs", "2", cwd=d)
    check(r.returncode == 0, "train exits 0")
    metrics = lines(d / "run" / "metrics.jsonl")
    check(len(metrics) == 2, "train writes one metrics line per epoch")
    check({"l_tg", "l_gr", "l_total", "val_bleu"} <= set(metrics[0]), "metrics carry the loss terms")
    check((d / "run" / "model.ckpt").exists() and (d / "run" / "config.json").exists(),
          "train writes checkpoint and config")

    r = run("generate", "--run", "run", "--data", "valid.jsonl", "--out", "pred.jsonl", cwd=d)
    check(r.returncode == 0, "generate exits 0")
    preds = lines(d / "pred.jsonl")
    check(len(preds) == 3 and all("text" in p for p in preds), "generate writes one text per input")
    r = run("generate", "--run", "run", "--data", "valid.jsonl", "--mode", "greedy", cwd=d)
    check(r.returncode == 0 and len(r.stdout.strip().splitlines()) == 3, "generate writes to stdout")

    r = run("eval", "--predictions", "pred.jsonl", "--data", "valid.jsonl", cwd=d)
    scores = first_json(r.stdout)
    check(r.returncode == 0 and 0 <= scores["bleu"] <= 100 and 0 <= scores["chrf_pp"] <= 100,
          "eval reports BLEU and chrF++")

    r = run("sweep-lambda", "--config", "tiny.json", "--data", "train.jsonl", "--valid", "valid.jsonl",
            "--out", "sweep", "--epochs", "1", "--values", "0,0.08,0.2", cwd=d)
    check(r.returncode == 0, "sweep-lambda exits 0")
    rows = (d / "sweep" / "sweep.tsv").read_text().strip().splitlines()
    check(rows[0] == "lambda\tval_bleu" and len(rows) == 4, "sweep table has one row per value")
    check((d / "sweep" / "sweep_plot.json").exists(), "sweep writes plot data")

    r = run("train", "--data", "missing.jsonl", "--out", "r2", cwd=d)
    check(r.returncode == 2, "missing dataset exits 2")
    r = run("train", "--variation", "base", "--gnn", "gat", "--data", "train.jsonl", cwd=d)
    check(r.returncode == 1, "--gnn with base exits 1")
    r = run("train", "--config", "tiny.json", "--data", "train.jsonl", "--lambda", "-1", "--out", "r3", cwd=d)
    check(r.returncode != 0, "negative lambda is rejected")

if failures:
    print(f"{len(failures)} check(s) failed")
    sys.exit(1)
print("all CLI checks passed")
