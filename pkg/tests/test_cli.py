import json
import math
import os

import numpy as np
import pytest

from polyscribe.cli import main
from polyscribe.modelio import load_history, load_model


def run(*argv):
    return main(list(argv))


def gen_corpus(path, seqs=3, seq_len=6, seed=1):
    code = run(
        "gen",
        "--out",
        str(path),
        "--num-pitches",
        "4",
        "--feature-dim",
        "4",
        "--num-sequences",
        str(seqs),
        "--seq-len",
        str(seq_len),
        "--dictionary",
        "identity",
        "--seed",
        str(seed),
    )
    assert code == 0
    return path


def train_model(corpus, model_path, loss_path=None, epochs=2):
    argv = [
        "train",
        "--corpus",
        str(corpus),
        "--out",
        str(model_path),
        "--hidden-size",
        "3",
        "--recurrent-size",
        "2",
        "--epochs",
        str(epochs),
        "--learning-rate",
        "0.1",
    ]
    if loss_path is not None:
        argv += ["--loss-csv", str(loss_path)]
    assert run(*argv) == 0
    return model_path


# ---------------------------------------------------------------------------
# gen


def test_gen_writes_corpus_files(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    names = sorted(p.name for p in corpus.iterdir())
    assert names == [
        "seq_0000_features.json",
        "seq_0000_roll.json",
        "seq_0001_features.json",
        "seq_0001_roll.json",
        "seq_0002_features.json",
        "seq_0002_roll.json",
    ]
    assert "wrote 3 sequences" in capsys.readouterr().out
    roll = json.loads((corpus / "seq_0000_roll.json").read_text())
    assert roll["num_pitches"] == 4
    assert len(roll["frames"]) == 6


def test_gen_byte_reproducible(tmp_path):
    a = gen_corpus(tmp_path / "a")
    b = gen_corpus(tmp_path / "b")
    for name in sorted(p.name for p in a.iterdir()):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_reads_config_file(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(
        "num_pitches = 4\nfeature_dim = 4\nnum_sequences = 2\n"
        "seq_len = 5\ndictionary = identity\nseed = 3\n"
    )
    out = tmp_path / "corpus"
    assert run("gen", "--config", str(cfg), "--out", str(out)) == 0
    roll = json.loads((out / "seq_0000_roll.json").read_text())
    assert len(roll["frames"]) == 5


def test_gen_explicit_flag_overrides_config(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(
        "num_pitches = 4\nfeature_dim = 4\nnum_sequences = 1\n"
        "seq_len = 5\ndictionary = identity\n"
    )
    out = tmp_path / "corpus"
    assert run("gen", "--config", str(cfg), "--out", str(out), "--seq-len", "9") == 0
    roll = json.loads((out / "seq_0000_roll.json").read_text())
    assert len(roll["frames"]) == 9


def test_gen_missing_required_setting(tmp_path, capsys):
    code = run("gen", "--out", str(tmp_path / "corpus"), "--num-pitches", "4")
    assert code == 1
    assert "missing required settings" in capsys.readouterr().err


def test_gen_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("num_pitches = 4\nfeature_dim = 4\nbogus_key = 1\n")
    code = run("gen", "--config", str(cfg), "--out", str(tmp_path / "corpus"))
    assert code == 1
    assert "unknown config keys: bogus_key" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train


def test_train_writes_model_and_loss(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = tmp_path / "model.json"
    loss_path = tmp_path / "loss.csv"
    train_model(corpus, model_path, loss_path)
    out = capsys.readouterr().out
    assert "trained io-rnn-nade for 2 epochs" in out
    params, kind, training = load_model(str(model_path))
    assert kind == "io-rnn-nade"
    assert params.num_outputs == 4
    assert params.num_inputs == 4
    assert params.num_hidden == 3
    assert params.num_rec == 2
    assert training["epochs"] == 2
    history = load_history(str(loss_path))
    assert len(history) == 2
    assert training["final_objective"] == history[-1]


def test_train_byte_reproducible(tmp_path):
    corpus = gen_corpus(tmp_path / "corpus")
    a = train_model(corpus, tmp_path / "a.json", tmp_path / "a.csv")
    b = train_model(corpus, tmp_path / "b.json", tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_train_missing_corpus_dir(tmp_path, capsys):
    code = run(
        "train",
        "--corpus",
        str(tmp_path / "nope"),
        "--out",
        str(tmp_path / "model.json"),
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_config_file(tmp_path):
    corpus = gen_corpus(tmp_path / "corpus")
    cfg = tmp_path / "train.cfg"
    cfg.write_text("hidden_size = 5\nrecurrent_size = 3\nepochs = 1\n")
    model_path = tmp_path / "model.json"
    assert (
        run("train", "--config", str(cfg), "--corpus", str(corpus), "--out", str(model_path))
        == 0
    )
    params, _, _ = load_model(str(model_path))
    assert params.num_hidden == 5
    assert params.num_rec == 3


# ---------------------------------------------------------------------------
# transcribe


def test_transcribe_writes_roll_and_prints_logp(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = train_model(corpus, tmp_path / "model.json")
    capsys.readouterr()
    out_path = tmp_path / "roll.json"
    code = run(
        "transcribe",
        "--model",
        str(model_path),
        "--features",
        str(corpus / "seq_0000_features.json"),
        "--out",
        str(out_path),
        "--width",
        "2",
        "--branch",
        "2",
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "log-probability" in printed
    logp = float(printed.split("log-probability", 1)[1].split()[0])
    assert logp < 0.0
    roll = json.loads(out_path.read_text())
    assert roll["num_pitches"] == 4
    assert len(roll["frames"]) == 6


def test_transcribe_ascii_grid(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = train_model(corpus, tmp_path / "model.json")
    capsys.readouterr()
    code = run(
        "transcribe",
        "--model",
        str(model_path),
        "--features",
        str(corpus / "seq_0000_features.json"),
        "--ascii",
    )
    assert code == 0
    out = capsys.readouterr().out
    grid_lines = [line for line in out.splitlines() if "|" in line]
    assert len(grid_lines) == 4  # one row per pitch
    for line in grid_lines:
        body = line.split("|")[1]
        assert len(body) == 6
        assert set(body) <= {"#", "."}


def test_transcribe_prints_json_without_out(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = train_model(corpus, tmp_path / "model.json")
    capsys.readouterr()
    code = run(
        "transcribe",
        "--model",
        str(model_path),
        "--features",
        str(corpus / "seq_0000_features.json"),
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    roll = json.loads(lines[-1])
    assert roll["num_pitches"] == 4


def test_transcribe_byte_reproducible(tmp_path):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = train_model(corpus, tmp_path / "model.json")
    for name in ("x.json", "y.json"):
        assert (
            run(
                "transcribe",
                "--model",
                str(model_path),
                "--features",
                str(corpus / "seq_0001_features.json"),
                "--out",
                str(tmp_path / name),
                "--width",
                "3",
                "--branch",
                "2",
                "--seed",
                "7",
            )
            == 0
        )
    assert (tmp_path / "x.json").read_bytes() == (tmp_path / "y.json").read_bytes()


def test_transcribe_missing_model_file(tmp_path, capsys):
    code = run(
        "transcribe",
        "--model",
        str(tmp_path / "missing.json"),
        "--features",
        str(tmp_path / "missing2.json"),
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_direct_mode(tmp_path, capsys):
    truth = {"num_pitches": 4, "frames": [[0, 1], [0, 2], [0, 1, 2]]}
    pred = {"num_pitches": 4, "frames": [[0, 1, 3], [0], [0, 1, 2, 3]]}
    truth_path = tmp_path / "truth.json"
    pred_path = tmp_path / "pred.json"
    truth_path.write_text(json.dumps(truth))
    pred_path.write_text(json.dumps(pred))
    code = run("evaluate", "--pred", str(pred_path), "--truth", str(truth_path))
    assert code == 0
    out = capsys.readouterr().out
    assert "frame accuracy" in out
    assert float(out.split()[-1]) == pytest.approx(6 / 9, abs=1e-6)


def test_evaluate_pipeline_mode_with_report(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus", seqs=2)
    model_path = train_model(corpus, tmp_path / "model.json", epochs=5)
    capsys.readouterr()
    report = tmp_path / "report.json"
    code = run(
        "evaluate",
        "--model",
        str(model_path),
        "--corpus",
        str(corpus),
        "--width",
        "2",
        "--branch",
        "2",
        "--out",
        str(report),
    )
    assert code == 0
    data = json.loads(report.read_text())
    assert 0.0 <= data["accuracy"] <= 1.0
    assert len(data["per_sequence"]) == 2


def test_evaluate_pipeline_with_noise(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus", seqs=2)
    model_path = train_model(corpus, tmp_path / "model.json")
    capsys.readouterr()
    code = run(
        "evaluate",
        "--model",
        str(model_path),
        "--corpus",
        str(corpus),
        "--noise-kind",
        "masking",
        "--noise-level",
        "2.0",
        "--noise-seed",
        "4",
    )
    assert code == 0
    assert "frame accuracy" in capsys.readouterr().out


def test_evaluate_rejects_mixed_modes(tmp_path, capsys):
    code = run("evaluate", "--pred", "a.json", "--model", "b.json")
    assert code == 1
    assert "either" in capsys.readouterr().err


def test_evaluate_requires_some_mode(capsys):
    code = run("evaluate")
    assert code == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# enumerate


def test_enumerate_prints_ranked_configs(capsys):
    code = run("enumerate", "0.9", "0.2")
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    bits = [line.split()[-1] for line in lines]
    assert bits == ["10", "11", "00", "01"]
    probs = [math.exp(float(line.split()[0])) for line in lines]
    assert probs == pytest.approx([0.72, 0.18, 0.08, 0.02], abs=1e-9)


def test_enumerate_k_limits_output(capsys):
    code = run("enumerate", "0.6", "0.3", "0.8", "--k", "3")
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    logps = [float(line.split()[0]) for line in lines]
    assert logps == sorted(logps, reverse=True)


def test_enumerate_out_file(tmp_path, capsys):
    out = tmp_path / "ranked.json"
    assert run("enumerate", "0.9", "0.2", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert [item["bits"] for item in data["items"]] == [[1, 0], [1, 1], [0, 0], [0, 1]]


def test_enumerate_invalid_probability(capsys):
    code = run("enumerate", "1.4")
    assert code == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_passes_within_tolerance(capsys):
    code = run("gradcheck", "--seed", "3")
    assert code == 0
    assert "max relative gradient error" in capsys.readouterr().out


def test_gradcheck_fails_on_absurd_tolerance(capsys):
    code = run("gradcheck", "--seed", "3", "--tolerance", "1e-14")
    assert code == 1
    captured = capsys.readouterr()
    assert "exceeds tolerance" in captured.err


def test_gradcheck_on_saved_model(tmp_path, capsys):
    corpus = gen_corpus(tmp_path / "corpus")
    model_path = train_model(corpus, tmp_path / "model.json")
    capsys.readouterr()
    code = run("gradcheck", "--model", str(model_path), "--alpha", "0.01")
    assert code == 0


# ---------------------------------------------------------------------------
# misc


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_full_pipeline_byte_reproducible(tmp_path):
    # gen -> train -> transcribe twice from scratch: identical artifacts.
    outputs = []
    for run_dir in ("one", "two"):
        base = tmp_path / run_dir
        base.mkdir()
        corpus = gen_corpus(base / "corpus", seqs=2, seq_len=5, seed=11)
        model_path = train_model(corpus, base / "model.json", base / "loss.csv")
        roll_path = base / "roll.json"
        assert (
            run(
                "transcribe",
                "--model",
                str(model_path),
                "--features",
                str(corpus / "seq_0001_features.json"),
                "--out",
                str(roll_path),
                "--width",
                "2",
                "--branch",
                "2",
                "--seed",
                "3",
            )
            == 0
        )
        outputs.append(
            (
                model_path.read_bytes(),
                (base / "loss.csv").read_bytes(),
                roll_path.read_bytes(),
            )
        )
    assert outputs[0] == outputs[1]
