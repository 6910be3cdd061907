import csv
import json
import subprocess
import sys

import pytest

from liquidbench import checkpoint as ckpt_io
from liquidbench.cli import main

TRAIN = ["train", "--dataset", "irregular_sine_class", "--n", "60", "--hidden", "4", "--epochs", "2",
         "--batch_size", "16"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(TRAIN + ["--seed", "1", "--out", str(out)]) == 0
    return out


def numeric_payload(path):
    doc = json.loads(path.read_text())
    doc.pop("timing")
    return doc


def test_train_writes_artifacts(trained):
    for name in ("log.csv", "best.ckpt", "final.ckpt", "metrics.json", "training.png"):
        assert (trained / name).stat().st_size > 0
    assert (trained / "training.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    doc = json.loads((trained / "metrics.json").read_text())
    assert doc["config"]["train"]["seed"] == 1
    assert doc["params"]["total"] == sum(v for k, v in doc["params"].items() if k != "total")


def test_stress_rate_zero_equals_eval(trained, tmp_path, capsys):
    ck = trained / "best.ckpt"
    code, _, _ = run(["eval", "--checkpoint", ck, "--out", tmp_path / "e"], capsys)
    assert code == 0
    code, _, _ = run(["stress", "--checkpoint", ck, "--drop_rates", "0", "--out", tmp_path / "s"], capsys)
    assert code == 0
    acc_eval = json.loads((tmp_path / "e" / "metrics.json").read_text())["metrics"]["accuracy"]
    with open(tmp_path / "s" / "stress.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["accuracy"]) == acc_eval
    doc = json.loads((tmp_path / "s" / "metrics.json").read_text())
    assert doc["stress"]["trials"][0]["accuracy"] == acc_eval


def test_stress_writes_csv_and_png(trained, tmp_path, capsys):
    out = tmp_path / "s"
    code, stdout, _ = run(["stress", "--checkpoint", trained / "best.ckpt", "--drop_rates", "0,0.3,0.5",
                           "--mode", "drop_merge_dt", "--trials", "2", "--out", out], capsys)
    assert code == 0
    with open(out / "stress.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rate", "trial", "accuracy", "cer"]
    assert len(rows) == 1 + 1 + 2 + 2
    assert (out / "stress.png").read_bytes()[:4] == b"\x89PNG"
    assert "rate 0.3" in stdout


def test_stress_and_train_are_repeatable(trained, tmp_path, capsys):
    again = tmp_path / "again"
    assert main(TRAIN + ["--seed", "1", "--out", str(again)]) == 0
    for name in ("log.csv", "best.ckpt", "final.ckpt"):
        assert (again / name).read_bytes() == (trained / name).read_bytes()
    assert numeric_payload(again / "metrics.json") == numeric_payload(trained / "metrics.json")
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        run(["stress", "--checkpoint", trained / "best.ckpt", "--trials", "2", "--out", out], capsys)
        outs.append(out)
    assert (outs[0] / "stress.csv").read_bytes() == (outs[1] / "stress.csv").read_bytes()
    assert numeric_payload(outs[0] / "metrics.json") == numeric_payload(outs[1] / "metrics.json")


def test_inspect_lstm_counts(tmp_path, capsys):
    code, stdout, _ = run(["inspect", "--cell", "lstm", "--input_dim", "5", "--hidden", "4"], capsys)
    assert code == 0
    doc = json.loads(stdout)
    assert doc["params"]["core"] == doc["closed_form"]["core"] == 160


def test_inspect_checkpoint(trained, capsys):
    code, stdout, _ = run(["inspect", "--checkpoint", trained / "final.ckpt"], capsys)
    doc = json.loads(stdout)
    assert code == 0 and doc["params"] == doc["closed_form"] and doc["epochs_done"] == 2


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["train", "--wings", "3"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_malformed_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[train]\nepochs = 2\nlr = fast\n")
    code, _, err = run(["train", "--config", cfg, "--out", tmp_path], capsys)
    assert code == 2
    assert f"{cfg}:3 [lr]" in err


def test_invalid_value_exits_2(tmp_path, capsys):
    code, _, err = run(TRAIN + ["--cell", "gru", "--out", tmp_path], capsys)
    assert code == 2 and "gru" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[train]\ntask = irregular_sine_class\nn = 60\nhidden = 3\nepochs = 1\nseed = 5\n"
                   "[model]\ncell = lstm\n")
    code, _, _ = run(["train", "--config", cfg, "--epochs", "2", "--out", tmp_path / "o"], capsys)
    assert code == 0
    t = json.loads((tmp_path / "o" / "metrics.json").read_text())["config"]["train"]
    assert (t["epochs"], t["hidden"], t["cell"], t["seed"]) == (2, 3, "lstm", 5)


def test_seed_environment_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LIQUIDBENCH_SEED", "9")
    assert main(["train", "--n", "60", "--hidden", "3", "--epochs", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--n", "60", "--hidden", "3", "--epochs", "1", "--seed", "2",
                 "--out", str(tmp_path / "b")]) == 0
    seed = lambda d: json.loads((tmp_path / d / "metrics.json").read_text())["config"]["train"]["seed"]  # noqa: E731
    assert (seed("a"), seed("b")) == (9, 2)
    monkeypatch.setenv("LIQUIDBENCH_SEED", "nine")
    code, _, err = run(["train", "--out", tmp_path / "c"], capsys)
    assert code == 2 and "LIQUIDBENCH_SEED" in err


def test_bad_checkpoint_exits_1(tmp_path, capsys):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"garbage")
    code, _, err = run(["eval", "--checkpoint", bad, "--out", tmp_path], capsys)
    assert code == 1 and "error" in err
    code, _, _ = run(["eval", "--checkpoint", tmp_path / "none.ckpt", "--out", tmp_path], capsys)
    assert code == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "liquidbench", "inspect", "--cell", "cfc",
                           "--input_dim", "2", "--hidden", "3"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["params"]["core"] == 2 * (2 * 3 + 9 + 3) + 3


def test_checkpoint_is_valid(trained):
    assert ckpt_io.load(trained / "final.ckpt").meta["epochs_done"] == 2
