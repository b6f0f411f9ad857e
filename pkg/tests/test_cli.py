import json
from pathlib import Path

import numpy as np
import pytest

from glad.cli import main

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "configs" / "demo.yaml"
GOLDEN = Path(__file__).resolve().parent / "golden" / "demo"


def write_flags(path, rows):
    rows = np.asarray(rows, dtype=int)
    lines = ["timestamp," + ",".join(f"n{i}" for i in range(rows.shape[0]))]
    lines += [f"{t}," + ",".join(str(v) for v in rows[:, t]) for t in range(rows.shape[1])]
    path.write_text("\n".join(lines) + "\n")


def test_score_identical_files_is_perfect(tmp_path, capsys):
    write_flags(tmp_path / "t.csv", [[0, 1, 0, 0], [1, 0, 0, 1]])
    assert main(["score", str(tmp_path / "t.csv"), str(tmp_path / "t.csv"), "--tolerance", "0"]) == 0
    assert "precision=1.0000 recall=1.0000 f1=1.0000" in capsys.readouterr().out


def test_score_with_tolerance(tmp_path, capsys):
    write_flags(tmp_path / "p.csv", [[0, 1, 0, 0, 0]])
    write_flags(tmp_path / "t.csv", [[0, 0, 0, 1, 0]])
    assert main(["score", str(tmp_path / "p.csv"), str(tmp_path / "t.csv"), "--tolerance", "1"]) == 0
    assert "f1=0.0000" in capsys.readouterr().out
    assert main(["--quiet", "score", str(tmp_path / "p.csv"), str(tmp_path / "t.csv"), "--tolerance", "2"]) == 0
    assert capsys.readouterr().out.strip() == "1.0000 1.0000 1.0000"


def test_missing_config_path_is_usage_error(capsys):
    assert main(["run"]) == 2
    assert "usage:" in capsys.readouterr().err
    assert main(["run", "does/not/exist.yaml"]) == 2
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run", str(DEMO), "--bogus"], ["score", "a"],
                                  ["detect", str(DEMO)], ["--seed", "x", "run", str(DEMO)]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().out == ""


def test_runtime_error_is_one_json_line(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  epoch: 3\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    payload = json.loads(err[0])
    assert payload["error"] == "ConfigError" and "epoch" in payload["message"]


def test_run_demo_matches_golden(tmp_path, capsys):
    out = tmp_path / "report"
    assert main(["run", str(DEMO), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "master seed: 7" in stdout and stdout.strip().splitlines()[-1] == str(out)
    for name in ("table.csv", "table.txt", "thresholds.csv"):
        assert (out / name).read_bytes() == (GOLDEN / name).read_bytes(), name
    assert sorted(p.name for p in (out / "plots").iterdir()) == [
        "anomaly_counts.svg", "f1_vs_degree.svg", "forecast_vs_actual.svg", "threshold_tuning.svg"]


def test_quiet_prints_only_report_path(tmp_path, capsys):
    out = tmp_path / "q"
    assert main(["--quiet", "ablate", str(DEMO), "--out", str(out)]) == 0
    assert capsys.readouterr().out == f"{out}\n"
    assert (out / "ablation.csv").is_file()


def test_seed_override_and_env_output(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GLAD_OUT", str(tmp_path / "env"))
    assert main(["--seed", "11", "train", str(DEMO)]) == 0
    out = capsys.readouterr().out
    assert "master seed: 11" in out
    assert (tmp_path / "env" / "checkpoints" / "graph-lstm.npz").is_file()
    assert main(["detect", str(DEMO), "--model", "graph-lstm", "--seed", "11"]) == 0
    assert "loaded checkpoint" in capsys.readouterr().out
    assert (tmp_path / "env" / "table.csv").is_file()
    assert main(["detect", str(DEMO), "--model", "prophet"]) == 2


def test_gen_synth_inject_score_plot_roundtrip(tmp_path, capsys):
    spec = tmp_path / "synth.yaml"
    spec.write_text("n_nodes: 4\nT: 300\nseed: 2\n")
    assert main(["gen-synth", str(spec), "--out", str(tmp_path / "syn")]) == 0
    inj = tmp_path / "inj.yaml"
    inj.write_text("n_affected_nodes: 2\nevents_per_node: 2\nmin_separation: 30\n")
    assert main(["inject", str(tmp_path / "syn" / "panel.csv"), str(inj), "--range", "100:300",
                 "--out", str(tmp_path / "inj")]) == 0
    capsys.readouterr()
    labels = tmp_path / "inj" / "labels.csv"
    assert main(["score", str(labels), str(labels)]) == 0
    assert "f1=1.0000" in capsys.readouterr().out
    assert main(["gen-synth", str(spec)]) == 2  # no output directory anywhere
    assert main(["plot", str(tmp_path / "nope")]) == 2


def test_gen_synth_rejects_unknown_spec_keys(tmp_path, capsys):
    spec = tmp_path / "synth.yaml"
    spec.write_text("n_nodez: 4\n")
    assert main(["gen-synth", str(spec), "--out", str(tmp_path / "o")]) == 1
    assert "n_nodez" in capsys.readouterr().err
