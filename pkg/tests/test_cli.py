import json

import pytest

from mlpstruct import cli
from mlpstruct.mlp_core import load_model, models_equal


def run(*argv):
    return cli.run([str(a) for a in argv])


def test_help(capsys):
    assert run("--help") == 0
    assert "experiment" in capsys.readouterr().out


def test_subcommand_help():
    assert run("prune", "--help") == 0


def test_unknown_subcommand(capsys):
    assert run("frobnicate") == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    assert run("train", "--frobnicate") == 1


def test_missing_algorithm(tmp_path, capsys):
    assert run("prune", "--out", tmp_path) == 1
    assert "--algorithm" in capsys.readouterr().err


def test_bad_config_value(tmp_path):
    assert run("train", "--set", "train.max_iterations=lots", "--out", tmp_path) == 1


def test_missing_data_is_runtime_error(tmp_path, capsys):
    assert run("train", "--data", tmp_path / "absent.csv", "--out", tmp_path / "o") == 2
    assert "absent.csv" in capsys.readouterr().err


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert run("generate", "--rows", 50) == 0
    assert (tmp_path / "generate" / "data.csv").is_file()
    manifest = json.loads((tmp_path / "generate" / "manifest.json").read_text())
    assert manifest["seeds"] == [0]
    assert manifest["config"]["data"]["n_rows"] == "50"


def test_flag_beats_file_beats_default(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[data]\nn_rows = 80\nnoise_std = 5\n")
    assert run("generate", "--config", ini, "--rows", 60, "--out", tmp_path / "g") == 0
    cfg = json.loads((tmp_path / "g" / "manifest.json").read_text())["config"]["data"]
    assert cfg["n_rows"] == "60" and cfg["noise_std"] == "5.0" and cfg["outlier_scale"] == "10.0"


def test_train_prune_and_replay(tmp_path):
    assert run("generate", "--rows", 300, "--seed", 3, "--out", tmp_path / "g") == 0
    data = tmp_path / "g" / "data.csv"
    assert data.read_text().startswith("# seed=3")
    assert run("train", "--data", data, "--hidden", 3, "--max-iterations", 20, "--out", tmp_path / "t") == 0
    assert run("prune", "--algorithm", "engel_mod", "--model", tmp_path / "t" / "model.json", "--data", data,
               "--out", tmp_path / "p") == 0
    for name in ("model.json", "report.csv", "trace.jsonl", "manifest.json"):
        assert (tmp_path / "p" / name).is_file()
    assert run("prune", "--config", tmp_path / "p" / "manifest.json", "--out", tmp_path / "p2") == 0
    assert models_equal(load_model(tmp_path / "p" / "model.json"), load_model(tmp_path / "p2" / "model.json"))


def test_experiment_on_bundled_fixture(tmp_path, capsys):
    out = tmp_path / "exp"
    assert run("experiment", "--config", "fixture", "--n-seeds", 2, "--out", out) == 0
    for name in ("summary.json", "results.csv", "table.txt", "table.md", "manifest.json"):
        assert (out / name).is_file()
    assert "Nb_H" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert manifest["version"] == cli.__version__

    assert run("report", "--summary", out / "summary.json", "--out", tmp_path / "rep") == 0
    for name in ("results.csv", "table.txt", "table.md"):
        assert (tmp_path / "rep" / name).read_bytes() == (out / name).read_bytes()


@pytest.mark.parametrize("argv", [["report", "--summary", "nope.json"], ["prune", "--algorithm", "engel", "--model", "nope.json"]])
def test_runtime_errors(tmp_path, argv):
    assert run(*argv, "--out", tmp_path) == 2
