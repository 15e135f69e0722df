"""The blockbfgs command line: generate, run, bounds, and its error exits."""

import json

import pytest

from blockbfgs.main import main
from blockbfgs.results import read_rows


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("BLOCKBFGS_OUT_DIR", raising=False)
    monkeypatch.delenv("BLOCKBFGS_CONFIG", raising=False)


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "synth.svm"
    main(["generate", "--n", "60", "--d", "3", "--density", "0.7", "--seed", "5", "--out", str(path)])
    return path


def test_generate(data_file, capsys):
    lines = data_file.read_text().splitlines()
    assert len(lines) == 60
    assert all(line.split()[0] in ("+1", "-1") for line in lines)


def test_run_writes_csvs(tmp_path, data_file, capsys):
    out = tmp_path / "out"
    main(["run", "--data", str(data_file), "--method", "svrg,gauss_2_2,prev_1_2",
          "--eta", "0.1", "--passes", "3", "--seed", "0,1", "--out", str(out)])
    printed = capsys.readouterr().out
    assert "DONE" in printed
    assert "two-loop, last iterate" in printed
    for label in ("svrg", "gauss_2_2", "prev_1_2"):
        rows = read_rows(out / f"{label}.csv")
        assert {r.seed for r in rows} == {0, 1}
        assert rows[0].datapasses == 0.0
        assert label in printed
    assert (out / "summary.csv").exists()
    assert not (out / "plot_traces.py").exists()


def test_run_twice_gives_identical_traces(tmp_path, data_file):
    def strip(path):
        return [(r.method, r.eta, r.seed, r.datapasses, r.fvalue, r.error) for r in read_rows(path)]

    for name in ("a", "b"):
        main(["run", "--data", str(data_file), "--method", "fact_2_3", "--eta", "0.05",
              "--passes", "6", "--out", str(tmp_path / name)])
    assert strip(tmp_path / "a" / "fact_2_3.csv") == strip(tmp_path / "b" / "fact_2_3.csv")


def test_out_dir_from_environment(tmp_path, data_file, monkeypatch):
    monkeypatch.setenv("BLOCKBFGS_OUT_DIR", str(tmp_path / "env_out"))
    main(["run", "--data", str(data_file), "--method", "svrg", "--eta", "0.1", "--passes", "1"])
    assert (tmp_path / "env_out" / "svrg.csv").exists()


def test_config_file_with_flag_override(tmp_path, data_file):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({
        "data": str(data_file), "methods": ["svrg"], "grid": [0.1, 0.01],
        "passes": 6, "out": str(tmp_path / "from_config"), "emit_plot_script": True,
    }))
    main(["run", "--config", str(config), "--out", str(tmp_path / "from_flag")])
    assert not (tmp_path / "from_config").exists()
    rows = read_rows(tmp_path / "from_flag" / "svrg.csv")
    assert {r.eta for r in rows} == {0.1, 0.01}
    assert (tmp_path / "from_flag" / "plot_traces.py").exists()


def test_bounds(data_file, capsys):
    main(["bounds", "--data", str(data_file), "--memory", "2"])
    printed = capsys.readouterr().out
    for name in ("lambda", "Lambda", "kappa", "gamma (lower)", "Gamma (upper)", "eta threshold"):
        assert name in printed


@pytest.mark.parametrize("argv", [
    ["run", "--method", "svrg"],                                   # no data
    ["run", "--data", "nope.svm", "--method", "svrg", "--eta", "0.1"],
    ["run", "--data", "x.svm", "--method", "newton"],
    ["run", "--data", "x.svm", "--eta", "-1"],
    ["bounds", "--data", "nope.svm"],
])
def test_errors_exit_nonzero(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
    assert capsys.readouterr().err.startswith("ERROR:")


def test_bad_config_file(tmp_path, data_file, capsys):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({"methods": ["svrg"], "stepsizes": [0.1]}))
    with pytest.raises(SystemExit):
        main(["run", "--config", str(config), "--data", str(data_file)])
    assert "ERROR:" in capsys.readouterr().err


def test_dimension_override(tmp_path, data_file, capsys):
    main(["bounds", "--data", str(data_file), "--n-features", "7", "--no-bias"])
    assert "d=7" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["bounds", "--data", str(data_file), "--n-features", "1"])
