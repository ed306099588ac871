import csv
import filecmp
import json
import os

import pytest

from dyvol import rng
from dyvol.cli import RunConfig, CliError, main

LAGS = "1,5,20"


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--days", "2000", "--seed", "3", "--out", str(d)]) == 0
    return d / "prices.csv"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_config_invariants():
    c = RunConfig(("a",), lags=(20, 1, 5, 5))
    assert c.lags == (1, 5, 20)
    with pytest.raises(CliError):
        RunConfig(("a",), lags=(0,))
    with pytest.raises(CliError):
        RunConfig(("a",), alpha=1.5)


def test_simulate_writes_prices(sim):
    lines = sim.read_text().splitlines()
    assert lines[0] == "Date,Close" and lines[1].endswith(",100.0") and len(lines) == 2002  # header + 2001 closes
    meta = json.loads((sim.parent / "simulation.json").read_text())
    assert meta["spec_version"] and meta["params"]["gamma"] == 5.0


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(rng.SEED_ENV, "3")
    assert main(["simulate", "--days", "2000", "--out", str(tmp_path)]) == 0
    monkeypatch.delenv(rng.SEED_ENV)
    main(["simulate", "--days", "2000", "--seed", "3", "--out", str(tmp_path / "b")])
    assert filecmp.cmp(tmp_path / "prices.csv", tmp_path / "b" / "prices.csv", shallow=False)


def test_chi2_dy_row_layout(sim, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"gamma": 5.0, "theta": 1e-4, "k": 0.02, "mu": 5e-4}))
    out = tmp_path / "o"
    assert main(["test", "chi2", "--model", "dy", "--params", str(params), "--input", str(sim),
                 "--lags", LAGS, "--out", str(out)]) == 0
    r = rows(out / "test_chi2_dy.csv")
    assert list(r[0])[:7] == ["lag", "chi2_mean", "chi2_std", "df", "p_lo", "p_mid", "p_hi"]
    assert [int(x["lag"]) for x in r] == [1, 5, 20]
    assert int(r[0]["df"]) == 2000 // 5 - 1 - 4  # 2000 daily returns
    for x in r:
        assert float(x["p_lo"]) <= float(x["p_mid"]) <= float(x["p_hi"])
    per_path = rows(out / "test_chi2_dy_paths.csv")
    assert {"statistic", "df", "p_value"} <= set(per_path[0])


@pytest.mark.parametrize("argv", [
    ["returns"], ["paths"], ["tails"], ["kurtosis", "--model", "gaussian", "--n-sets", "5"],
    ["test", "jb"], ["test", "lillie", "--mc-reps", "500"], ["test", "ks"], ["test", "kw"],
    ["fit", "gaussian"], ["fit", "mlp"],
])
def test_commands_run(sim, tmp_path, argv):
    assert main(argv + ["--input", str(sim), "--lags", LAGS, "--out", str(tmp_path)]) == 0
    assert any(tmp_path.iterdir())


def test_plot_data_emitted(sim, tmp_path):
    main(["fit", "gaussian", "--input", str(sim), "--lags", "5", "--out", str(tmp_path)])
    main(["paths", "--input", str(sim), "--lags", "5", "--out", str(tmp_path)])
    names = set(os.listdir(tmp_path))
    assert {"density_gaussian_lag5.csv", "cdf_gaussian_lag5.csv", "probplot_lag5.csv", "boxplot_lag5.csv"} <= names
    box = rows(tmp_path / "boxplot_lag5.csv")
    assert len(box) == 5 and float(box[0]["min"]) <= float(box[0]["median"]) <= float(box[0]["max"])


def test_report_deterministic(sim, tmp_path):
    args = ["report", "--single-start", "--input", str(sim), "--lags", LAGS, "--mc-reps", "500", "--n-sets", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["spec_version"] == "1.0"
    assert {"kurtosis", "tests", "tails", "fits", "generated_kurtosis", "lag_errors"} <= set(rep)
    assert {"jb", "lillie", "ks_gaussian", "chi2_dy", "kw"} <= set(rep["tests"])


def test_errors_are_machine_readable(sim, tmp_path, capsys):
    assert main(["returns", "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "missing_input"
    assert main(["returns", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert main(["returns", "--trim", "--lags", "3", "--input", str(sim), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["error"] == "incompatible_flags"
    bad = tmp_path / "bad.csv"
    bad.write_text("Date,Close\n2001-01-02,100\n2001-01-05,-3\n")
    assert main(["returns", "--input", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 3" in json.loads(capsys.readouterr().err)["message"]


def test_per_lag_insufficient_data_continues(sim, tmp_path):
    assert main(["test", "chi2", "--input", str(sim), "--lags", "1,500,1500", "--out", str(tmp_path)]) == 0
    errs = json.loads((tmp_path / "test_chi2_gaussian_errors.json").read_text())["lag_errors"]
    assert {e["lag"] for e in errs} == {500, 1500}
    assert [r["lag"] for r in rows(tmp_path / "test_chi2_gaussian.csv")] == ["1"]


def test_trim_and_reuse(sim, tmp_path):
    assert main(["returns", "--trim", "--reuse-data", "--input", str(sim), "--lags", "1,5", "--out",
                 str(tmp_path)]) == 0
    r = rows(tmp_path / "returns_summary.csv")
    assert r[0]["n_series"] == "1" and int(r[0]["n_returns"]) + int(r[0]["n_trimmed"]) == 2000
