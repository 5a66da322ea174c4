import csv
import json

import numpy as np
import pytest

from simweights.cli import main
from simweights.data import Dataset, read_csv, write_csv
from simweights.weights import fit_propensity, truncation_threshold


def rows_of(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "d.csv"
    argv = [
        "simulate", "--scenario", "covariate", "--externals", "3", "--similarity", "similar",
        "--target-n", "15", "--external-n", "30", "--seed", "7", "--out", str(out),
    ]
    assert main(argv) == 0
    return out, argv


# -------------------------------------------------------------------- simulate


def test_simulate_shape(simulated, capsys):
    out, _ = simulated
    header = out.read_text().splitlines()[0].split(",")
    assert header == ["subgroup", "y", "x_s1", "x_s2", "x_s3", "x_g1"]
    data = read_csv(out)
    assert data.n == 15 + 3 * 30
    assert data.d == 4
    assert data.labels() == ["0", "1", "2", "3"]


def test_simulate_is_byte_identical(simulated, tmp_path):
    out, argv = simulated
    again = tmp_path / "again.csv"
    argv = argv[:-1] + [str(again)]
    assert main(argv) == 0
    assert again.read_bytes() == out.read_bytes()


def test_simulate_prints_shift_vector(tmp_path, capsys):
    main(["simulate", "--externals", "1", "--similarity", "dissimilar", "--out", str(tmp_path / "x.csv")])
    assert "shift vector: 0.0 3.0" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--externals", "0"],
        ["simulate", "--scenario", "nonsense"],
        ["grid", "--kinds", ""],
        ["grid", "--jobs", "0"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


# ----------------------------------------------------------------------- weigh


def test_weigh_duplicate_distribution_auc_near_half(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 1))
    y = X[:, 0] + rng.normal(size=2000)
    path = tmp_path / "dup.csv"
    write_csv(Dataset(X, y, np.repeat(["t", "e"], 1000)), path)
    assert main(["weigh", "--input", str(path), "--target", "t", "--out", str(tmp_path / "w.csv")]) == 0
    diag = json.loads((tmp_path / "w.json").read_text())
    assert diag["subgroups"][0]["label"] == "e"
    assert abs(diag["subgroups"][0]["auc"] - 0.5) < 0.05
    w = np.array([float(r["weight"]) for r in rows_of(tmp_path / "w.csv")])
    assert abs(w[1000:].mean() - 1.0) < 0.15


def test_weigh_truncation_respects_target_percentile(simulated, tmp_path):
    out, _ = simulated
    wpath = tmp_path / "w.csv"
    assert main(["weigh", "--input", str(out), "--truncate-pct", "5", "--out", str(wpath)]) == 0
    rows = rows_of(wpath)
    p = np.array([float(r["propensity"]) for r in rows])
    w = np.array([float(r["weight"]) for r in rows])
    sub = np.array([r["subgroup"] for r in rows])
    data = read_csv(out)
    target, externals = data.split("0")
    for lab, ext in zip(["1", "2", "3"], externals):
        comp = fit_propensity(target, ext)
        thr = truncation_threshold(comp.p_target, 5.0)
        mask = sub == lab
        assert np.all(w[mask][p[mask] < thr] == 0)
        assert np.all(w[mask][p[mask] >= thr] > 0)
    assert np.all(w[sub == "0"] == 1.0)


def test_weigh_target_only_lists_subgroups(tmp_path, capsys):
    path = tmp_path / "t.csv"
    write_csv(Dataset(np.zeros((3, 1)) + [[1], [2], [3]], [1.0, 2.0, 3.0], ["a"] * 3), path)
    assert main(["weigh", "--input", str(path), "--target", "a", "--out", str(tmp_path / "w.csv")]) == 3
    assert "['a']" in capsys.readouterr().err
    assert main(["weigh", "--input", str(path), "--target", "zz", "--out", str(tmp_path / "w.csv")]) == 3


def test_schema_error_reports_row_and_column(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("subgroup,y,x1\na,1.0,2.0\nb,oops,3.0\n")
    assert main(["weigh", "--input", str(path), "--target", "a"]) == 3
    err = capsys.readouterr().err
    assert "row 2" in err and "'y'" in err


def test_config_file_and_flag_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nexternals = 1\ntarget-n = 12\nexternal-n = 5\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert read_csv(a).n == 17
    monkeypatch.setenv("SIMWEIGHTS_CONFIG", str(cfg))
    assert main(["simulate", "--target-n", "20", "--out", str(b)]) == 0
    assert read_csv(b).n == 25
    cfg.write_text("no-such-flag = 3\n")
    assert main(["simulate", "--out", str(b)]) == 2


# ------------------------------------------------------------------- bootstrap


def test_round_trip_simulate_weigh_bootstrap(simulated, tmp_path):
    out, _ = simulated
    assert main(["weigh", "--input", str(out), "--out", str(tmp_path / "w.csv")]) == 0
    od = tmp_path / "boot"
    assert main(["bootstrap", "--input", str(out), "--target", "0", "-B", "20", "--out-dir", str(od)]) == 0
    rep = json.loads((od / "bootstrap_report.json").read_text())
    assert [r["target_label"] for r in rep["reports"]] == ["0"]
    assert set(rep["reports"][0]["methods"]) == {"weighted", "global", "local"}
    assert len(rows_of(od / "per_observation.csv")) == 3 * 15


def five_centers(tmp_path):
    sizes = (27, 24, 16, 26, 64)
    rng = np.random.default_rng(5)
    X = rng.normal(size=(sum(sizes), 2))
    shift = np.repeat(np.arange(5) * 0.3, sizes)
    y = np.sqrt(np.maximum(30 + 4 * X[:, 0] - 2 * X[:, 1] + 3 * shift + rng.normal(size=len(X)), 0.1))
    labels = np.repeat(["A", "B", "C", "D", "E"], sizes)
    path = tmp_path / "centers.csv"
    write_csv(Dataset(X, y, labels), path)
    return path


def test_five_center_bootstrap_with_boxcox(tmp_path):
    path = five_centers(tmp_path)
    od = tmp_path / "out"
    argv = ["bootstrap", "--input", str(path), "-B", "30", "--boxcox-lambda", "2", "--seed", "1", "--out-dir", str(od)]
    assert main(argv) == 0
    rep = json.loads((od / "bootstrap_report.json").read_text())
    assert [r["target_label"] for r in rep["reports"]] == ["A", "B", "C", "D", "E"]
    for r in rep["reports"]:
        assert r["boxcox_lambda"] == 2.0
        for est in r["methods"].values():
            # errors are on the original (square-root) scale, around 0.1 here
            assert 0 < est["estimate"] < 1.0
    per_obs = rows_of(od / "per_observation.csv")
    assert len(per_obs) == 3 * (27 + 24 + 16 + 26 + 64)
    first = (od / "bootstrap_report.json").read_bytes()
    assert main(argv) == 0
    assert (od / "bootstrap_report.json").read_bytes() == first


def test_bootstrap_single_replicate_flags_bands(tmp_path, caplog):
    path = five_centers(tmp_path)
    od = tmp_path / "one"
    assert main(["bootstrap", "--input", str(path), "--target", "A", "-B", "1", "--out-dir", str(od)]) == 0
    rep = json.loads((od / "bootstrap_report.json").read_text())
    assert all(m["bands_degenerate"] for m in rep["reports"][0]["methods"].values())
    assert "degenerate" in caplog.text


# ------------------------------------------------------------------------ grid


def test_grid_command_writes_results_and_summary(tmp_path):
    out, summ = tmp_path / "g.csv", tmp_path / "g.json"
    argv = [
        "grid", "--kinds", "outcome", "--similarities", "similar", "--external-counts", "1,3",
        "--external-sizes", "10", "--target-sizes", "10", "--replicates", "2", "--jobs", "1",
        "--out", str(out), "--summary", str(summ),
    ]
    assert main(argv) == 0
    assert len(rows_of(out)) == 4
    s = json.loads(summ.read_text())
    assert set(s["average_rmse"]) == {"weighted", "p_only", "local", "global"}
    assert set(s["average_ess_ratio"]) == {"weighted", "p_only"}
    assert s["grid"]["master_seed"] == 2024
