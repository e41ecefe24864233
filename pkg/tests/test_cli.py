import csv
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from drmreg.cli import main
from drmreg.core import SampleSet
from drmreg.diagnostics import gof_report
from drmreg.estimation import fit
from drmreg.io import DataFormatError, load_model, model_from_dict, model_to_dict, read_data
from drmreg.regression import ols_fit, predict_many

from conftest import two_gaussian

ERROR_LINE = re.compile(r"^drmreg: error\[E_[A-Z]+\]: \S.*$")


def write_data(path, groups, labels=("case", "ctrl"), names=("x", "y")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, "group"])
        for label, g in zip(labels, groups):
            for row in np.atleast_2d(g):
                writer.writerow([repr(float(v)) for v in row] + [label])
    return str(path)


def write_queries(path, X, names=("x",)):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in np.atleast_2d(X):
            writer.writerow([repr(float(v)) for v in row])
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def gaussian_csv(tmp_path):
    data = two_gaussian(np.random.default_rng(3), 120, 100)
    return write_data(tmp_path / "data.csv", data.groups), data


def test_fit_smallest_input(tmp_path, capsys):
    path = write_data(tmp_path / "d.csv", [np.array([[0.0], [1.0], [3.0]]),
                                           np.array([[0.5], [2.0], [2.5]])], names=("y",))
    code, out, _ = run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["dimension"] == 1
    assert len(doc["alpha"]) == 1 and np.shape(doc["beta"]) == (1, 1)
    for key in ("alpha", "beta", "p_hat", "rho", "groups", "dimension", "log_lik", "converged",
                "se", "wald_per_group", "wald_joint", "constraint_residuals", "schema_version"):
        assert key in doc
    assert "joint Wald" in out


def test_fit_identical_groups(tmp_path, capsys):
    pts = np.random.default_rng(0).normal(size=(30, 2))
    path = write_data(tmp_path / "d.csv", [pts, pts])
    code, out, _ = run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert np.abs(doc["alpha"] + np.ravel(doc["beta"]).tolist()).max() < 1e-10
    assert doc["wald_joint"]["pvalue"] == pytest.approx(1.0)


def test_fit_recovers_gaussian_tilt(tmp_path, capsys):
    data = two_gaussian(np.random.default_rng(12), 2000, 2000)
    path = write_data(tmp_path / "d.csv", data.groups)
    code, _, _ = run(["fit", path, "--reference", "ctrl", "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["alpha"][0] == pytest.approx(0.3, abs=0.1)
    assert doc["beta"][0] == pytest.approx([-0.2, -0.4], abs=0.08)
    assert [g["label"] for g in doc["groups"]] == ["case", "ctrl"]
    assert doc["groups"][1]["reference"] is True


def test_fit_reference_flag_reorders(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    code, _, _ = run(["fit", path, "--reference", "case", "--standardize", "off",
                      "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    model, doc = load_model(tmp_path / "m.json")
    assert model.reference == "case" and doc["standardized"] is False


def test_round_trip_is_bit_for_bit(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    loaded, _ = load_model(tmp_path / "m.json")
    fresh = fit(read_data(path)[0])
    assert np.array_equal(loaded.params.as_vector(), fresh.params.as_vector())
    assert np.array_equal(loaded.p_hat, fresh.p_hat)
    assert np.array_equal(loaded.points, fresh.points)
    X = np.linspace(-3, 3, 7)
    assert np.array_equal(predict_many(loaded, X, "case"), predict_many(fresh, X, "case"))
    a = gof_report(loaded).to_dict()
    b = gof_report(fresh).to_dict()
    assert json.dumps(a) == json.dumps(b)


def test_model_json_ignores_unknown_fields(gaussian_csv):
    model = fit(gaussian_csv[1])
    doc = model_to_dict(model)
    doc["from_the_future"] = {"x": 1}
    back = model_from_dict(doc)
    assert np.array_equal(back.p_hat, model.p_hat)
    del doc["p_hat"]
    with pytest.raises(DataFormatError):
        model_from_dict(doc)


def test_predict_matches_library(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    X = np.array([[-1.0], [0.0], [2.5]])
    q = write_queries(tmp_path / "q.csv", X)
    code, _, _ = run(["predict", tmp_path / "m.json", q, "--group", "case", "--bandwidth", "0.4",
                      "--candidate-set", "group", "--out", tmp_path / "p.csv"], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "p.csv")
    assert list(rows[0]) == ["x", "group", "method", "prediction"]
    model, _ = load_model(tmp_path / "m.json")
    expected = predict_many(model, X, "case", h=0.4, candidate_set="group")
    assert [float(r["prediction"]) for r in rows] == expected.tolist()
    assert {r["method"] for r in rows} == {"drm"}


def test_predict_ols_matches_normal_equations(tmp_path, capsys, gaussian_csv):
    path, data = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    q = write_queries(tmp_path / "q.csv", [[0.0], [1.0]])
    code, out, _ = run(["predict", tmp_path / "m.json", q, "--group", "ctrl",
                        "--method", "ols"], capsys)
    assert code == 0
    ctrl = data.groups[1]
    D = np.column_stack([np.ones(len(ctrl)), ctrl[:, 0]])
    coef = np.linalg.solve(D.T @ D, D.T @ ctrl[:, 1])
    preds = [float(line.split(",")[-1]) for line in out.strip().splitlines()[1:]]
    assert preds == pytest.approx([coef[0], coef[0] + coef[1]], abs=1e-10)


def test_predict_constant_response(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    # A constant response cannot be fitted, so overwrite the stored responses.
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["points"] = [[row[0], 7.0] for row in doc["points"]]
    (tmp_path / "const.json").write_text(json.dumps(doc))
    q = write_queries(tmp_path / "q.csv", [[-1.0], [0.0], [1.0]])
    code, out, _ = run(["predict", tmp_path / "const.json", q, "--group", "case"], capsys)
    assert code == 0
    preds = [float(line.split(",")[-1]) for line in out.strip().splitlines()[1:]]
    assert preds == pytest.approx([7.0] * 3, abs=1e-12)


def test_predict_flags_unsupported_rows(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    q = write_queries(tmp_path / "q.csv", [[0.0], [1e7]])
    code, out, err = run(["predict", tmp_path / "m.json", q, "--group", "case",
                          "--kernel", "epanechnikov"], capsys)
    assert code == 4
    lines = out.strip().splitlines()
    assert lines[2].endswith(",NA") and not lines[1].endswith(",NA")
    assert "W_NO_SUPPORT" in err


def test_predict_wrong_query_columns(tmp_path, capsys, gaussian_csv):
    path, _ = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    q = write_queries(tmp_path / "q.csv", [[0.0, 1.0]], names=("a", "b"))
    code, _, err = run(["predict", tmp_path / "m.json", q, "--group", "case"], capsys)
    assert code == 2 and ERROR_LINE.match(err.strip())


def test_gof_outputs(tmp_path, capsys):
    pts = np.random.default_rng(2).normal(size=(25, 2))
    path = write_data(tmp_path / "d.csv", [pts, pts])
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    code, out, _ = run(["gof", tmp_path / "m.json", path, "--variant", "median",
                        "--out", tmp_path / "r.json", "--plot-data", tmp_path / "p.csv"], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "p.csv")
    assert list(rows[0]) == ["group", "point_index", "empirical", "semiparametric"]
    assert len(rows) == 50
    assert all(abs(float(r["empirical"]) - float(r["semiparametric"])) <= 1 / 25 for r in rows)
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["settings"]["variant"] == "median"
    assert all(g["r2_alpha_k"] == 1.0 for g in report["groups"])
    assert "R2_alpha_k" in out


def test_gof_run1_and_run4(tmp_path, capsys):
    from drmreg.simulation import generate, benchmark_scenarios

    sc = benchmark_scenarios(seed=7)
    for run_name, check in (("run1", lambda v: v >= 0.99), ("run4", lambda v: v <= 0.3)):
        data = generate(sc[run_name], 0)
        path = write_data(tmp_path / f"{run_name}.csv", data.groups)
        run(["fit", path, "--out", tmp_path / "m.json"], capsys)
        run(["gof", tmp_path / "m.json", "--out", tmp_path / "r.json"], capsys)
        report = json.loads((tmp_path / "r.json").read_text())
        ref = next(g for g in report["groups"] if g["label"] == "ctrl")
        assert check(ref["r2_alpha_k"])


def test_gof_rejects_mismatched_data(tmp_path, capsys, gaussian_csv):
    path, data = gaussian_csv
    run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    other = write_data(tmp_path / "o.csv", [g + 1.0 for g in data.groups])
    code, _, err = run(["gof", tmp_path / "m.json", other], capsys)
    assert code == 2 and "does not match" in err


SCENARIO = """
[scenario]
name = cli
seed = 5
replications = 3
reference = ctrl
nw = false

[group case]
family = mvn
n = 40
mu = 0 0
sigma = 4 2; 2 3

[group ctrl]
family = mvn
n = 30
mu = 0 0
sigma = 4 2; 2 3
"""


def test_simulate_is_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(SCENARIO)
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        code, _, _ = run(["simulate", cfg, "--workers", workers, "--out", tmp_path / f"{i}.csv"],
                         capsys)
        assert code == 0
        outs.append((tmp_path / f"{i}.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    code, _, _ = run(["simulate", cfg, "--seed", "6", "--replications", "2",
                      "--out", tmp_path / "x.csv"], capsys)
    assert (tmp_path / "x.csv").read_bytes() != outs[0]


def test_simulate_partial_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(SCENARIO.replace("n = 40", "n = 1").replace("n = 30", "n = 1"))
    code, out, err = run(["simulate", cfg], capsys)
    assert code == 4 and "W_PARTIAL" in err
    assert "DimensionError" in out


@pytest.mark.parametrize("content, fragment", [
    ("x,y,group\n1,2,a\n1,zz,b\n", "line 3"),
    ("x,y,group\n1,2,a\n1,2\n", "line 3"),
    ("x,y,group\n1,nan,a\n2,3,b\n", "line 2"),
    ("x,y,grp\n1,2,a\n2,3,b\n", "group"),
    ("x,y,group\n1,2,a\n2,3,a\n", "two distinct groups"),
    ("", "empty"),
    ("x,group\n1,2,a\n", "line 2"),
])
def test_fit_input_errors(tmp_path, capsys, content, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    code, _, err = run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 2
    assert ERROR_LINE.match(err.strip()) and len(err.strip().splitlines()) == 1
    assert fragment in err


def test_fit_numeric_failure_exit_code(tmp_path, capsys):
    path = write_data(tmp_path / "d.csv", [np.array([[0.0], [1.0], [2.0]]),
                                           np.array([[5.0], [6.0], [7.0]])], names=("y",))
    code, _, err = run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 3
    assert err.startswith("drmreg: error[E_")


def test_constant_column_is_an_input_error(tmp_path, capsys):
    groups = [np.column_stack([np.ones(5), np.arange(5.0)]),
              np.column_stack([np.ones(5), np.arange(5.0) + 1])]
    path = write_data(tmp_path / "d.csv", groups)
    code, _, err = run(["fit", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 2 and "constant" in err


def test_missing_files(tmp_path, capsys):
    code, _, err = run(["predict", tmp_path / "none.json", tmp_path / "q.csv", "--group", "a"],
                       capsys)
    assert code == 2 and ERROR_LINE.match(err.strip())
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    code, _, err = run(["gof", bad], capsys)
    assert code == 2 and "JSON" in err


def test_console_script_entry_point(tmp_path, gaussian_csv):
    path, _ = gaussian_csv
    proc = subprocess.run([sys.executable, "-m", "drmreg.cli", "fit", path,
                           "--out", str(tmp_path / "m.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m.json").exists()
