import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from calrm.cli import EXPERIMENT_COLUMNS, SIM_COLUMNS, main
from calrm.demand import DemandModel, total_demand_pmf
from calrm.instance import load_instance
from calrm.lp import read_mps, solve_lp


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bounds_fixture(capsys):
    assert main(["bounds", "--fixture", "appE1", "--bound", "prf,exf", "--oracle", "dp,offline"]) == 0
    rows = {r["bound"]: float(r["value"]) for r in rows_of(capsys.readouterr().out)}
    assert rows["prf"] == pytest.approx(1.25)
    assert rows["exf"] == pytest.approx(1.375)
    assert rows["dp"] == pytest.approx(1.25)
    assert rows["offline"] == pytest.approx(1.375)


def test_bounds_params_and_highs(capsys):
    assert main(["bounds", "--fixture", "appN", "--param", "alpha=3", "--bound", "prf,exf", "--method", "highs"]) == 0
    rows = {r["bound"]: float(r["value"]) for r in rows_of(capsys.readouterr().out)}
    assert rows == {"prf": pytest.approx(4.5), "exf": pytest.approx(9.0)}


def test_bounds_to_file_with_exports(tmp_path, capsys):
    out, mps, xs = tmp_path / "b.csv", tmp_path / "p.mps", tmp_path / "x.csv"
    code = main(["bounds", "--fixture", "appK2", "--bound", "prf", "--out", str(out), "--dump-lp", str(mps),
                 "--export-x", str(xs)])
    assert code == 0
    assert float(rows_of(out.read_text())[0]["value"]) == pytest.approx(2.75)
    assert solve_lp(read_mps(mps, sense="max")).objective == pytest.approx(2.75)
    x = rows_of(xs.read_text())
    assert set(x[0]) == {"k", "t", "q", "j", "x"}
    assert all(0 < float(r["x"]) <= 1 + 1e-9 for r in x)


def test_simulate_columns(capsys):
    assert main(["simulate", "--fixture", "appF", "--policy", "prf,exf", "--gamma", "auto-constant",
                 "--paths", "2000", "--seed", "3"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert list(rows[0]) == SIM_COLUMNS
    assert [r["policy"] for r in rows] == ["prf", "exf"]
    assert float(rows[0]["gamma"]) == 0.5
    assert float(rows[0]["ratio_prf"]) == pytest.approx(float(rows[0]["mean"]) / 4.0)


def test_simulate_is_reproducible(capsys):
    args = ["simulate", "--fixture", "appK2", "--paths", "500", "--seed", "8"]
    main(args)
    first = capsys.readouterr().out
    main(args + ["--threads", "4"])
    assert capsys.readouterr().out == first


def test_sweep_gamma_drops_duplicates(capsys):
    with pytest.warns(UserWarning, match="duplicate"):
        assert main(["sweep-gamma", "--fixture", "appF", "--grid", "0,0.5,0.5,1", "--paths", "1000"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert [float(r["gamma"]) for r in rows] == [0.0, 0.5, 1.0]
    assert float(rows[0]["mean"]) == 0.0
    assert float(rows[2]["mean"]) >= float(rows[1]["mean"])


def test_generate_and_load(tmp_path):
    path = tmp_path / "h.json"
    assert main(["generate", "--K", "2", "--base-mean", "5", "--rho", "0.3", "--seed", "4", "--out", str(path)]) == 0
    inst, model = load_instance(path)
    assert inst.n_products == 24 and model.K == 2 and model.T == 10


def test_experiment_cell(tmp_path, capsys):
    out = tmp_path / "e.csv"
    code = main(["experiment", "--cells", "2:0.5", "--base-mean", "4", "--paths", "200", "--out", str(out),
                 "--method", "highs"])
    assert code == 0
    rows = rows_of(out.read_text())
    assert list(rows[0]) == EXPERIMENT_COLUMNS
    r = rows[0]
    assert r["status"] == "ok"
    gap = (float(r["bound_exf"]) - float(r["bound_prf"])) / float(r["bound_exf"]) * 100
    assert float(r["bound_gap_pct"]) == pytest.approx(gap)


def test_experiment_bad_cell_is_reported(capsys):
    assert main(["experiment", "--cells", "2:1.5", "--base-mean", "4", "--paths", "10"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert rows[0]["status"].startswith("error")


def test_calibrate(tmp_path):
    target = tmp_path / "t.json"
    pmf = [0.1, 0.2, 0.3, 0.4, 0.0]
    target.write_text(json.dumps({"K": 2, "T": 3, "pmf": pmf}))
    out = tmp_path / "m.json"
    assert main(["calibrate", "--target", str(target), "--out", str(out)]) == 0
    np.testing.assert_allclose(total_demand_pmf(DemandModel.load(out)), pmf, atol=1e-12)


def test_dump_lp(tmp_path):
    out = tmp_path / "g.mps"
    assert main(["dump-lp", "--fixture", "appG", "--bound", "prf", "--out", str(out)]) == 0
    assert solve_lp(read_mps(out, sense="max")).objective == pytest.approx(10.0)


@pytest.mark.parametrize(
    "argv",
    [
        ["experiment", "--paths", "5"],
        ["simulate", "--fixture", "appF", "--gamma", "2"],
        ["simulate", "--fixture", "appF", "--gamma", "lots"],
        ["bounds", "--fixture", "appF", "--bound", "nope"],
        ["bounds", "--fixture", "appF", "--param", "K=3"],
        ["bounds"],
        ["bounds", "--fixture", "appE1", "--bound", "indep"],
        ["bounds", "--fixture", "appF", "--oracle", "offline", "--param", "K=22"],
        ["dump-lp", "--fixture", "appF"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_bad_instance_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["bounds", "--instance", str(p)]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["bounds", "--fixture", "appX"])
    assert err.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "calrm", "bounds", "--fixture", "appF"], capture_output=True, text=True)
    assert res.returncode == 0
    assert float(rows_of(res.stdout)[0]["value"]) == pytest.approx(4.0)


def test_solver_breakdown_exits_3(monkeypatch, capsys):
    import calrm.cli as cli
    from calrm.errors import NumericalBreakdown

    def boom(*args, **kwargs):
        raise NumericalBreakdown("singular basis")

    monkeypatch.setattr(cli, "solve_bound", boom)
    assert main(["bounds", "--fixture", "appF"]) == 3
    assert "singular basis" in capsys.readouterr().err
