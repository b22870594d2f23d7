import csv
import json

import pytest

from specmeasure.cli import dirac_scan_points, main
from specmeasure.presets import ConfigError, locate_field, resolve_config


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--threads", "1"])
    return code, out


def test_schrodinger_preset_writes_121_rows(tmp_path):
    code, out = run(tmp_path, "diff-meas", "--preset", "schrodinger", "--epsilon", "0.1", "--order", "1")
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 122
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == 6.0
    manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert manifest["command"] == "diff-meas" and manifest["config"]["order"] == 1


def test_order_zero_is_a_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["diff-meas", "--order", "0", "--out", str(tmp_path / "x.csv")])
    assert info.value.code == 2
    assert "order" in capsys.readouterr().err


def test_repeat_and_replay_are_byte_identical(tmp_path):
    argv = ["int-meas", "--preset", "gaussian", "--grid", "-1", "1.5", "11"]
    assert run(tmp_path, *argv, name="a.csv")[0] == 0
    assert run(tmp_path, *argv, name="b.csv")[0] == 0
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    replay = tmp_path / "c.csv"
    assert main(["replay", str(tmp_path / "a.csv.manifest.json"), "--out", str(replay), "--threads", "8"]) == 0
    assert replay.read_bytes() == a


def test_csv_uses_17_significant_digits(tmp_path):
    code, out = run(tmp_path, "int-meas", "--preset", "identity", "--epsilon", "0.01", "--grid", "0.5", "0.5", "1")
    assert code == 0
    value = read_rows(out)[1][1]
    mantissa = value.lower().split("e")[0].replace("-", "").replace(".", "").lstrip("0")
    assert len(mantissa) <= 17
    assert abs(float(value) - 0.375) < 0.01


def test_rse_probability_lies_in_unit_interval(tmp_path, capsys):
    code, out = run(tmp_path, "rse-meas", "--preset", "hellmann", "--order", "4", "--epsilon", "0.1",
                    "--prob-interval", "0.5", "2", "--grid", "0.5", "2", "4")
    assert code == 0
    manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    p = float(manifest["results"]["probability"])
    assert 0 <= p <= 1
    assert "probability" in capsys.readouterr().out


def test_infmat_grid_of_125_points(tmp_path):
    code, out = run(tmp_path, "infmat-meas", "--preset", "jacobi", "--epsilon", "0.05", "--order", "2",
                    "--grid", "-3.1", "3.1", "125")
    assert code == 0
    assert len(read_rows(out)) == 126


def test_nonconvergence_exit_code_keeps_partial_results(tmp_path, capsys):
    code, out = run(tmp_path, "infmat-meas", "--preset", "graphene", "--radius", "8", "--grid", "-1", "1", "3")
    assert code == 3
    assert len(read_rows(out)) == 4
    assert "did not converge" in capsys.readouterr().err


def test_dirac_count_zero_is_empty(tmp_path):
    code, out = run(tmp_path, "dirac-eigs", "--count", "0")
    assert code == 0
    assert read_rows(out) == [["j", "computed", "analytic", "abs_error", "weight"]]


def test_dirac_gamma_out_of_range(tmp_path, capsys):
    code, _ = run(tmp_path, "dirac-eigs", "--gamma", "-0.9")
    assert code == 2
    assert "gamma" in capsys.readouterr().err


def test_dirac_scan_grid():
    pts = dirac_scan_points(-0.999, 1e-3, 0.1)
    assert pts[0] == pytest.approx(-0.999) and pts[-1] < 1 - 1e-3
    assert all(a < b for a, b in zip(pts, pts[1:]))


def test_convergence_multiplication_preset(tmp_path, capsys):
    code, out = run(tmp_path, "convergence", "--preset", "multiplication")
    assert code == 0
    rows = read_rows(out)
    assert rows[0][:3] == ["m", "epsilon", "rel_error"] and len(rows) == 7
    assert "slopes" in capsys.readouterr().out


def test_convergence_without_oracle_or_reference(tmp_path, capsys):
    code, _ = run(tmp_path, "convergence", "--preset", "gaussian")
    assert code == 2
    assert "reference" in capsys.readouterr().err


def test_graphene_flux_out_of_range(tmp_path, capsys):
    code, _ = run(tmp_path, "infmat-meas", "--preset", "graphene", "--flux", "1.5")
    assert code == 2
    assert "flux" in capsys.readouterr().err


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "preset": "gaussian",\n  "epsilon": 0.1,,\n}\n')
    code, _ = run(tmp_path, "int-meas", "--config", str(cfg))
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_bad_field_reports_line(tmp_path, capsys):
    cfg = tmp_path / "field.json"
    cfg.write_text('{\n  "preset": "gaussian",\n  "epsilon": -0.1\n}\n')
    code, _ = run(tmp_path, "int-meas", "--config", str(cfg))
    assert code == 2
    err = capsys.readouterr().err
    assert "epsilon" in err and "line 3" in err


def test_unknown_field_is_rejected():
    with pytest.raises(ConfigError, match="unknown field"):
        resolve_config("int-meas", {"preset": "gaussian", "epsilom": 0.1})
    assert locate_field('{\n "a": 1,\n "epsilon": 2\n}', "field 'epsilon': bad") == 3


def test_default_order_is_two():
    assert resolve_config("int-meas", {"preset": "gaussian"})["order"] == 2
