"""CLI: table output, check exit codes, determinism, CSV flattening."""

import json
from math import pi

import pytest

from croftonlab import cli


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr().out
    return code, out


def test_coeffs_gb_table(capsys):
    code, out = run_cli(["coeffs", "--gb", "--n", "2"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["schemaVersion"] == 1
    assert rep["config"]["n"] == 2
    entries = {(e["k"], e["q"], e["epsPow"]): e["coeff"] for e in rep["results"]["entries"]}
    assert entries[(0, 0, 0)] == {"num": "2", "den": "1", "piPow": "2"}
    assert entries[(2, 1, 1)] == {"num": "4", "den": "1", "piPow": "1"}
    assert rep["results"]["vol"] == [
        {"epsPow": 2, "coeff": {"num": "12", "den": "1", "piPow": "0"}}
    ]


def test_coeffs_crofton_and_variation(capsys):
    code, out = run_cli(["coeffs", "--crofton", "--n", "3", "--r", "1"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["results"]["grassmannianFactor"] is True
    code, out = run_cli(["coeffs", "--variation", "--n", "2"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert "vol" in rep["results"]


def test_coeffs_identities(capsys):
    code, out = run_cli(["coeffs", "--identities", "--max-n", "3"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] is True
    assert rep["results"]["solver"]["3,2"] is True


def test_volumes_closed_form(capsys):
    code, out = run_cli(
        ["volumes", "--shape", "ball", "--n", "2", "--eps", "0", "--R", "1",
         "--closed-form"],
        capsys,
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["results"]["table"]["mu:2,1"] == pytest.approx(pi)


def test_volumes_richardson(capsys):
    code, out = run_cli(
        ["volumes", "--shape", "ellipsoid", "--axes", "1,1,2,2", "--level", "1",
         "--richardson"],
        capsys,
    )
    assert code == 0
    rep = json.loads(out)
    assert "richardsonError" in rep["results"]


def test_check_gauss_bonnet_pass_and_fail(capsys):
    args = ["check", "gauss-bonnet", "--shape", "ball", "--n", "3", "--eps", "-1",
            "--R", "0.7"]
    code, out = run_cli(args, capsys)
    assert code == 0
    assert json.loads(out)["pass"] is True
    code, out = run_cli(args + ["--tol", "1e-30"], capsys)
    assert code == 1
    assert json.loads(out)["pass"] is False


def test_check_gamma_b(capsys):
    code, out = run_cli(
        ["check", "gamma-b", "--n", "3", "--eps", "1", "--R", "0.5"], capsys
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["results"]["worst"] < 1e-9


def test_check_variation_ball(capsys):
    code, out = run_cli(
        ["check", "variation", "--shape", "ball", "--n", "2", "--eps", "1",
         "--R", "0.5"],
        capsys,
    )
    assert code == 0


def test_check_crofton_mc_small(capsys):
    code, out = run_cli(
        ["check", "crofton-mc", "--n", "2", "--r", "1", "--samples", "60000",
         "--seed", "7", "--level", "2"],
        capsys,
    )
    rep = json.loads(out)
    assert code == 0
    for item in rep["results"]["items"]:
        assert abs(item["z"]) < 3


def test_report_determinism(capsys, monkeypatch):
    args = ["check", "crofton-mc", "--n", "2", "--r", "1", "--samples", "30000",
            "--seed", "7", "--level", "1"]
    _, out1 = run_cli(args, capsys)
    _, out2 = run_cli(args, capsys)
    assert out1 == out2
    monkeypatch.setenv("CROFTONLAB_THREADS", "3")
    _, out3 = run_cli(args, capsys)
    assert out1 == out3  # byte-identical regardless of thread count


def test_report_embeds_config_seed_tolerance(capsys):
    _, out = run_cli(
        ["check", "gamma-b", "--n", "3", "--eps", "1", "--R", "0.5", "--tol", "1e-8"],
        capsys,
    )
    rep = json.loads(out)
    assert rep["config"]["seed"] == 0
    assert rep["config"]["tol"] == 1e-8
    assert rep["results"]["tolerance"] == 1e-8
    assert rep["version"]
    assert rep["tool"] == "croftonlab"


def test_csv_output_flattens_kq_keys(capsys, tmp_path):
    out_path = tmp_path / "table.csv"
    code, _ = run_cli(
        ["volumes", "--shape", "ball", "--n", "2", "--eps", "0", "--R", "1",
         "--closed-form", "--format", "csv", "--out", str(out_path)],
        capsys,
    )
    assert code == 0
    header, row = out_path.read_text().strip().split("\n")
    assert "results.table.mu:2.1" in header
    assert "mu:2,1" not in header  # (k,q) keys flatten as "k.q"
    assert len(header.split(",")) == len(row.split(","))


def test_output_file_json(capsys, tmp_path):
    out_path = tmp_path / "rep.json"
    code, out = run_cli(
        ["coeffs", "--gb", "--n", "1", "--out", str(out_path)], capsys
    )
    assert code == 0
    assert out == ""
    rep = json.loads(out_path.read_text())
    assert rep["results"]["vol"][0]["coeff"]["num"] == "4"
