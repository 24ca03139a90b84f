import io
import json
import subprocess
import sys

import pytest

from tandemfusion import cli, fusion
from tandemfusion.cli import ConfigError, ExperimentConfig, main
from tandemfusion.errors import NumericalError


def run(argv):
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


def csv_rows(text):
    lines = [ln for ln in text.splitlines() if ln and ":" not in ln.split(",")[0]]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_default_sweep_check_passes():
    code, text = run(["sweep", "--check"])
    assert code == 0
    header, rows = csv_rows(text)
    assert header == cli.SWEEP_COLUMNS
    assert [r[0] for r in rows] == ["2", "4", "8", "16"]
    assert "chernoff_monotone: true" in text and "pe_monotone: true" in text


def test_single_k_sweep():
    code, text = run(["sweep", "--k-list", "2"])
    assert code == 0
    assert len(csv_rows(text)[1]) == 1


@pytest.mark.parametrize("argv, field", [
    (["sweep", "--prior1", "1.2"], "prior1"),
    (["sweep", "--k-list", "2,3"], "k_list"),
    (["sweep", "--k-list", "4,2"], "k_list"),
    (["sweep", "--k-list", "2,x"], "k_list"),
    (["sweep", "--mc-samples", "-5"], "mc_samples"),
])
def test_bad_config_exits_1_naming_field(argv, field, capsys):
    code, _ = run(argv)
    assert code == 1
    assert f"'{field}'" in capsys.readouterr().err


def test_unknown_subcommand_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1


def test_unknown_config_field(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"priorl": 0.3}))
    assert run(["sweep", "--config", str(path)])[0] == 1
    assert "'priorl'" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"k_list": [2, 4], "prior1": 0.3, "seed": 7}))
    code, text = run(["sweep", "--config", str(path), "--k-list", "3", "--format", "json"])
    assert code == 0
    doc = json.loads(text)
    assert doc["config"]["k_list"] == [3] and doc["config"]["prior1"] == 0.3 and doc["config"]["seed"] == 7


def test_json_schema():
    code, text = run(["sweep", "--k-list", "2,4", "--format", "json"])
    doc = json.loads(text)
    assert doc["schema"] == 1 and doc["command"] == "sweep"
    assert doc["columns"] == cli.SWEEP_COLUMNS
    assert len(doc["rows"]) == 2
    assert doc["chernoff_monotone"] is True or doc.get("summary", {}).get("chernoff_monotone") is True


def test_output_is_byte_identical_across_runs(tmp_path):
    argv = ["sweep", "--k-list", "2,4", "--mc-samples", "20000", "--seed", "3"]
    assert run(argv)[1] == run(argv)[1]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(argv + ["--output", str(a)])
    run(argv + ["--output", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_non_learnable_chernoff_prints_zero(tmp_path):
    path = tmp_path / "cfg.json"
    flat = {"family": "gaussian_equal_variance", "params0": [0.0, 1.0], "params1": [0.0, 1.0]}
    path.write_text(json.dumps({"node1": flat, "k_list": [2, 4]}))
    code, text = run(["chernoff", "--config", str(path)])
    assert code == 0
    header, rows = csv_rows(text)
    i = header.index("C_discrete")
    assert all(float(r[i]) == 0.0 for r in rows)
    assert "C_continuous: 0" in text


def test_chernoff_default_values():
    code, text = run(["chernoff", "--k-list", "2,4"])
    assert code == 0
    summary = dict(ln.split(": ") for ln in text.splitlines() if ": " in ln)
    assert float(summary["C_continuous"]) == pytest.approx(0.125, abs=1e-6)


def test_exponent_table():
    code, text = run(["exponent", "--k", "3", "--n-max", "12"])
    assert code == 0
    header, rows = csv_rows(text)
    assert header == ["n", "pe", "exponent", "abs_gap_to_C"]
    assert [int(r[0]) for r in rows] == list(range(1, 13))


def test_simulate():
    code, text = run(["simulate", "--k-list", "2,4", "--mc-samples", "50000", "--seed", "1"])
    assert code == 0
    header, rows = csv_rows(text)
    pe = [float(r[header.index("pe_mc")]) for r in rows]
    assert all(0.2 < v < 0.3 for v in pe)


def test_selftest_all_pass():
    code, text = run(["selftest"])
    assert code == 0
    assert text.count("PASS") == len(cli.selftest_checks()) and "FAIL" not in text


def test_check_exit_2_on_false_flag(monkeypatch):
    real = cli.theorem3_experiment

    def flagged(*a, **kw):
        r = real(*a, **kw)
        return fusion.ExperimentResult(r.rows, r.mode, r.learnable, False, r.pe_monotone)

    monkeypatch.setattr(cli, "theorem3_experiment", flagged)
    assert run(["sweep", "--k-list", "2,4", "--check"])[0] == 2
    code, text = run(["sweep", "--k-list", "2,4"])
    assert code == 0 and "chernoff_monotone: false" in text


def test_numerical_failure_row_exits_1(monkeypatch):
    real = fusion.exact_error

    def flaky(system, method="auto"):
        if system.quantizer.k == 4:
            raise NumericalError("integrand did not converge", {})
        return real(system, method)

    monkeypatch.setattr(fusion, "exact_error", flaky)
    code, text = run(["sweep", "--k-list", "2,4"])
    assert code == 1
    assert "error: integrand did not converge" in text


def test_fmt():
    assert cli.fmt(float("nan")) == "nan"
    assert cli.fmt(float("inf")) == "inf"
    assert cli.fmt(0.1 + 0.2) == "0.3"


def test_config_roundtrip():
    cfg = ExperimentConfig.from_mapping({"prior1": 0.25, "k_list": [1, 2, 6]})
    again = ExperimentConfig.from_mapping(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"node1": {"family": "nope"}})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tandemfusion", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0 and "PASS" in proc.stdout
