import numpy as np
import pytest

from pauli_lab.cli import main
from pauli_lab.experiments import read_csv_column

SMALL = ["--K", "32", "--Q", "4"]


def _verdicts(path):
    rows = [line.split(",") for line in path.read_text().splitlines() if not line.startswith("#")]
    return {r[0]: r[1:] for r in rows[1:]}


def test_theorem2_zero_potential_is_vacuous(tmp_path):
    assert main(["theorem2", "--u0", "0", "--out", str(tmp_path)] + SMALL) == 0
    v = _verdicts(tmp_path / "theorem2_verdict.csv")
    assert v["theorem2"][0] == "vacuous: zero perturbation"


def test_negative_m_in_config_fails_with_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[potential]\nU0 = 1\nm = -1\n")
    assert main(["theorem2", "--config", str(cfg)]) != 0
    err = capsys.readouterr().err
    assert "bad.cfg:3" in err and "m > 0" in err


def test_reference_theorem2_run_reports_ratio(tmp_path):
    assert main(["theorem2", "--K", "512", "--Q", "8", "--e", "0.1", "--m", "2", "--out", str(tmp_path)]) == 0
    v = _verdicts(tmp_path / "theorem2_verdict.csv")
    status, value, threshold = v["counting_ratio"]
    assert status == "pass" and float(value) <= 1.15 and float(threshold) == 1.15
    assert v["sandwich"][0] == "pass"


def test_strict_escalates_truncation_warning(tmp_path):
    assert main(["toeplitz", "--strict", "--out", str(tmp_path)] + SMALL) == 3
    assert main(["toeplitz", "--operator", "identity", "--strict", "--out", str(tmp_path)] + SMALL) == 0


def test_toeplitz_csv_is_self_describing(tmp_path):
    assert main(["toeplitz", "--operator", "p0Up0", "--out", str(tmp_path)] + SMALL) == 0
    vals, meta = read_csv_column(tmp_path / "toeplitz.csv", "lambda_k")
    for key in ("b0", "m", "K", "Q", "operator", "tool_version", "quadrature_tol"):
        assert key in meta
    assert meta["operator"] == "p0Up0" and meta["K"] == "32"
    assert vals.size == 32 and np.all(np.diff(vals) <= 0)


def test_repeated_runs_are_byte_identical(tmp_path):
    for _ in range(2):
        assert main(["bs-scan", "--out", str(tmp_path / "run"), "--n-grid", "40"] + SMALL) == 0
        (tmp_path / "run" / "bs_scan.csv").rename(tmp_path / f"scan{_}.csv")
    assert (tmp_path / "scan0.csv").read_bytes() == (tmp_path / "scan1.csv").read_bytes()


def test_asymptotics_consumes_toeplitz_output(tmp_path):
    assert main(["toeplitz", "--operator", "p0Up0", "--K", "1024", "--out", str(tmp_path)]) == 0
    assert main(["asymptotics", "--spectrum", str(tmp_path / "toeplitz.csv"), "--K", "1024",
                 "--out", str(tmp_path)]) == 0
    v = _verdicts(tmp_path / "asymptotics_verdict.csv")
    assert v["exponent"][0] == "pass"
    header = (tmp_path / "asymptotics.csv").read_text().splitlines()
    assert "r,count,fit_exponent,Cm_target,ratio" in header


def test_pauli_spectrum_and_index(tmp_path):
    assert main(["pauli-spectrum", "--out", str(tmp_path)] + SMALL) == 0
    assert main(["index", "--out", str(tmp_path)] + SMALL) == 0
    text = (tmp_path / "index.csv").read_text().splitlines()
    row = text[-1].split(",")
    assert row[5] == row[6]


def test_field_check(tmp_path):
    assert main(["field-check", "--btilde", "step(1.0, 0.5)", "--out", str(tmp_path)]) == 0
    _, meta = read_csv_column(tmp_path / "field_check.csv", "phitilde")
    assert abs(float(meta["osc"]) - 0.7006462732485115) < 1e-9
    assert float(meta["laplacian_residual"]) < 1e-6


def test_theorem1_sweep_with_threads(tmp_path):
    assert main(["theorem1", "--e-sweep", "0.05,0.1", "--threads", "2", "--out", str(tmp_path)] + SMALL) == 0
    v = _verdicts(tmp_path / "theorem1_verdict.csv")
    assert v["e=0.05:localization"][0] == "pass" and v["e=0.1:localization"][0] == "pass"


def test_bad_override_exits_two(tmp_path):
    assert main(["pauli-spectrum", "--r", "0.5", "--out", str(tmp_path)]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["nope"])
