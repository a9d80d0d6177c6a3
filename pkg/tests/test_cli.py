import csv
import json
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest

from sqgdisk.cli import ConfigError, apply_override, load_config, main, read_spectral_csv, write_spectral_csv
from sqgdisk.spectral import build_basis
from sqgdisk.sqg import smooth_datum

SMALL_SOLVE = ["--set", "basis.max_m=8", "--set", "basis.max_k=8", "--set", "solver.dt=0.005", "--set", "solver.T=0.05"]
TINY_VERIFY = '{"resolutions": [[8, 8], [12, 12]], "count": 3, "time_count": 2}'


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    with open(out / "manifest.json") as fh:
        return json.load(fh)


def check_manifest(out, command, code):
    man = manifest(out)
    assert man["command"] == command and man["exit_code"] == code
    stamp = os.path.getmtime(out / "manifest.json")
    for name in man["files"]:
        assert (out / name).exists()
        assert os.path.getmtime(out / name) <= stamp
    return man


def test_basis_first_row(tmp_path):
    assert main(["basis", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "basis.csv")
    assert len(rows) == 25 * 24
    first = rows[0]
    assert (first["m"], first["k"]) == ("0", "1")
    assert float(first["j_mk"]) == pytest.approx(2.404825557695773, abs=1e-15)
    j01 = mpmath.besseljzero(0, 1)
    norm = 1 / (mpmath.sqrt(mpmath.pi) * abs(mpmath.besselj(1, j01)))
    assert float(first["norm_const"]) == pytest.approx(float(norm), rel=1e-13)
    check_manifest(tmp_path, "basis", 0)


def test_basis_single_mode(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"basis": {"max_m": 0, "max_k": 1}}')
    out = tmp_path / "o"
    assert main(["basis", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(read_rows(out / "basis.csv")) == 1


@pytest.mark.parametrize(
    "text",
    ['{"basis": {"max_m": 4,}}', '{"basis": {"max_m": -1}}', '{"datum": {"kind": "weird"}}', '{"solver": {"dt": 0.003, "T": 0.01}}', '{"nope": 1}', "[1, 2]"],
)
def test_malformed_config_writes_nothing(tmp_path, text, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) != 0
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_config_error_points_at_position(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "seed": 1,\n  "basis": {"max_m": 4,}\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(str(cfg))
    assert "bad.json:3:24:" in str(info.value)
    assert str(info.value).splitlines()[-1].strip() == "^"


def test_apply_override():
    cfg = load_config(None)
    apply_override(cfg, "solver.dt=0.01")
    apply_override(cfg, "datum.kind=zero")
    assert cfg["solver"]["dt"] == 0.01 and cfg["datum"]["kind"] == "zero"
    with pytest.raises(ConfigError):
        apply_override(cfg, "no_equals_sign")


def test_unknown_check_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--check", "bogus", "--out", str(tmp_path / "o")])
    assert info.value.code == 2
    assert not (tmp_path / "o").exists()


def test_solve_is_byte_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["solve", "--out", str(out), "--seed", "3"] + SMALL_SOLVE) == 0
    for name in ("initial_state.csv", "diagnostics.csv", "final_state.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    man = check_manifest(a, "solve", 0)
    assert man["seed"] == 3 and man["steps"] == 10


def test_zero_datum_gives_zero_diagnostics(tmp_path):
    assert main(["solve", "--out", str(tmp_path), "--set", "datum.kind=\"zero\""] + SMALL_SOLVE) == 0
    rows = read_rows(tmp_path / "diagnostics.csv")
    assert len(rows) == 11
    for row in rows:
        for key, val in row.items():
            if key not in ("t", "step"):
                assert float(val) == 0.0, (key, val)


def test_blowup_exit_keeps_diagnostics(tmp_path):
    code = main(["solve", "--out", str(tmp_path), "--set", "solver.blowup_factor=0.5"] + SMALL_SOLVE)
    assert code == 3
    assert (tmp_path / "diagnostics.csv").exists()
    assert len(read_rows(tmp_path / "diagnostics.csv")) >= 1
    man = check_manifest(tmp_path, "solve", 3)
    assert man["aborted"] and "final_state.csv" not in man["files"]


def test_cfl_violation_exits_nonzero(tmp_path):
    args = ["--set", "basis.max_m=10", "--set", "basis.max_k=10", "--set", "solver.dt=0.02", "--set", "solver.T=0.04", "--set", "datum.amplitude=50"]
    assert main(["solve", "--out", str(tmp_path)] + args) == 1


def test_csv_datum_round_trip(tmp_path):
    b = build_basis(6, 5)
    f = smooth_datum(b, 2)
    path = tmp_path / "f.csv"
    write_spectral_csv(path, f)
    g = read_spectral_csv(path, b)
    assert np.array_equal(f.coeffs, g.coeffs)
    h = read_spectral_csv(path)
    assert h.basis.shape == b.shape and np.array_equal(h.coeffs, f.coeffs)
    out = tmp_path / "o"
    args = ["--set", f"datum.path=\"{path}\"", "--set", 'datum.kind="csv"', "--set", "basis.max_m=6", "--set", "basis.max_k=5", "--set", "solver.dt=0.01", "--set", "solver.T=0.01"]
    assert main(["solve", "--out", str(out)] + args) == 0
    assert read_spectral_csv(out / "initial_state.csv", b).coeffs.tolist() == f.coeffs.tolist()


def test_single_check_verify(tmp_path):
    out = tmp_path / "o"
    code = main(["verify", "--check", "second_derivative", "--out", str(out), "--set", f"verify={TINY_VERIFY}"])
    with open(out / "second_derivative.json") as fh:
        rep = json.load(fh)
    assert code == (0 if rep["passed"] else 1)
    rows = read_rows(out / "summary.csv")
    assert [r["check"] for r in rows] == ["second_derivative"]
    check_manifest(out, "verify", code)


def test_verify_exit_code_reflects_failure(tmp_path):
    # a drift limit of 1 turns any resolution dependence into an unstable check
    out = tmp_path / "o"
    verify = TINY_VERIFY[:-1] + ', "drift_limit": 1.0}'
    code = main(["verify", "--check", "bilinear", "--out", str(out), "--set", f"verify={verify}"])
    assert code == 1
    assert manifest(out)["all_passed"] is False


def test_picard_command(tmp_path):
    args = ["--set", "basis.max_m=6", "--set", "basis.max_k=6", "--set", "solver.dt=0.005", "--set", "solver.T=0.1", "--set", "datum.amplitude=0.01", "--set", "picard.N=4"]
    assert main(["picard", "--out", str(tmp_path)] + args) == 0
    rows = read_rows(tmp_path / "picard.csv")
    assert [int(r["n"]) for r in rows] == [1, 2, 3, 4]
    D = [float(r["D"]) for r in rows[1:]]
    assert D[-1] < D[0]
    check_manifest(tmp_path, "picard", 0)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sqgdisk", "basis", "--out", str(tmp_path), "--set", "basis.max_m=1", "--set", "basis.max_k=2"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(tmp_path / "basis.csv")) == 4
