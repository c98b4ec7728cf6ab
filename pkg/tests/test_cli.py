import csv
import json
import os
import shutil
from pathlib import Path

import numpy as np
import pytest

from noisetensor import cli

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"
# set to rewrite the golden files after an intended numerical change
REGEN = os.environ.get("NOISETENSOR_REGEN_GOLDEN") == "1"
RTOL, ATOL = 1e-10, 1e-12

CASES = {
    "ensemble": ["ensemble", "ensemble.json"],
    "spin": ["spin", "spin.json", "--seed", "1"],
    "ito": ["ito", "ito.json", "--seed", "3"],
    "dephasing": ["ito", "dephasing.json", "--seed", "7"],
    "jump": ["jump", "jump.json", "--seed", "4"],
    "qtensor": ["qtensor", "qtensor.json"],
    "master": ["master", "master.json"],
    "caldeira": ["master", "caldeira.json"],
    "collisional": ["collisional", "collisional.json", "--seed", "6", "--n", "2"],
    "reduce": ["reduce", "reduce.json", "--seed", "12345"],
    "check-descent": ["check-descent", "spin.json", "--n", "3"],
}


def run_cli(case, out, *extra):
    command, config, *rest = CASES[case]
    return cli.main([command, "--input", str(CONFIGS / config), "--out", str(out), *rest, *extra])


def _cell(text):
    try:
        return float(text)
    except ValueError:
        return text


def compare_values(got, want, where):
    if isinstance(want, dict):
        assert isinstance(got, dict) and sorted(got) == sorted(want), where
        for k in want:
            compare_values(got[k], want[k], f"{where}.{k}")
    elif isinstance(want, list):
        assert isinstance(got, list) and len(got) == len(want), where
        for i, (g, w) in enumerate(zip(got, want)):
            compare_values(g, w, f"{where}[{i}]")
    elif isinstance(want, bool) or isinstance(want, str) or want is None:
        assert got == want, f"{where}: {got!r} != {want!r}"
    else:
        assert not isinstance(got, (bool, str)), where
        assert abs(got - want) <= ATOL + RTOL * abs(want), f"{where}: {got!r} != {want!r}"


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [rows[0]] + [[_cell(c) for c in row] for row in rows[1:]]


def compare_dirs(got_dir, want_dir):
    got_files = sorted(p.name for p in got_dir.iterdir())
    want_files = sorted(p.name for p in want_dir.iterdir())
    assert got_files == want_files
    for name in want_files:
        g, w = got_dir / name, want_dir / name
        if name.endswith(".json"):
            compare_values(json.loads(g.read_text()), json.loads(w.read_text()), name)
        else:
            compare_values(read_csv(g), read_csv(w), name)


@pytest.mark.parametrize("case", sorted(CASES))
def test_golden(case, tmp_path, capsys):
    out = tmp_path / case
    assert run_cli(case, out) == cli.EXIT_OK
    capsys.readouterr()
    want = GOLDEN / case
    if REGEN:
        shutil.rmtree(want, ignore_errors=True)
        shutil.copytree(out, want)
    compare_dirs(out, want)
    checks = json.loads((out / "checks.json").read_text())
    assert checks and all(c["pass"] for c in checks)
    for c in checks:
        assert sorted(c) == ["check", "module", "paper_ref", "pass", "tolerance", "value"]


def test_every_subcommand_has_a_golden_case():
    assert {args[0] for args in CASES.values()} == set(cli.SUBCOMMANDS)


def test_reruns_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("dephasing", a) == cli.EXIT_OK
    assert run_cli("dephasing", b, "--threads", "2") == cli.EXIT_OK
    capsys.readouterr()
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_reduce_verdicts(tmp_path, capsys):
    verdicts = {}
    for variant in ("nonreducing", "reducing"):
        out = tmp_path / variant
        assert run_cli("reduce", out, "--variant", variant) == cli.EXIT_OK
        verdicts[variant] = {c["check"] for c in json.loads((out / "checks.json").read_text())}
    capsys.readouterr()
    assert any("flat" in c for c in verdicts["nonreducing"])
    assert any("nonincreasing" in c for c in verdicts["reducing"])


def test_bad_json_reports_line_and_column(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "n": 2,\n  "seed": \n}\n')
    assert cli.main(["spin", "--input", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 4" in err and "column" in err


def test_missing_seed(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "ito.json").read_text())
    del cfg["seed"]
    path = tmp_path / "noseed.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["ito", "--input", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_bad_field_names_its_path(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "ito.json").read_text())
    cfg["sde"]["steps"] = "many"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["ito", "--input", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "sde.steps" in capsys.readouterr().err


def test_unknown_flag_is_a_config_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["spin", "--input", "x.json", "--bogus"])
    assert exc.value.code == cli.EXIT_CONFIG
    capsys.readouterr()


def test_budget_exceeded(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NOISETENSOR_BUDGET_MB", "0.001")
    assert run_cli("qtensor", tmp_path / "o") == cli.EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_check_failure_exit_code(tmp_path, capsys):
    # chain descent of the quantum tensor needs a pure joint state
    mixed = np.diag([0.5, 0.2, 0.2, 0.1]).astype(complex)
    cfg = {"kind": "bipartite", "n": 2,
           "state": {"dE": 2, "dS": 2, "rho": [[[x.real, x.imag] for x in row] for row in mixed]}}
    path = tmp_path / "mixed.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    assert cli.main(["check-descent", "--input", str(path), "--out", str(out)]) == cli.EXIT_CHECK
    checks = json.loads((out / "checks.json").read_text())
    assert any(not c["pass"] and "chain" in c["check"] for c in checks)
    capsys.readouterr()
