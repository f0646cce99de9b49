import json
import shutil
import subprocess
import sys

import pytest

from einvex.classifiers import recompute_witness, witness_holds
from einvex.cli import SUITES, run
from einvex.problem import BUILTINS, builtin_text, load_builtin
from einvex.sampling import CertReport


def run_json(tmp_path, argv, name="out.json"):
    path = tmp_path / name
    code = run(argv + ["--json", str(path)])
    return code, path.read_bytes()


def test_examples_lists_builtins(capsys):
    assert run(["examples"]) == 0
    assert capsys.readouterr().out.split() == list(BUILTINS)


@pytest.mark.parametrize("argv, code", [
    (["examples", "ex1", "--check", "qsep"], 0),
    (["examples", "ex1", "--check", "sep"], 2),
    (["examples", "ex2", "--check", "qsep"], 2),
    (["examples", "ex2", "--check", "e_prequasi_invex"], 0),
    (["examples", "sum_counterexample"], 3),
    (["examples", "nlpp_certified", "--starts", "4"], 0),
    (["examples", "nope"], 1),
    (["examples", "ex1", "--check", "nope"], 1),
    (["examples", "ex1", "--suite", "nope"], 1),
    (["examples", "ex1", "--check", "qsep", "--workers", "0"], 1),
    (["examples", "ex1", "--check", "qsep", "--tol", "-1"], 1),
    (["bogus"], 1),
    ([], 1),
])
def test_exit_codes(argv, code):
    assert run(argv) == code


def test_file_commands(tmp_path):
    f = tmp_path / "ex1.toml"
    f.write_text(builtin_text("ex1"), encoding="utf-8")
    assert run(["certify", "qsep", str(f)]) == 0
    assert run(["certify", "condition_a", str(f), "--grid", "5", "--random-pairs", "10"]) in (0, 2)
    assert run(["suite", "shift", str(f)]) == 0
    assert run(["counterexample", "sep", str(f), "--refine"]) == 2
    assert run(["solve", str(f)]) == 1
    assert run(["certify", "qsep", str(tmp_path / "missing.toml")]) == 1


def test_missing_table_is_usage_error(tmp_path, capsys):
    f = tmp_path / "p.toml"
    f.write_text("[box]\nbounds = [[0.0, 1.0]]\n[functions]\nh = 's'\n", encoding="utf-8")
    assert run(["suite", "sup_family", str(f)]) == 1
    assert "[family]" in capsys.readouterr().err


def test_suite_names_cover_registry():
    assert {"shift", "linear_combination", "inf_marginal", "levelsets_imply_qsep"} <= set(SUITES)


def test_json_witness_round_trip(tmp_path):
    code, raw = run_json(tmp_path, ["examples", "ex1", "--check", "sep"])
    assert code == 2
    rep = CertReport.from_dict(json.loads(raw))
    assert rep.refuted and rep.witness is not None
    P = load_builtin("ex1").triple()
    again = recompute_witness("sep", P, rep.witness)
    assert again.lhs == rep.witness.lhs and again.rhs == rep.witness.rhs
    assert witness_holds("sep", P, rep.witness)


def test_json_byte_identical_across_runs_and_workers(tmp_path):
    argv = ["examples", "ex2", "--check", "qsep", "--check", "sep", "--suite", "shift"]
    _, a = run_json(tmp_path, argv, "a.json")
    _, b = run_json(tmp_path, argv, "b.json")
    _, c = run_json(tmp_path, argv + ["--workers", "3"], "c.json")
    assert a == b == c
    doc = json.loads(a)
    assert doc["problem"] == "ex2" and len(doc["reports"]) == 3


def test_tol_flag_changes_reported_tolerance(tmp_path):
    _, raw = run_json(tmp_path, ["examples", "ex1", "--check", "qsep", "--tol", "1e-6"])
    assert json.loads(raw)["tolerance"] == 1e-6


@pytest.mark.skipif(shutil.which("einvex") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["einvex", "examples", "ex1", "--check", "sep"], capture_output=True, text=True)
    assert out.returncode == 2 and "refuted" in out.stdout
    mod = subprocess.run([sys.executable, "-m", "einvex", "examples"], capture_output=True, text=True)
    assert mod.returncode == 0 and "ex1" in mod.stdout
