import json
import subprocess
import sys
from pathlib import Path

import pytest

from pmellin.cli import main
from pmellin.exactnum import format_mv, parse_mv

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = sorted((ROOT / "problems").glob("*.json"))


@pytest.mark.parametrize("path", PROBLEMS, ids=lambda p: p.name)
def test_problem_files_pass(path, capsys):
    assert main(["run", str(path)]) == 0
    out = capsys.readouterr().out
    assert "(FAIL)" not in out


def test_tate_prints_canonical_value(capsys):
    assert main(["integrate", str(ROOT / "problems" / "tate.json")]) == 0
    assert "(1 - q^-1) / (1 - q^-1 * T1)" in capsys.readouterr().out


def _write(tmp_path, data):
    p = tmp_path / "p.json"
    p.write_text(json.dumps(data))
    return str(p)


def _problem(task, functions=None):
    return {"format": 1, "config": {"p": 3},
            "definitions": {"functions": functions or {
                "tate": {"builder": "norm_power", "args": {"T": 1, "var": "x", "zmin": 0}}}},
            "tasks": [task]}


def test_malformed_formula_exits_2(tmp_path, capsys):
    fn = {"bad": {"vf": ["x"], "terms": [{"generator": {"domain": {
        "cells": [{"var": "x", "center": "0", "depth": 0, "type": 1,
                   "params": {"residue": "a", "presburger": "z"}}],
        "presburger": "z >= & 1"}}}]}}
    code = main(["run", _write(tmp_path, _problem({"command": "integrate", "function": "bad"}, fn))])
    err = capsys.readouterr()
    assert code == 2
    assert "column" in err.out + err.err


def test_broken_json_reports_position(tmp_path, capsys):
    p = tmp_path / "p.json"
    p.write_text('{"format": 1,\n  "tasks": [}')
    assert main(["run", str(p)]) == 2
    assert ":2:" in capsys.readouterr().err


def test_wrong_expectation_exits_1(tmp_path):
    task = {"command": "integrate", "function": "tate", "expect": "1 / (1 - q^-1 * T1)"}
    assert main(["run", _write(tmp_path, _problem(task))]) == 1


def test_json_output(tmp_path, capsys):
    task = {"command": "integrate", "function": "tate"}
    assert main(["run", "--json", _write(tmp_path, _problem(task))]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["format"] == 1
    assert data["results"][0]["ok"]


def test_eval_flag(tmp_path, capsys):
    task = {"command": "integrate", "function": "tate"}
    assert main(["run", "--eval", "T1=1/2", _write(tmp_path, _problem(task))]) == 0
    assert "4/5" in capsys.readouterr().out


def test_prime_flag_overrides_config(tmp_path, capsys):
    task = {"command": "oracle-compare", "function": "tate", "truncation": {"T": {"T1": "1/2"}}}
    assert main(["run", "--prime", "5", _write(tmp_path, _problem(task))]) == 0
    assert "8/9" in capsys.readouterr().out


def test_deterministic_and_threaded_output(capsys):
    path = str(ROOT / "problems" / "tate.json")
    outs = []
    for flags in ([], [], ["--threads", "3"]):
        main(["run", *flags, path])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1] == outs[2]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pmellin", "integrate", str(ROOT / "problems" / "tate.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


@pytest.mark.parametrize("text", ["(1 - q^-1) / (1 - q^-1 * T1)", "3 * q^2 * T1^-1 + 1/2", "q^-1 * T1 * T2",
                                  "1 / (1 - q^-2 * T1)^2"])
def test_value_text_round_trip(text):
    v = parse_mv(text)
    assert parse_mv(format_mv(v)) == v
    assert format_mv(parse_mv(format_mv(v))) == format_mv(v)
