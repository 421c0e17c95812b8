import json
import subprocess
import sys

import pytest

from helpers import fixtures
from vertiplan.adaptive import BoundsTrace
from vertiplan.cli import run
from vertiplan.model import PlanSolution


@pytest.fixture(scope="module")
def inst_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    inst = fixtures("tiny", 1)[0]
    path = d / "inst.json"
    inst.save(path)
    return inst, path


def test_solve_exact_happy_path(inst_file, tmp_path, capsys):
    inst, path = inst_file
    code = run(["--out-dir", str(tmp_path), "solve-exact", str(path), "--eps", "0.01", "--time-limit", "600",
                "--export-lp", "--dump-cuts"])
    assert code == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["ok"] and line["certified"] and line["status"] == "optimal"
    stem = inst.name
    sol = PlanSolution.load(tmp_path / f"{stem}.solution.json")
    assert sol.objective == pytest.approx(line["ub"])
    assert BoundsTrace.read_csv(tmp_path / f"{stem}.trace.csv").records
    assert (tmp_path / f"{stem}.conservative.lp").read_text().startswith("\\ Problem")
    assert json.loads((tmp_path / f"{stem}.cuts.json").read_text())["rows"]


def test_matheuristic_then_report(inst_file, tmp_path):
    inst, path = inst_file
    assert run(["--out-dir", str(tmp_path), "solve-exact", str(path)]) == 0
    assert run(["--out-dir", str(tmp_path), "solve-matheuristic", str(path), "--surrogate", "pmedian"]) == 0
    assert run(["--out-dir", str(tmp_path), "benchmark", str(path), "--q", "1", "2"]) == 0
    traces = sorted(tmp_path.glob("*.csv"))
    rep = tmp_path / "report"
    assert run(["--out-dir", str(rep), "report", *map(str, traces)]) == 0
    bounds_table = (rep / "bounds_table.csv").read_text().splitlines()
    assert bounds_table[0].startswith("group,instances")
    assert {row.split(",")[0] for row in bounds_table[1:]} == {inst.name[: inst.name.rindex("-s")],
                                                         inst.name[: inst.name.rindex("-s")] + "/mh"}
    assert len((rep / "mode_table.csv").read_text().splitlines()) == 1 + 6
    assert (rep / "convergence.png").stat().st_size > 0 and (rep / "cost_lead.png").stat().st_size > 0
    two = json.loads((tmp_path / f"{inst.name}.two_stage.json").read_text())
    assert two["status"] in ("feasible", "infeasible")


def test_simulate_commands(inst_file, tmp_path, capsys):
    inst, path = inst_file
    assert run(["--out-dir", str(tmp_path), "simulate", "--rho", "0.5", "--horizon", "20000"]) == 0
    rep = json.loads((tmp_path / "mm1-rho0.5-s0.json").read_text())
    assert rep["analytic_mean"] == 1.0
    assert run(["--out-dir", str(tmp_path), "solve-exact", str(path)]) == 0
    sol = tmp_path / f"{inst.name}.solution.json"
    assert run(["--out-dir", str(tmp_path), "simulate", "--instance", str(path), "--solution", str(sol),
                "--horizon", "200000"]) == 0
    assert json.loads((tmp_path / f"{inst.name}.queues.json").read_text())["within_fleet"]


@pytest.mark.parametrize("argv", [
    ["solve-exact", "missing.json"],
    ["solve-exact", "x.json", "--bogus"],
    [],
    ["simulate"],
    ["simulate", "--rho", "1.5"],
    ["report", "nothing.csv"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    assert run(["--out-dir", str(tmp_path), *argv]) == 2
    assert capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "points": 8, "candidates": 4, "od": 8, "p": 3, "side": 10.0}))
    assert run(["--config", str(cfg), "--out-dir", str(tmp_path), "generate"]) == 0
    assert capsys.readouterr().out.strip().endswith("gen-8-4-3-s5.json")
    assert run(["--config", str(cfg), "--out-dir", str(tmp_path), "generate", "--seed", "6"]) == 0
    assert capsys.readouterr().out.strip().endswith("gen-8-4-3-s6.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run(["--config", str(bad), "generate"]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("VERTIPLAN_OUT", str(tmp_path / "envout"))
    assert run(["generate", "--seed", "1", "--points", "8", "--candidates", "4", "--od", "8", "--p", "3",
                "--side", "10"]) == 0
    assert (tmp_path / "envout" / "gen-8-4-3-s1.json").is_file()


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "vertiplan.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "solve-exact" in out.stdout
