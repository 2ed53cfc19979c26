import csv
import json
from pathlib import Path

import pytest

from persist_abm.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "table1.cfg"


def _tree(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_twice_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["run", "--config", str(CONFIG), "--seed", "7", "--trace", "--out-dir", str(tmp_path / name)]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    assert set(_tree(tmp_path / "a")) == {"manifest.json", "result.json", "trace.csv"}
    line = capsys.readouterr().out.splitlines()[0]
    pairs = dict(kv.split("=") for kv in line.split())
    assert pairs["command"] == "run" and pairs["seed"] == "7"


def test_sweep_goal_rows(tmp_path, capsys):
    assert main(["sweep", "--config", str(CONFIG), "--factor", "goal", "--seed", "7", "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "sweep_goal.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 * 6
    assert sorted({float(r["level"]) for r in rows}) == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    per_level = {(r["metric"], r["year"]) for r in rows}
    assert per_level == {("persisted", str(y)) for y in range(1, 5)} | {("graduates", ""), ("quitters", "")}
    assert all(r["reps"] == "10" for r in rows)
    manifest = json.loads((tmp_path / "sweep_goal.manifest.json").read_text())
    assert manifest["master_seed"] == 7
    assert manifest["spec"]["repetitions"] == 10


def test_sweep_bogus_factor(tmp_path, capsys):
    assert main(["sweep", "--factor", "bogus", "--seed", "7", "--out-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    for name in ("goal", "social_skill", "academic_experience", "social_integration"):
        assert name in err


@pytest.mark.parametrize(
    "argv",
    [["frobnicate"], ["run", "--seed", "1", "--bogus"], ["run"], ["sweep", "--factor", "goal"], []],
)
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--seed", "1", "--out-dir", str(tmp_path)]) == 2


def test_invalid_config_value(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[simulation]\nfrac_teachers = 1.5\n")
    assert main(["run", "--config", str(cfg), "--seed", "1", "--out-dir", str(tmp_path)]) == 1


def test_sensitivity_and_plot(tmp_path, capsys):
    assert main(["sensitivity", "--factor", "academic", "--center", "1.0", "--reps", "4", "--seed", "3",
                 "--out-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "sensitivity_academic_experience.manifest.json").read_text())
    assert manifest["clamped"] is True
    out = tmp_path / "box.svg"
    assert main(["plot", "--kind", "sensitivity", "--in", str(tmp_path / "sensitivity_academic_experience.csv"),
                 "--out", str(out)]) == 0
    assert out.read_text().startswith("<?xml")


def test_calibrate_command(tmp_path, capsys):
    assert main(["calibrate", "--config", str(CONFIG), "--out-dir", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "calibration.json").read_text())
    assert result["hazards"] == [0.95, 0.6, 0.35, 0.25]
    assert "hazards=0.95,0.6,0.35,0.25" in capsys.readouterr().out


def test_search_command_jobs_invariant(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("[simulation]\nnum_agents = 40\n[search]\nnum_searches = 2\nmax_evaluations = 20\n"
                   "fitness_replicates = 2\n")
    for jobs in ("1", "2"):
        assert main(["search", "--config", str(cfg), "--seed", "5", "--jobs", jobs, "--objective", "min-quitters",
                     "--out-dir", str(tmp_path / jobs)]) == 0
    assert _tree(tmp_path / "1") == _tree(tmp_path / "2")
    traj = tmp_path / "1" / "search_min-quitters_trajectory.csv"
    header = traj.read_text().splitlines()[0]
    assert header == "search_id,evaluation,goal,academic,skill,integration,fitness,best_so_far"
    assert main(["plot", "--kind", "trajectory", "--in", str(traj), "--out", str(tmp_path / "t.svg")]) == 0
