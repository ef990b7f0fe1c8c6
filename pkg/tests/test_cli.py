import json
import subprocess
import sys

import pytest

from dbvbench.cli import build_parser, main
from dbvbench.ga import GAParams, RunResult
from dbvbench.problems import ProblemVersion
from dbvbench.runner import RunRecord, _prepare_output, write_run

# Default column of the parameter table, written out independently of GAParams.
TABLE_DEFAULTS = {"chi": 1.0, "lam": 1, "mu": 1, "selection": "plus", "p_c": 0.0, "update_freq": 1,
                  "n_min": 0, "mutate_after_crossover": True, "keep_stale_fitness": False}


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_config(tmp_path, **data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_golden_defaults():
    args = build_parser().parse_args(["run"])
    assert {k: getattr(args, k) for k in TABLE_DEFAULTS} == TABLE_DEFAULTS
    assert GAParams(**{k: getattr(args, k) for k in TABLE_DEFAULTS}) == GAParams()
    assert args.seed == 20240917


def test_run_writes_files(tmp_path, capsys):
    code, out, err = run_cli(capsys, "run", "--version", "rank", "--n", 30, "--chi", 1, "--budget", 30000,
                             "--runs", 25, "--out", tmp_path)
    assert code == 0 and err == ""
    lines = out.splitlines()
    assert len(lines) == 25
    assert all("success=" in l and "evals_to_optimum=" in l and "final_fraction=" in l for l in lines)
    assert len(list((tmp_path / "runs").glob("*.json"))) == 25
    meta = json.loads((tmp_path / "runs" / "run_000000.json").read_text())
    assert meta["params"]["mu"] == 1 and meta["params"]["selection"] == "plus"


def test_run_exit_zero_on_failed_runs(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", "--n", 50, "--chi", 0, "--budget", 100, "--out", tmp_path)
    assert code == 0 and "success=false" in out


def test_run_negative_chi(capsys):
    code, out, err = run_cli(capsys, "run", "--chi", -1)
    assert code == 2 and out == "" and "chi" in err


def test_run_comma_constraint(capsys):
    code, out, err = run_cli(capsys, "run", "--selection", "comma", "--mu", 4, "--lambda", 2)
    assert code == 2 and out == "" and "lambda >= mu" in err


def test_bad_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--selection", "best"])
    assert exc.value.code == 2
    assert capsys.readouterr().out == ""


def test_run_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, out, err = run_cli(capsys, "run", "--n", 10, "--out", blocker / "x")
    assert code == 3 and out == "" and err


def test_run_jobs_do_not_change_bytes(tmp_path, capsys):
    for jobs, name in [(1, "a"), (2, "b")]:
        run_cli(capsys, "run", "--n", 20, "--runs", 4, "--chi", 2, "--out", tmp_path / name, "--jobs", jobs)
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_sweep_one_line_per_cell(tmp_path, capsys):
    chis = [round(0.1 * i, 1) for i in range(61)]
    path = write_config(tmp_path, n=10, budget=20, grid={"chi": chis, "n_min": [0, 1]})
    code, out, _ = run_cli(capsys, "sweep", "--config", path, "--out", tmp_path / "out")
    assert code == 0
    assert len(out.splitlines()) == 122
    assert (tmp_path / "out" / "summary.csv").exists()


def test_stages_rows(tmp_path, capsys):
    fracs = [round(0.5 + 0.05 * i, 2) for i in range(10)]
    path = write_config(tmp_path, n=40, budget=4000, start_fractions=fracs)
    code, out, _ = run_cli(capsys, "stages", "--config", path, "--out", tmp_path / "out")
    assert code == 0 and len(out.splitlines()) == 10
    assert len((tmp_path / "out" / "stage_summary.csv").read_text().splitlines()) == 11


def test_freq_static_label(tmp_path, capsys):
    path = write_config(tmp_path, n=15, budget=1500, grid={"update_freq": [1, 10, 0]})
    code, out, _ = run_cli(capsys, "freq", "--config", path, "--out", tmp_path / "out")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3 and "d=static" in lines[2]
    assert ",static," in (tmp_path / "out" / "freq.csv").read_text()


def test_malformed_config(tmp_path, capsys):
    path = write_config(tmp_path, grid={"mu": [0]})
    code, out, err = run_cli(capsys, "sweep", "--config", path)
    assert code == 2 and out == "" and "$.grid.mu[0]" in err


def test_missing_config(tmp_path, capsys):
    code, out, err = run_cli(capsys, "sweep", "--config", tmp_path / "nope.json")
    assert code == 3 and out == "" and err


def _fake_runs(directory, outcomes, budget=1000):
    """Write hand-made runs: each outcome is evals-to-optimum or None (failure)."""
    out = _prepare_output(directory)
    for i, hit in enumerate(outcomes):
        if hit is None:
            traj, used = [(1, 0.5), (budget // 2, 0.9)], budget
        else:
            traj, used = [(1, 0.5), (hit, 1.0)], hit
        result = RunResult(hit is not None, hit, used, 10, traj, [1, 5], traj[-1][1], n=10)
        write_run(out, RunRecord(0, ProblemVersion.UNIFORM, 1, i, i, GAParams(), 10, budget, {}, result))


def test_ert_all_success(tmp_path, capsys):
    _fake_runs(tmp_path, [100, 300])
    code, out, _ = run_cli(capsys, "ert", "--data", tmp_path, "--phi", 1.0)
    assert code == 0
    assert out.splitlines()[1].split(",")[-2:] == ["1.000", "200.0"]


def test_ert_all_failure(tmp_path, capsys):
    _fake_runs(tmp_path, [None, None])
    code, out, _ = run_cli(capsys, "ert", "--data", tmp_path, "--phi", 1.0)
    assert code == 0 and out.splitlines()[1].endswith(",inf")


def test_ert_mixed_cell(tmp_path, capsys):
    _fake_runs(tmp_path, [100, None])
    code, out, _ = run_cli(capsys, "ert", "--data", tmp_path, "--phi", 1.0)
    assert code == 0 and out.splitlines()[1].split(",")[-2:] == ["0.500", "1100.0"]


def test_ert_no_runs(tmp_path, capsys):
    (tmp_path / "runs").mkdir()
    code, out, err = run_cli(capsys, "ert", "--data", tmp_path)
    assert code != 0 and out == "" and err
    code, out, err = run_cli(capsys, "ert", "--data", tmp_path / "missing")
    assert code != 0 and out == "" and err


def test_export(tmp_path, capsys):
    run_cli(capsys, "run", "--n", 12, "--runs", 2, "--out", tmp_path / "data")
    code, out, _ = run_cli(capsys, "export", "--data", tmp_path / "data", "--ioh", tmp_path / "ioh",
                           "--table", tmp_path / "t.csv")
    assert code == 0
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "data" / "summary.csv").read_bytes()
    assert list((tmp_path / "ioh").rglob("*.info"))
    code, _, err = run_cli(capsys, "export", "--data", tmp_path / "data")
    assert code == 2 and err


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "dbvbench", "run", "--n", "10", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("run 0:")
