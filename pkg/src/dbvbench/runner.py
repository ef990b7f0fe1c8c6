"""Experiment orchestration and file output.

An experiment expands a parameter grid into cells, runs every
cell x instance x repetition with seeds derived from the master seed and the
run's ordinal, and writes:

``runs/run_<ordinal>.csv``
    Improvement-only trajectory, header
    ``evaluations,best_fraction_correct,generation``, plus one final row.
``runs/run_<ordinal>.json``
    Run metadata: parameters, problem descriptor, seeds, outcome and the
    checkpoint fractions at ``100 * N`` evaluations and at the budget.
``summary.csv``
    One row per run (see ``SUMMARY_COLUMNS``).

Stage and frequency experiments add ``stages.csv``/``stage_summary.csv`` and
``freq.csv``. Files are written by a single collector in ordinal order, so
the bytes on disk do not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .core import SeedSpec, StreamTag, derive_seed, make_rng
from .ga import ConfigError, GAParams, RunResult, run_ga
from .metrics import RunSet, ert, format_ert, success_rate
from .problems import ProblemVersion, make_problem

DEFAULT_SEED = 20240917
DEFAULT_START_FRACTIONS = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
DEFAULT_FREQS = [1, 2, 5, 10, 20, 50, 100, 200, 500, 0]
MODES = ("standard", "stages", "freq_sweep")

# Canonical parameter order; JSON/CSV names on the left, GAParams attributes on the right.
PARAM_FIELDS = [
    ("chi", "chi"),
    ("lambda", "lam"),
    ("mu", "mu"),
    ("selection", "selection"),
    ("p_c", "p_c"),
    ("update_freq", "update_freq"),
    ("n_min", "n_min"),
    ("mutate_after_crossover", "mutate_after_crossover"),
    ("keep_stale_fitness", "keep_stale_fitness"),
]
SUMMARY_COLUMNS = [name for name, _ in PARAM_FIELDS] + [
    "version", "instance", "dimension", "cell", "run", "ordinal", "budget",
    "success", "evals_to_optimum", "evals_used", "fraction_at_100n", "fraction_at_budget",
]
TRAJECTORY_HEADER = "evaluations,best_fraction_correct,generation"

_num = {"type": "number"}
_int = {"type": "integer"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "versions": {"type": "array", "minItems": 1,
                     "items": {"type": "string"}},
        "n": {"type": "integer", "minimum": 1},
        "instances": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "repetitions": {"type": "integer", "minimum": 1},
        "budget": {"type": ["integer", "null"], "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": list(MODES)},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "chi": {"type": "array", "minItems": 1, "items": {**_num, "minimum": 0}},
                "lambda": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 1}},
                "mu": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 1}},
                "selection": {"type": "array", "minItems": 1, "items": {"enum": ["plus", "comma"]}},
                "p_c": {"type": "array", "minItems": 1, "items": {**_num, "minimum": 0, "maximum": 1}},
                "update_freq": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 0}},
                "n_min": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 0}},
                "mutate_after_crossover": {"type": "array", "minItems": 1, "items": {"type": "boolean"}},
                "keep_stale_fitness": {"type": "array", "minItems": 1, "items": {"type": "boolean"}},
            },
        },
        "start_fractions": {"type": "array", "minItems": 1,
                            "items": {**_num, "minimum": 0, "exclusiveMaximum": 1}},
        "improvement": {**_num, "exclusiveMinimum": 0},
        "output_dir": {"type": ["string", "null"]},
    },
}


@dataclass
class ExperimentConfig:
    versions: list[str] = field(default_factory=lambda: ["rank"])
    n: int = 1000
    instances: list[int] = field(default_factory=lambda: [1])
    repetitions: int = 1
    budget: int | None = None
    master_seed: int = DEFAULT_SEED
    mode: str = "standard"
    grid: dict = field(default_factory=dict)
    start_fractions: list[float] = field(default_factory=lambda: list(DEFAULT_START_FRACTIONS))
    improvement: float = 0.05
    output_dir: str | None = None

    @property
    def effective_budget(self) -> int:
        return self.budget if self.budget is not None else 1000 * self.n

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"{exc.json_path}: {exc.message}") from None
        for i, v in enumerate(data.get("versions", [])):
            try:
                ProblemVersion.parse(v)
            except ValueError as exc:
                raise ConfigError(f"$.versions[{i}]: {exc}") from None
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"$: malformed JSON ({exc})") from None
        return cls.from_dict(data)

    def grid_values(self, name: str) -> list:
        if name in self.grid:
            values = list(self.grid[name])
            if not values:
                raise ConfigError(f"$.grid.{name}: empty grid dimension")
            return values
        if name == "update_freq" and self.mode == "freq_sweep":
            return list(DEFAULT_FREQS)
        attr = dict(PARAM_FIELDS)[name]
        return [getattr(GAParams(), attr)]


@dataclass(frozen=True)
class Cell:
    cell_id: int
    params: GAParams
    version: ProblemVersion
    instance: int


def expand_grid(config: ExperimentConfig) -> list[Cell]:
    """Cartesian product in canonical parameter order, then version, then instance (innermost)."""
    axes = [config.grid_values(name) for name, _ in PARAM_FIELDS]
    if not config.versions:
        raise ConfigError("$.versions: empty grid dimension")
    if not config.instances:
        raise ConfigError("$.instances: empty grid dimension")
    cells = []
    cell_id = 0
    for combo in itertools.product(*axes):
        kwargs = {attr: value for (_, attr), value in zip(PARAM_FIELDS, combo)}
        kwargs["chi"] = float(kwargs["chi"])
        kwargs["p_c"] = float(kwargs["p_c"])
        try:
            params = GAParams(**kwargs)
            params.check_dimension(config.n)
        except ConfigError as exc:
            raise ConfigError(f"grid cell {kwargs}: {exc}") from None
        for version in config.versions:
            version = ProblemVersion.parse(version)
            if params.keep_stale_fitness and version is ProblemVersion.RANK:
                raise ConfigError("grid cell with keep_stale_fitness=true cannot use the Rank version")
            for instance in config.instances:
                cells.append(Cell(cell_id, params, version, instance))
            cell_id += 1
    return cells


@dataclass
class RunRecord:
    cell_id: int
    version: ProblemVersion
    instance: int
    run_index: int
    ordinal: int
    params: GAParams
    n: int
    budget: int
    seeds: dict
    result: RunResult
    problem: dict = field(default_factory=dict)
    start_fraction: float | None = None

    @property
    def fraction_at_100n(self) -> float:
        return self.result.fraction_at(min(100 * self.n, self.budget))

    @property
    def fraction_at_budget(self) -> float:
        return self.result.fraction_at(self.budget)


@dataclass(frozen=True)
class _Task:
    cell: Cell
    run_index: int
    ordinal: int
    n: int
    budget: int
    master_seed: int
    start_fraction: float | None = None
    improvement: float = 0.05


def stage_distance(n: int, start_fraction: float) -> int:
    return math.floor((1.0 - start_fraction) * n + 0.5)


def execute(task: _Task) -> RunRecord:
    """Run a single task; pure function of the task (used by worker processes)."""
    cell = task.cell
    seeds = {
        "master": task.master_seed,
        "ordinal": task.ordinal,
        **{tag.name.lower(): derive_seed(SeedSpec(task.master_seed, task.ordinal, tag))
           for tag in (StreamTag.ENVIRONMENT, StreamTag.PROBLEM_INIT, StreamTag.MUTATION, StreamTag.CROSSOVER)},
    }
    problem = make_problem(cell.version, task.n, cell.instance,
                           SeedSpec(task.master_seed, task.ordinal, StreamTag.ENVIRONMENT))
    if task.start_fraction is None:
        init, target = "random", 1.0
    else:
        init = ("at_distance", stage_distance(task.n, task.start_fraction))
        target = task.start_fraction + task.improvement
    result = run_ga(problem, cell.params, task.budget, init=init,
                    rng=make_rng(seeds["mutation"]), crossover_rng=make_rng(seeds["crossover"]),
                    init_rng=make_rng(seeds["problem_init"]), target_fraction=target)
    return RunRecord(cell.cell_id, cell.version, cell.instance, task.run_index, task.ordinal,
                     cell.params, task.n, task.budget, seeds, result, problem.descriptor(),
                     task.start_fraction)


def _tasks(config: ExperimentConfig, cells: list[Cell], start_fractions=(None,)) -> list[_Task]:
    tasks = []
    ordinal = 0
    for cell in cells:
        for phi0 in start_fractions:
            for rep in range(config.repetitions):
                tasks.append(_Task(cell, rep, ordinal, config.n, config.effective_budget,
                                   config.master_seed, phi0, config.improvement))
                ordinal += 1
    return tasks


def _run_tasks(tasks: list[_Task], jobs: int) -> list[RunRecord]:
    if jobs <= 1 or len(tasks) <= 1:
        return [execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# ---------------------------------------------------------------- file output

def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _prepare_output(directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return out


def trajectory_csv(result: RunResult) -> str:
    lines = [TRAJECTORY_HEADER]
    for (evals, frac), gen in zip(result.trajectory, result.trajectory_generations):
        lines.append(f"{evals},{frac:.6f},{gen}")
    lines.append(f"{result.evals_used},{result.final_fraction:.6f},{result.generations}")
    return "\n".join(lines) + "\n"


def run_metadata(record: RunRecord) -> dict:
    r = record.result
    return {
        "cell": record.cell_id,
        "run": record.run_index,
        "ordinal": record.ordinal,
        "version": record.version.label,
        "N": record.n,
        "instance": record.instance,
        "budget": record.budget,
        "params": {name: getattr(record.params, attr) for name, attr in PARAM_FIELDS},
        "seeds": record.seeds,
        "problem": record.problem,
        "start_fraction": record.start_fraction,
        "target_fraction": r.target_fraction,
        "success": r.success,
        "evals_to_target": r.evals_to_target,
        "evals_to_optimum": r.evals_to_optimum,
        "evals_used": r.evals_used,
        "generations": r.generations,
        "final_population_best_fraction": r.final_population_best_fraction,
        "fraction_at_100n": record.fraction_at_100n,
        "fraction_at_budget": record.fraction_at_budget,
    }


def write_run(out: Path, record: RunRecord) -> None:
    """Trajectory first, metadata last: a run counts as written once its JSON exists."""
    stem = out / "runs" / f"run_{record.ordinal:06d}"
    _atomic_write(stem.with_suffix(".csv"), trajectory_csv(record.result))
    _atomic_write(stem.with_suffix(".json"), json.dumps(run_metadata(record), indent=1, sort_keys=True) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_rows(records) -> list[list[str]]:
    rows = []
    for rec in records:
        r = rec.result
        rows.append([_fmt(getattr(rec.params, attr)) for _, attr in PARAM_FIELDS] + [
            rec.version.label, _fmt(rec.instance), _fmt(rec.n), _fmt(rec.cell_id),
            _fmt(rec.run_index), _fmt(rec.ordinal), _fmt(rec.budget), _fmt(r.success),
            _fmt(r.evals_to_optimum), _fmt(r.evals_used),
            _fmt(float(rec.fraction_at_100n)), _fmt(float(rec.fraction_at_budget)),
        ])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def export_sweep_table(records, path) -> Path:
    """Flat per-run table for external analysis (e.g. SHAP); columns ``SUMMARY_COLUMNS``."""
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    path = Path(path)
    _atomic_write(path, _csv_text(SUMMARY_COLUMNS, summary_rows(records)))
    return path


def read_sweep_table(path) -> list[dict]:
    """Parse a table written by ``export_sweep_table`` back into typed values."""
    ints = {"lambda", "mu", "update_freq", "n_min", "instance", "dimension", "cell", "run",
            "ordinal", "budget", "evals_used", "evals_to_optimum"}
    floats = {"chi", "p_c", "fraction_at_100n", "fraction_at_budget"}
    bools = {"mutate_after_crossover", "keep_stale_fitness", "success"}
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, value in raw.items():
                if value == "":
                    row[key] = None
                elif key in ints:
                    row[key] = int(value)
                elif key in floats:
                    row[key] = float(value)
                elif key in bools:
                    row[key] = value == "true"
                else:
                    row[key] = value
            rows.append(row)
    return rows


def load_runs(directory) -> list[RunRecord]:
    """Rebuild run records from the ``runs/`` folder of an experiment directory."""
    runs_dir = Path(directory) / "runs"
    if not runs_dir.is_dir():
        raise FileNotFoundError(f"no runs/ folder under {directory}")
    records = []
    for meta_path in sorted(runs_dir.glob("run_*.json")):
        meta = json.loads(meta_path.read_text())
        n = meta["N"]
        traj, gens = [], []
        with open(meta_path.with_suffix(".csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows[:-1]:
            frac = round(float(row["best_fraction_correct"]) * n) / n
            traj.append((int(row["evaluations"]), frac))
            gens.append(int(row["generation"]))
        result = RunResult(
            success=meta["success"], evals_to_target=meta["evals_to_target"],
            evals_used=meta["evals_used"], generations=meta["generations"],
            trajectory=traj, trajectory_generations=gens,
            final_population_best_fraction=meta["final_population_best_fraction"],
            target_fraction=meta["target_fraction"], n=n,
        )
        params = GAParams(**{attr: meta["params"][name] for name, attr in PARAM_FIELDS})
        records.append(RunRecord(meta["cell"], ProblemVersion.parse(meta["version"]), meta["instance"],
                                 meta["run"], meta["ordinal"], params, n, meta["budget"],
                                 meta["seeds"], result, meta["problem"], meta["start_fraction"]))
    return records


def _write_experiment(out: Path, records: list[RunRecord]) -> None:
    for rec in records:
        write_run(out, rec)
    export_sweep_table(records, out / "summary.csv")
    on_disk = summary_rows(load_runs(out))
    if on_disk != summary_rows(records):
        raise RuntimeError("summary recomputed from run files differs from the in-memory summary")


# ---------------------------------------------------------------- experiments

def run_experiment(config: ExperimentConfig, jobs: int = 1, cells: list[Cell] | None = None,
                   start_fractions=(None,)) -> list[RunRecord]:
    """Run every cell x instance x repetition; write files if ``output_dir`` is set."""
    out = _prepare_output(config.output_dir) if config.output_dir else None
    cells = expand_grid(config) if cells is None else cells
    records = _run_tasks(_tasks(config, cells, start_fractions), jobs)
    if out is not None:
        _write_experiment(out, records)
    return records


STAGE_COLUMNS = ["cell", "start_fraction", "instance", "run", "evals", "success"]
STAGE_SUMMARY_COLUMNS = ["cell", "start_fraction", "runs", "successes", "mean_evals", "ert"]


def run_stage_experiment(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Seeded-start runs: from each start fraction, time to gain ``improvement``.

    Every parent starts at Hamming distance ``round((1 - phi0) * N)`` from
    the optimum; a run succeeds once its best fraction reaches
    ``phi0 + improvement``. Returns the per-run stage table.
    """
    for i, phi0 in enumerate(config.start_fractions):
        if not 0 <= phi0 < 1:
            raise ConfigError(f"$.start_fractions[{i}]: must lie in [0, 1)")
        if phi0 + config.improvement > 1 + 1e-9:
            raise ConfigError(f"$.start_fractions[{i}]: {phi0} + {config.improvement} exceeds 1")
    records = run_experiment(config, jobs, start_fractions=list(config.start_fractions))
    table = [{
        "cell": rec.cell_id,
        "start_fraction": rec.start_fraction,
        "instance": rec.instance,
        "run": rec.run_index,
        "evals": rec.result.evals_to_target if rec.result.success else rec.result.evals_used,
        "success": rec.result.success,
    } for rec in records]
    if config.output_dir:
        out = Path(config.output_dir)
        _atomic_write(out / "stages.csv", _csv_text(
            STAGE_COLUMNS, [[_fmt(row[c]) for c in STAGE_COLUMNS] for row in table]))
        _atomic_write(out / "stage_summary.csv", _csv_text(
            STAGE_SUMMARY_COLUMNS,
            [[_fmt(row[c]) for c in STAGE_SUMMARY_COLUMNS] for row in stage_summary(table, config.effective_budget)]))
    return table


def stage_summary(table: list[dict], budget: int) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in table:
        groups.setdefault((row["cell"], row["start_fraction"]), []).append(row)
    out = []
    for (cell, phi0), rows in groups.items():
        hits = [r["evals"] for r in rows if r["success"]]
        total = sum(r["evals"] if r["success"] else budget for r in rows)
        out.append({
            "cell": cell, "start_fraction": phi0, "runs": len(rows), "successes": len(hits),
            "mean_evals": sum(hits) / len(hits) if hits else None,
            "ert": format_ert(total / len(hits) if hits else math.inf),
        })
    return out


FREQ_COLUMNS = ["cell", "version", "chi", "lambda", "mu", "selection", "p_c", "n_min",
                "mutate_after_crossover", "d", "runs", "success_rate", "mean_evals_to_optimum", "ert"]


def freq_label(d: int) -> str:
    return "static" if d == 0 else str(d)


def run_freq_sweep(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Standard runs for each update frequency; one table row per cell (i.e. per d)."""
    config = replace(config, mode="freq_sweep")
    records = run_experiment(config, jobs)
    groups: dict[int, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault(rec.cell_id, []).append(rec)
    table = []
    for cell_id, recs in groups.items():
        p = recs[0].params
        rs = RunSet.from_results([r.result for r in recs], config.effective_budget)
        hits = [r.result.evals_to_optimum for r in recs if r.result.evals_to_optimum is not None]
        table.append({
            "cell": cell_id, "version": recs[0].version.label, "chi": p.chi, "lambda": p.lam,
            "mu": p.mu, "selection": p.selection, "p_c": p.p_c, "n_min": p.n_min,
            "mutate_after_crossover": p.mutate_after_crossover, "d": freq_label(p.update_freq),
            "runs": len(recs), "success_rate": success_rate(rs, 1.0),
            "mean_evals_to_optimum": sum(hits) / len(hits) if hits else None,
            "ert": ert(rs, 1.0),
        })
    if config.output_dir:
        rows = [[_fmt(row[c]) if c != "ert" else format_ert(row[c]) for c in FREQ_COLUMNS] for row in table]
        _atomic_write(Path(config.output_dir) / "freq.csv", _csv_text(FREQ_COLUMNS, rows))
    return table


# ---------------------------------------------------------------- IOHanalyzer export

def _fid(version: ProblemVersion) -> int:
    return version.code + 1


def export_ioh(records, directory) -> list[Path]:
    """Write an IOHanalyzer-readable folder per cell.

    Layout, for cell ``c`` and version ``V`` with function id ``f``::

        <directory>/cell_<c>/IOHprofiler_f<f>_DBV<V>.info
        <directory>/cell_<c>/data_f<f>_DBV<V>/IOHprofiler_f<f>_DIM<N>.dat

    Each ``.dat`` block starts with a quoted header line and lists
    ``evaluations raw_y best_so_far_y`` on every improvement plus a final row,
    where y is the fraction of correct bits.
    """
    records = sorted(records, key=lambda r: r.ordinal)
    if not records:
        raise ValueError("no records to export")
    root = Path(directory)
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.cell_id, rec.version, rec.n), []).append(rec)
    written = []
    for (cell_id, version, n), recs in groups.items():
        name = f"DBV{version.label}"
        fid = _fid(version)
        folder = root / f"cell_{cell_id}"
        data_dir = folder / f"data_f{fid}_{name}"
        data_dir.mkdir(parents=True, exist_ok=True)
        dat_rel = f"data_f{fid}_{name}/IOHprofiler_f{fid}_DIM{n}.dat"
        blocks = []
        entries = []
        for rec in recs:
            r = rec.result
            lines = ['"function evaluation" "current f(x)" "best-so-far f(x)"']
            for evals, frac in r.trajectory:
                lines.append(f"{evals} {frac:.6f} {frac:.6f}")
            lines.append(f"{r.evals_used} {r.final_population_best_fraction:.6f} {r.final_fraction:.6f}")
            blocks.append("\n".join(lines))
            entries.append(f"{rec.instance}:{r.evals_used}|{r.final_fraction:.6f}")
        p = recs[0].params
        alg_info = " ".join(f"{k}={_fmt(getattr(p, a))}" for k, a in PARAM_FIELDS)
        info = (f"suite = 'DBV', funcId = {fid}, funcName = '{name}', DIM = {n}, "
                f"maximization = 'T', algId = 'GA_cell{cell_id}', algInfo = '{alg_info}'\n"
                f"%\n{dat_rel}, " + ", ".join(entries) + "\n")
        info_path = folder / f"IOHprofiler_f{fid}_{name}.info"
        _atomic_write(data_dir / f"IOHprofiler_f{fid}_DIM{n}.dat", "\n".join(blocks) + "\n")
        _atomic_write(info_path, info)
        written.append(info_path)
    return written
