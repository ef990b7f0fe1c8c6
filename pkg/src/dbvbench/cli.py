"""Command-line interface.

Subcommands: ``run``, ``sweep``, ``stages``, ``freq``, ``ert`` and ``export``.
Exit codes: 0 on completion, 2 on configuration errors, 3 on I/O errors.
Diagnostics go to stderr; tables and per-run lines go to stdout.
"""
from __future__ import annotations

import argparse
import sys
from collections import defaultdict

from .ga import ConfigError, GAParams
from .metrics import RunSet, ert, format_ert, success_rate
from .problems import ProblemVersion
from .runner import (DEFAULT_SEED, PARAM_FIELDS, ExperimentConfig, export_ioh, export_sweep_table,
                     freq_label, load_runs, run_experiment, run_freq_sweep,
                     run_stage_experiment, stage_summary)

EXIT_CONFIG = 2
EXIT_IO = 3

_DEFAULTS = GAParams()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_ga_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chi", type=float, default=_DEFAULTS.chi, help="mutation factor; rate is chi/N")
    p.add_argument("--lambda", dest="lam", type=int, default=_DEFAULTS.lam, help="offspring per generation")
    p.add_argument("--mu", type=int, default=_DEFAULTS.mu, help="number of parents")
    p.add_argument("--selection", choices=["plus", "comma"], default=_DEFAULTS.selection)
    p.add_argument("--p-c", dest="p_c", type=float, default=_DEFAULTS.p_c, help="crossover rate")
    p.add_argument("--update-freq", "--d", dest="update_freq", type=int, default=_DEFAULTS.update_freq,
                   help="generations between environment updates (0 = static)")
    p.add_argument("--n-min", dest="n_min", type=int, default=_DEFAULTS.n_min, help="minimum bits flipped")
    p.add_argument("--mutate-after-crossover", action=argparse.BooleanOptionalAction,
                   default=_DEFAULTS.mutate_after_crossover)
    p.add_argument("--keep-stale-fitness", action=argparse.BooleanOptionalAction,
                   default=_DEFAULTS.keep_stale_fitness)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbvbench", description="Dynamic BinVal benchmarking with a parameterized GA.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="repeated runs of one configuration")
    run.add_argument("--version", default="rank", help="rank, uniform, powersoftwo or pareto")
    run.add_argument("--n", type=int, default=1000, help="dimension N")
    run.add_argument("--instance", type=int, default=1)
    run.add_argument("--budget", type=int, default=None, help="evaluation budget (default 1000*N)")
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    run.add_argument("--out", default="dbvbench-output", help="output directory")
    run.add_argument("--jobs", type=int, default=1)
    _add_ga_flags(run)

    for name, help_text in [("sweep", "grid experiment from a JSON config"),
                            ("stages", "seeded-start stage experiment"),
                            ("freq", "update-frequency sweep")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--jobs", type=int, default=1)

    e = sub.add_parser("ert", help="ERT and success rate per configuration from stored runs")
    e.add_argument("--data", required=True, help="experiment output directory")
    e.add_argument("--phi", type=float, default=1.0, help="target fraction of correct bits")

    x = sub.add_parser("export", help="re-export stored runs")
    x.add_argument("--data", required=True)
    x.add_argument("--ioh", default=None, help="write an IOHanalyzer folder here")
    x.add_argument("--table", default=None, help="write the flat sweep table here")
    return parser


def _mean(values):
    values = list(values)
    return sum(values) / len(values) if values else float("nan")


def _cmd_run(args) -> int:
    params = GAParams(args.chi, args.lam, args.mu, args.selection, args.p_c,
                      args.update_freq, args.n_min, args.mutate_after_crossover, args.keep_stale_fitness)
    if args.runs < 1:
        raise ConfigError("--runs must be positive")
    if args.n < 1:
        raise ConfigError("--n must be positive")
    version = ProblemVersion.parse(args.version)
    grid = {name: [getattr(params, attr)] for name, attr in PARAM_FIELDS}
    config = ExperimentConfig(versions=[version.value], n=args.n, instances=[args.instance],
                              repetitions=args.runs, budget=args.budget, master_seed=args.seed,
                              grid=grid, output_dir=args.out)
    for rec in run_experiment(config, jobs=args.jobs):
        r = rec.result
        print(f"run {rec.run_index}: success={str(r.success).lower()} "
              f"evals_to_optimum={r.evals_to_optimum if r.evals_to_optimum is not None else 'NA'} "
              f"final_fraction={r.final_fraction:.6f}")
    return 0


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    if args.out is not None:
        config.output_dir = args.out
    return config


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    config.mode = "standard"
    cells = defaultdict(list)
    for rec in run_experiment(config, jobs=args.jobs):
        cells[rec.cell_id].append(rec)
    for cell_id, recs in cells.items():
        p = recs[0].params
        print(f"cell {cell_id}: version={recs[0].version.label} chi={p.chi:g} lambda={p.lam} mu={p.mu} "
              f"selection={p.selection} p_c={p.p_c:g} d={p.update_freq} n_min={p.n_min} "
              f"mac={str(p.mutate_after_crossover).lower()} runs={len(recs)} "
              f"success_rate={_mean(r.result.success for r in recs):.3f} "
              f"fraction_at_100n={_mean(r.fraction_at_100n for r in recs):.6f} "
              f"fraction_at_budget={_mean(r.fraction_at_budget for r in recs):.6f}")
    return 0


def _cmd_stages(args) -> int:
    config = _load_config(args)
    config.mode = "stages"
    table = run_stage_experiment(config, jobs=args.jobs)
    for row in stage_summary(table, config.effective_budget):
        mean = "NA" if row["mean_evals"] is None else f"{row['mean_evals']:.1f}"
        print(f"cell {row['cell']}: start={row['start_fraction']:.2f} runs={row['runs']} "
              f"successes={row['successes']} mean_evals={mean} ert={row['ert']}")
    return 0


def _cmd_freq(args) -> int:
    config = _load_config(args)
    for row in run_freq_sweep(config, jobs=args.jobs):
        mean = "NA" if row["mean_evals_to_optimum"] is None else f"{row['mean_evals_to_optimum']:.1f}"
        print(f"cell {row['cell']}: d={row['d']} mu={row['mu']} chi={row['chi']:g} "
              f"success_rate={row['success_rate']:.3f} mean_evals={mean} ert={format_ert(row['ert'])}")
    return 0


def _cmd_ert(args) -> int:
    records = load_runs(args.data)
    if not records:
        print(f"error: no runs found under {args.data}", file=sys.stderr)
        return EXIT_IO
    cells = defaultdict(list)
    for rec in records:
        cells[(rec.cell_id, rec.start_fraction)].append(rec)
    print("cell,version,d,runs,phi,success_rate,ert")
    for (cell_id, _), recs in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0)):
        rs = RunSet.from_results([r.result for r in recs], recs[0].budget)
        print(f"{cell_id},{recs[0].version.label},{freq_label(recs[0].params.update_freq)},{len(recs)},"
              f"{args.phi:g},{success_rate(rs, args.phi):.3f},{format_ert(ert(rs, args.phi))}")
    return 0


def _cmd_export(args) -> int:
    records = load_runs(args.data)
    if not records:
        print(f"error: no runs found under {args.data}", file=sys.stderr)
        return EXIT_IO
    if args.ioh is None and args.table is None:
        raise ConfigError("export needs --ioh and/or --table")
    if args.ioh:
        for path in export_ioh(records, args.ioh):
            print(path)
    if args.table:
        print(export_sweep_table(records, args.table))
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "stages": _cmd_stages, "freq": _cmd_freq,
            "ert": _cmd_ert, "export": _cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
