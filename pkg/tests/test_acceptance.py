"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL|WARN`` line (also repeated in
the pytest terminal summary). Experiments use the default master seed and
the compiled backend when available; results are identical on the Python
fallback, only slower.
"""
import math
import statistics
import warnings

import numpy as np
import pytest

from dbvbench.core import SeedSpec, StreamTag, make_rng, random_bitstring, spawn_rng
from dbvbench.ga import GAParams, run_ga
from dbvbench.metrics import RunSet, ert, success_rate
from dbvbench.problems import ProblemVersion, binval_exact, make_problem
from dbvbench.runner import ExperimentConfig, load_runs, run_experiment

REPS = 25

# name -> config of every experiment whose summary CSV is checked for reproducibility
EXPERIMENTS = {
    "c3_rank_chi1": dict(versions=["rank"], n=500, grid={"chi": [1.0]}),
    "c4_rank_chi3": dict(versions=["rank"], n=500, grid={"chi": [3.0]}),
    "c5_rank_chi2": dict(versions=["rank"], n=500, grid={"chi": [2.0], "n_min": [0, 1]}),
    "c6_versions_chi2.5": dict(versions=["rank", "uniform", "pareto"], n=500, grid={"chi": [2.5]}),
    "c7_plus_comma": dict(versions=["rank"], n=200, budget=100 * 200,
                          grid={"mu": [1], "lambda": [4], "selection": ["plus", "comma"]}),
    "c8_static": dict(versions=["rank"], n=500, grid={"chi": [1.0], "update_freq": [0]}),
    "c12_freq_slice": dict(versions=["rank"], n=200, repetitions=15,
                           grid={"mu": [4], "p_c": [0.9], "chi": [1.5], "update_freq": [1, 10, 0]}),
}


def _config(name, out):
    return ExperimentConfig(**{"repetitions": REPS, **EXPERIMENTS[name], "output_dir": str(out)})


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    cache = {}

    def get(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            cache[name] = (run_experiment(_config(name, out)), out)
        return cache[name]
    return get


def _cells(records):
    cells = {}
    for rec in records:
        cells.setdefault(rec.cell_id, []).append(rec)
    return cells


def test_criterion_01_rank_matches_exact_oracle(acceptance):
    mismatches = trials = 0
    rng = make_rng(1)
    for n in (5, 10, 20):
        for trial in range(200):
            p = make_problem("rank", n, 1 + trial % 5, SeedSpec(trial, n, StreamTag.ENVIRONMENT))
            for _ in range(trial % 4):
                p.step()
            size = int(rng.integers(1, 33))
            pop = [random_bitstring(rng, n) for _ in range(size)]
            if trial % 3 == 0:
                pop += [pop[0].copy()]  # include an exact tie
            vals = [binval_exact(p.transform.apply(x), p.env.pi + 1) for x in pop]
            expect = sorted(range(len(pop)), key=lambda i: (-vals[i], i))
            mismatches += p.rank(pop).order.tolist() != expect
            trials += 1
    assert acceptance(1, mismatches == 0, f"rank vs exact BinVal oracle: {mismatches} mismatches in {trials} trials")


def test_criterion_02_monotonicity(acceptance):
    rng = make_rng(2)
    failures, cases = {}, 0
    for version in ProblemVersion:
        failures[version.label] = 0
        for case in range(1000):
            n = int(rng.integers(1, 100))
            p = make_problem(version, n, 1 + case % 10, SeedSpec(case, version.code, StreamTag.ENVIRONMENT))
            for _ in range(int(rng.integers(0, 3))):
                p.step()
            # a string with at least one zero bit in the base function's input
            y = random_bitstring(rng, n)
            y[int(rng.integers(0, n))] = 0
            zero = int(rng.choice(np.flatnonzero(y == 0)))
            x = np.empty(n, np.uint8)
            x[p.transform.var_permutation] = y ^ p.transform.xor_mask
            better = x.copy()
            better[p.transform.var_permutation[zero]] ^= 1
            assert p.transform.apply(better)[zero] == 1
            if p.is_rank:
                r = p.rank([better, x])
                ok = r.level[0] < r.level[1]
            else:
                ok = p.evaluate(better) > p.evaluate(x)
            failures[version.label] += not ok
            cases += 1
    ok = not any(failures.values())
    assert acceptance(2, ok, f"zero-bit flips improve in {cases - sum(failures.values())}/{cases} cases {failures}")


def test_criterion_03_efficient_side(acceptance, experiment):
    recs, _ = experiment("c3_rank_chi1")
    n = 500
    wins = sum(r.result.success for r in recs)
    hits = [r.result.evals_to_optimum for r in recs if r.result.success]
    median = statistics.median(hits) if hits else math.inf
    bound = 30 * n * math.log(n)
    ok = wins == REPS and median <= bound
    assert acceptance(3, ok, f"Rank chi=1 N=500: {wins}/{REPS} successes, median {median:.0f} <= {bound:.0f}")


def test_criterion_04_hard_side(acceptance, experiment):
    recs, _ = experiment("c4_rank_chi3")
    wins = sum(r.result.success for r in recs)
    mean = statistics.mean(r.result.final_fraction for r in recs)
    ok = wins == 0 and mean < 0.85
    assert acceptance(4, ok, f"Rank chi=3 N=500: {wins}/{REPS} successes, mean final fraction {mean:.4f} < 0.85")


def test_criterion_05_nmin_shift(acceptance, experiment):
    recs, _ = experiment("c5_rank_chi2")
    rates = {}
    for recs_c in _cells(recs).values():
        rates[recs_c[0].params.n_min] = sum(r.result.success for r in recs_c) / len(recs_c)
    ok = rates[1] > rates[0]
    assert acceptance(5, ok, f"Rank chi=2 N=500 success rate n_min=1 {rates[1]:.2f} > n_min=0 {rates[0]:.2f}")


def test_criterion_06_version_ordering(acceptance, experiment):
    recs, _ = experiment("c6_versions_chi2.5")
    rate, frac = {}, {}
    for recs_c in _cells(recs).values():
        label = recs_c[0].version.label
        rate[label] = sum(r.result.success for r in recs_c) / len(recs_c)
        frac[label] = statistics.mean(r.result.final_fraction for r in recs_c)
    ok = rate["Uniform"] >= rate["Rank"] + 0.2 and abs(frac["Pareto"] - frac["Rank"]) <= 0.05
    assert acceptance(6, ok, f"chi=2.5 N=500: success Uniform {rate['Uniform']:.2f} vs Rank {rate['Rank']:.2f}; "
                             f"final fraction Pareto {frac['Pareto']:.4f} vs Rank {frac['Rank']:.4f}")


def test_criterion_07_comma_degradation(acceptance, experiment):
    recs, _ = experiment("c7_plus_comma")
    mean = {}
    for recs_c in _cells(recs).values():
        mean[recs_c[0].params.selection] = statistics.mean(r.fraction_at_budget for r in recs_c)
    gap = mean["plus"] - mean["comma"]
    ok = gap >= 0.02
    assert acceptance(7, ok, f"(1,4) vs (1+4) chi=1 N=200 at 100N: plus {mean['plus']:.4f} - comma "
                             f"{mean['comma']:.4f} = {gap:.4f} >= 0.02")


def test_criterion_08_static_collapse(acceptance, experiment):
    recs, _ = experiment("c8_static")
    wins = sum(r.result.success for r in recs)
    ok = wins == REPS
    assert acceptance(8, ok, f"static Rank chi=1 N=500: {wins}/{REPS} successes within 1000N")


@pytest.mark.parametrize("version", ["uniform", "powersoftwo", "pareto"])
def test_criterion_09_evaluation_accounting(acceptance, version):
    p = make_problem(version, 50, 1, SeedSpec(9, 0, StreamTag.ENVIRONMENT))
    params = GAParams(chi=0.0, mu=2, lam=1, update_freq=1)
    r = run_ga(p, params, 2 + 3 * 10, rng=spawn_rng(SeedSpec(9, 0, StreamTag.MUTATION)))
    loop_gens = r.generations - 1
    ok = loop_gens == 10 and p.eval_count == 32
    assert acceptance(9, ok, f"{version} mu=2 lambda=1 d=1: eval_count after {loop_gens} generations = "
                             f"{p.eval_count} (expected 32)")


def test_criterion_10_ert(acceptance, experiment):
    rs = RunSet([[(1, 0.5), (100, 1.0)], [(1, 0.5), (700, 0.9)]], budget=1000)
    hand = ert(rs, 1.0)
    _, out = experiment("c4_rank_chi3")
    stored = load_runs(out)
    runset = RunSet.from_results([r.result for r in stored], stored[0].budget)
    phis = [i / 100 for i in range(50, 101)]
    erts = [ert(runset, phi) for phi in phis]
    rates = [success_rate(runset, phi) for phi in phis]
    monotone = all(a <= b for a, b in zip(erts, erts[1:])) and all(a >= b for a, b in zip(rates, rates[1:]))
    ok = hand == 1100 and monotone
    assert acceptance(10, ok, f"hand-checked ERT = {hand} (expected 1100); ERT monotone in phi over "
                              f"{len(stored)} stored runs: {monotone}")


def test_criterion_11_reproducible_summaries(acceptance, experiment, tmp_path):
    checked, differing = 0, []
    for name in EXPERIMENTS:
        recs, out = experiment(name)
        original = (out / "summary.csv").read_bytes()
        # the rerun also switches to two worker processes; bytes must not change
        again = tmp_path / name
        run_experiment(_config(name, again), jobs=2)
        checked += 1
        if (again / "summary.csv").read_bytes() != original:
            differing.append(name)
    ok = not differing
    assert acceptance(11, ok, f"{checked} experiments rerun (jobs=2) with the same master seed, byte-identical summary.csv: "
                              f"{'all' if ok else 'differ: ' + ', '.join(differing)}")


def test_criterion_12_intermediate_frequency_hardest(acceptance, experiment):
    recs, _ = experiment("c12_freq_slice")
    erts = {}
    for recs_c in _cells(recs).values():
        d = recs_c[0].params.update_freq
        erts[d] = ert(RunSet.from_results([r.result for r in recs_c], recs_c[0].budget), 1.0)
    ok = erts[10] >= erts[1] and erts[10] >= erts[0]
    detail = (f"Rank mu=4 p_c=0.9 chi=1.5 N=200 ERT: d=1 {erts[1]:.0f}, d=10 {erts[10]:.0f}, "
              f"static {erts[0]:.0f}")
    acceptance(12, ok, detail, warn_only=True)
    if not ok:
        warnings.warn(f"statistical check failed (warning only): {detail}")
