"""Time the compiled and pure-Python GA backends on identical runs.

Usage: python benchmarks/bench_backends.py [--n 200] [--budget 20000] [--repeat 3]

Each configuration is run once per backend from the same seeds; the script
checks that both return the same result and prints wall-clock times and the
speed-up.
"""
import argparse
import time

from dbvbench import ga
from dbvbench.core import SeedSpec, StreamTag, spawn_rng
from dbvbench.ga import GAParams, run_ga
from dbvbench.problems import make_problem

CONFIGS = {
    "(1+1) chi=1": GAParams(),
    "(1+1) chi=3": GAParams(chi=3.0),
    "(4+1) p_c=0.9 chi=1.5": GAParams(mu=4, p_c=0.9, chi=1.5),
    "(3,6) p_c=0.5 d=5": GAParams(mu=3, lam=6, selection="comma", p_c=0.5, update_freq=5),
}


def timed_run(backend, version, params, n, budget, seed):
    problem = make_problem(version, n, 2, SeedSpec(seed, 0, StreamTag.ENVIRONMENT))
    t0 = time.perf_counter()
    result = run_ga(problem, params, budget, rng=spawn_rng(SeedSpec(seed, 0, StreamTag.MUTATION)),
                    crossover_rng=spawn_rng(SeedSpec(seed, 0, StreamTag.CROSSOVER)), backend=backend)
    return time.perf_counter() - t0, result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--budget", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not ga.COMPILED_AVAILABLE:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    print(f"N={args.n} budget={args.budget} best of {args.repeat}")
    print(f"{'version':<12} {'config':<24} {'evals':>7} {'python s':>9} {'compiled s':>11} {'speed-up':>9} same")
    for version in ("rank", "uniform", "pareto"):
        for label, params in CONFIGS.items():
            times = {}
            results = {}
            for backend in ("python", "compiled"):
                runs = [timed_run(backend, version, params, args.n, args.budget, seed=1) for _ in range(args.repeat)]
                times[backend] = min(t for t, _ in runs)
                results[backend] = runs[0][1]
            same = results["python"] == results["compiled"]
            print(f"{version:<12} {label:<24} {results['python'].evals_used:>7} {times['python']:>9.3f} "
                  f"{times['compiled']:>11.4f} {times['python'] / times['compiled']:>8.0f}x {same}")


if __name__ == "__main__":
    main()
