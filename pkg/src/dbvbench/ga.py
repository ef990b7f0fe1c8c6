"""Parameterized (mu +/, lambda) genetic algorithm on dynamic BinVal problems.

One generation:

1. If the update clock fires, the problem steps to a new environment and
   the parents are re-evaluated (unless ``keep_stale_fitness``).
2. ``lambda`` offspring are produced: uniform crossover of two distinct
   parents with probability ``p_c``, otherwise a copy of a random parent.
   Mutation applies when no crossover happened or when
   ``mutate_after_crossover`` is set; it flips
   ``max(n_min, Binomial(N, chi/N))`` distinct bits.
3. Offspring are evaluated (or ranked) and ``mu`` survivors are selected
   from parents + offspring (plus) or offspring only (comma).

The initial population counts as generation 1 and is evaluated in the
environment drawn at problem construction. The environment is resampled
before every generation ``g >= 2`` with ``(g - 1) % update_freq == 0``;
``update_freq == 0`` keeps it static.

The main loop has two interchangeable backends. The compiled one
(``dbvbench._kernel``) is used when importable; the pure-Python one below
drives the problem through its public ``step``/``evaluate``/``rank`` API.
Both consume the random streams identically and return bit-identical runs.
Set ``DBVBENCH_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import contextlib
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import draws
from .core import bitstring_at_distance, hamming, random_bitstring
from .problems import DynBinValProblem

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None

COMPILED_AVAILABLE = _kernel is not None
BACKEND = "compiled" if COMPILED_AVAILABLE and os.environ.get("DBVBENCH_BACKEND", "") != "python" else "python"

SELECTIONS = ("plus", "comma")


class ConfigError(ValueError):
    """An invalid parameter combination."""


@dataclass(frozen=True)
class GAParams:
    chi: float = 1.0
    lam: int = 1
    mu: int = 1
    selection: str = "plus"
    p_c: float = 0.0
    update_freq: int = 1
    n_min: int = 0
    mutate_after_crossover: bool = True
    keep_stale_fitness: bool = False

    def __post_init__(self):
        if not (isinstance(self.chi, (int, float)) and self.chi >= 0 and math.isfinite(self.chi)):
            raise ConfigError(f"chi must be a finite number >= 0, got {self.chi!r}")
        if int(self.lam) != self.lam or self.lam < 1:
            raise ConfigError(f"lambda must be a positive integer, got {self.lam!r}")
        if int(self.mu) != self.mu or self.mu < 1:
            raise ConfigError(f"mu must be a positive integer, got {self.mu!r}")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be 'plus' or 'comma', got {self.selection!r}")
        if not 0.0 <= self.p_c <= 1.0:
            raise ConfigError(f"p_c must lie in [0, 1], got {self.p_c!r}")
        if int(self.update_freq) != self.update_freq or self.update_freq < 0:
            raise ConfigError(f"update_freq must be a non-negative integer, got {self.update_freq!r}")
        if int(self.n_min) != self.n_min or self.n_min < 0:
            raise ConfigError(f"n_min must be a non-negative integer, got {self.n_min!r}")
        if self.selection == "comma" and self.lam < self.mu:
            raise ConfigError(f"comma selection requires lambda >= mu (lambda={self.lam}, mu={self.mu})")

    def check_dimension(self, n: int) -> None:
        if self.chi > n:
            raise ConfigError(f"chi must lie in [0, N={n}], got {self.chi}")
        if self.n_min >= n:
            raise ConfigError(f"n_min must lie in [0, N={n}), got {self.n_min}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    """Outcome of one run.

    ``trajectory`` holds ``(evaluations, best_fraction_correct)`` pairs, logged
    only on improvement of the best-so-far fraction, and
    ``trajectory_generations`` the generation of each entry. ``success`` means
    the target fraction (1.0, the optimum, by default) was reached.
    """

    success: bool
    evals_to_target: int | None
    evals_used: int
    generations: int
    trajectory: list[tuple[int, float]]
    trajectory_generations: list[int]
    final_population_best_fraction: float
    target_fraction: float = 1.0
    n: int = 0

    @property
    def final_fraction(self) -> float:
        """Best-so-far fraction of correct bits at the end of the run."""
        return self.trajectory[-1][1]

    @property
    def evals_to_optimum(self) -> int | None:
        for evals, frac in self.trajectory:
            if frac >= 1.0:
                return evals
        return None

    def fraction_at(self, evals: int) -> float:
        """Best-so-far fraction after ``evals`` evaluations (0.0 before the first)."""
        best = 0.0
        for e, frac in self.trajectory:
            if e > evals:
                break
            best = frac
        return best


def mutate(x: np.ndarray, chi: float, n_min: int, rng) -> np.ndarray:
    n = len(x)
    if not 0 <= chi <= n:
        raise ConfigError(f"chi must lie in [0, {n}], got {chi}")
    if not 0 <= n_min < max(n, 1):
        raise ConfigError(f"n_min must lie in [0, {n}), got {n_min}")
    bg = rng.bit_generator
    n_flip = max(n_min, draws.binomial(bg, n, chi / n))
    child = np.array(x, dtype=np.uint8, copy=True)
    for pos in draws.sample_positions(bg, n, n_flip):
        child[pos] ^= 1
    return child


def uniform_crossover(p1: np.ndarray, p2: np.ndarray, rng) -> np.ndarray:
    if len(p1) != len(p2):
        raise ValueError(f"length mismatch: {len(p1)} != {len(p2)}")
    mask = draws.coin_bits(rng.bit_generator, len(p1))
    return np.where(mask == 1, p1, p2).astype(np.uint8)


def produce_offspring(parents: Sequence[np.ndarray], params: GAParams, rng,
                      crossover_rng=None) -> list[np.ndarray]:
    """Create ``params.lam`` offspring from the parent genomes.

    Crossover decisions, parent pairs and crossover masks use
    ``crossover_rng`` (default ``rng``); parent choice for mutation-only
    offspring and the mutations themselves use ``rng``.
    """
    xrng = rng if crossover_rng is None else crossover_rng
    mu = len(parents)
    out = []
    for _ in range(params.lam):
        crossed = params.p_c >= 1.0 or (params.p_c > 0.0 and draws.uniform(xrng.bit_generator) < params.p_c)
        if crossed:
            if mu >= 2:
                a = draws.bounded(xrng.bit_generator, mu)
                b = draws.bounded(xrng.bit_generator, mu - 1)
                if b >= a:
                    b += 1
                child = uniform_crossover(parents[a], parents[b], xrng)
            else:
                child = np.array(parents[0], dtype=np.uint8, copy=True)
        else:
            child = np.array(parents[draws.bounded(rng.bit_generator, mu)], dtype=np.uint8, copy=True)
        if not crossed or params.mutate_after_crossover:
            child = mutate(child, params.chi, params.n_min, rng)
        out.append(child)
    return out


def selection_indices(n_parents: int, scores: Sequence[float], params: GAParams, rng) -> list[int]:
    """Indices of survivors in the combined list ``parents + offspring``.

    ``scores`` covers that combined list, higher is better. Candidates are
    ordered by score, then offspring before parents, then index; when the
    cut at ``mu`` splits a group of equal score and class, the survivors
    from that group are drawn uniformly (partial Fisher-Yates on ``rng``).
    """
    mu = params.mu
    n_off = len(scores) - n_parents
    if params.selection == "comma":
        if n_off < mu:
            raise ConfigError("comma selection requires lambda >= mu")
        cands = list(range(n_parents, len(scores)))
    else:
        cands = list(range(len(scores)))

    def key(i):
        return (-scores[i], 0 if i >= n_parents else 1)

    order = sorted(cands, key=lambda i: (*key(i), i))
    if len(order) <= mu or key(order[mu - 1]) != key(order[mu]):
        return order[:mu]
    tied = key(order[mu - 1])
    lo = mu - 1
    while lo > 0 and key(order[lo - 1]) == tied:
        lo -= 1
    hi = mu + 1
    while hi < len(order) and key(order[hi]) == tied:
        hi += 1
    group = order[lo:hi]
    need = mu - lo
    for i in range(need):
        j = i + draws.bounded(rng.bit_generator, len(group) - i)
        group[i], group[j] = group[j], group[i]
    return order[:lo] + group[:need]


def select(parents: list, offspring: list, params: GAParams, rng, scores: Sequence[float]) -> list:
    """New parent population of size ``mu`` (see ``selection_indices``)."""
    pool = list(parents) + list(offspring)
    return [pool[i] for i in selection_indices(len(parents), scores, params, rng)]


@dataclass
class _LoopState:
    parents: np.ndarray          # (mu, N) uint8
    scores: np.ndarray           # (mu,) float64, numeric fitness; unused for Rank
    score_gen: np.ndarray        # (mu,) int64, environment index of each score
    generation: int
    best_dist: int
    target_dist: int
    success: bool = False
    evals_to_target: int | None = None
    traj: list[tuple[int, int, int]] = field(default_factory=list)


def _observe(st: _LoopState, dist: int, evals: int) -> None:
    if dist < st.best_dist:
        st.best_dist = dist
        st.traj.append((evals, dist, st.generation))
    if not st.success and dist <= st.target_dist:
        st.success = True
        st.evals_to_target = evals


def _python_loop(problem: DynBinValProblem, params: GAParams, st: _LoopState, budget: int,
                 rng, xrng) -> None:
    opt = problem.optimum()
    mu, lam, d = params.mu, params.lam, params.update_freq
    while not st.success and problem.eval_count < budget:
        st.generation += 1
        if d > 0 and (st.generation - 1) % d == 0:
            problem.step()
        genv = problem.env.generation_index
        offspring = produce_offspring(list(st.parents), params, rng, xrng)
        if problem.is_rank:
            valid = [g == genv for g in st.score_gen] + [False] * lam
            ranking = problem.rank(list(st.parents) + offspring, valid)
            scores = (-ranking.level).astype(np.float64)
            st.score_gen[:] = genv
        else:
            if not params.keep_stale_fitness:
                for i in range(mu):
                    if st.score_gen[i] != genv:
                        st.scores[i] = problem.evaluate(st.parents[i])
                        st.score_gen[i] = genv
            off_scores = [problem.evaluate(child) for child in offspring]
            scores = np.concatenate([st.scores, off_scores])
        first = problem.eval_count - lam
        for k, child in enumerate(offspring):
            _observe(st, hamming(child, opt), first + k + 1)
        keep = selection_indices(mu, scores, params, rng)
        pool = np.concatenate([st.parents, np.array(offspring, dtype=np.uint8)])
        gens = np.concatenate([st.score_gen, np.full(lam, genv, dtype=np.int64)])
        st.parents = pool[keep]
        st.scores = scores[keep].copy()
        st.score_gen = gens[keep]


def _compiled_loop(problem: DynBinValProblem, params: GAParams, st: _LoopState, budget: int,
                   rng, xrng) -> None:
    env = problem.env
    n = problem.n
    pi = np.ascontiguousarray(env.pi if problem.is_rank else np.zeros(n), dtype=np.int64)
    w = np.ascontiguousarray(np.zeros(n) if problem.is_rank else env.weights, dtype=np.float64)
    tf = problem.transform
    bit_generators = {id(g.bit_generator): g.bit_generator for g in (rng, xrng, problem.rng_env)}
    with contextlib.ExitStack() as stack:
        for bg in bit_generators.values():
            stack.enter_context(bg.lock)
        out = _kernel.run_loop(
            np.ascontiguousarray(st.parents, dtype=np.uint8),
            np.ascontiguousarray(st.scores, dtype=np.float64),
            np.ascontiguousarray(st.score_gen, dtype=np.int64),
            problem.version.code, pi, w,
            np.ascontiguousarray(tf.var_permutation, dtype=np.int64),
            np.ascontiguousarray(tf.xor_mask, dtype=np.uint8),
            float(tf.scale), float(tf.translate),
            np.ascontiguousarray(problem.optimum(), dtype=np.uint8),
            problem.rng_env.bit_generator, rng.bit_generator, xrng.bit_generator,
            float(params.chi), params.lam, params.mu, params.selection == "comma",
            float(params.p_c), params.update_freq, params.n_min,
            bool(params.mutate_after_crossover), bool(params.keep_stale_fitness),
            problem.eval_count, st.generation, env.generation_index, budget,
            st.target_dist, st.best_dist, st.success,
        )
    (st.parents, st.scores, st.score_gen, problem.eval_count, st.generation,
     env.generation_index, st.best_dist, st.success, evals_to_target, traj) = out
    if problem.is_rank:
        env.pi = pi.astype(np.intp, copy=False)
    else:
        env.weights = w
    if st.evals_to_target is None and evals_to_target >= 0:
        st.evals_to_target = evals_to_target
    st.traj.extend(traj)


def target_distance(n: int, target_fraction: float) -> int:
    """Largest Hamming distance whose fraction of correct bits reaches the target."""
    return max(0, math.floor(n * (1.0 - target_fraction) + 1e-9))


def run_ga(problem: DynBinValProblem, params: GAParams, budget: int, init=None, rng=None,
           crossover_rng=None, init_rng=None, target_fraction: float = 1.0,
           backend: str | None = None) -> RunResult:
    """Run the GA on ``problem`` until the target is reached or the budget is spent.

    ``init`` is ``None``/``"random"`` for uniform random parents, or
    ``("at_distance", d0)`` to start every parent at Hamming distance ``d0``
    from the optimum. ``rng`` drives initialization, mutation and selection
    tie-breaks; ``crossover_rng`` and ``init_rng`` (both default ``rng``) drive
    crossover and the initial population.

    The budget is checked at generation boundaries, so a run may overshoot it
    by at most ``mu + lambda - 1`` evaluations.
    """
    n = problem.n
    params.check_dimension(n)
    if budget < params.mu:
        raise ConfigError(f"budget {budget} is smaller than mu={params.mu}")
    if params.keep_stale_fitness and problem.is_rank:
        raise ConfigError("keep_stale_fitness needs a numeric-fitness version; Rank always ranks in the current environment")
    if rng is None:
        raise ValueError("run_ga needs an explicit rng")
    xrng = rng if crossover_rng is None else crossover_rng
    backend = backend or BACKEND
    if backend == "compiled" and not COMPILED_AVAILABLE:
        raise RuntimeError("compiled backend requested but dbvbench._kernel is not built")

    irng = rng if init_rng is None else init_rng
    opt = problem.optimum()
    if init is None or init == "random":
        genomes = [random_bitstring(irng, n) for _ in range(params.mu)]
    elif isinstance(init, tuple) and init[0] == "at_distance":
        genomes = [bitstring_at_distance(irng, opt, int(init[1])) for _ in range(params.mu)]
    else:
        raise ValueError(f"unknown init {init!r}")

    st = _LoopState(
        parents=np.array(genomes, dtype=np.uint8),
        scores=np.zeros(params.mu),
        score_gen=np.zeros(params.mu, dtype=np.int64),
        generation=1,
        best_dist=n + 1,
        target_dist=target_distance(n, target_fraction),
    )
    genv = problem.env.generation_index
    start = problem.eval_count
    if problem.is_rank:
        problem.rank(genomes)
    else:
        st.scores[:] = [problem.evaluate(g) for g in genomes]
    st.score_gen[:] = genv
    for i, g in enumerate(genomes):
        _observe(st, hamming(g, opt), start + i + 1)

    if not st.success:
        loop = _compiled_loop if backend == "compiled" else _python_loop
        loop(problem, params, st, budget, rng, xrng)

    best_final = min(hamming(p, opt) for p in st.parents)
    return RunResult(
        success=st.success,
        evals_to_target=st.evals_to_target,
        evals_used=problem.eval_count - start,
        generations=st.generation,
        trajectory=[(int(e), (n - dist) / n) for e, dist, _ in st.traj],
        trajectory_generations=[int(g) for _, _, g in st.traj],
        final_population_best_fraction=(n - best_final) / n,
        target_fraction=target_fraction,
        n=n,
    )
