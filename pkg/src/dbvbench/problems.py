"""The Dynamic BinVal problem family.

Four versions share one interface. ``Rank`` is the exact dynamic BinVal: each
environment is a permutation ``pi`` that assigns weight ``2**pi[i]`` to
position ``i``, and strings can only be *ranked* (lexicographically in order
of decreasing weight), never evaluated to a number. ``Uniform``,
``PowersOfTwo`` and ``Pareto`` draw independent random weights per
environment and return ordinary linear fitness values.

An instance disguises the function with a fixed transformation applied in
this order: permute variables, XOR with a mask, base function, then
``a * f + b``. For a genome ``x`` the base function sees
``y[j] = x[sigma[j]] ^ z[j]``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import draws
from .core import SeedSpec, StreamTag, derive_seed, make_rng, mix64, to_text


class ProblemVersion(enum.Enum):
    RANK = "rank"
    UNIFORM = "uniform"
    POWERS_OF_TWO = "powersoftwo"
    PARETO = "pareto"

    @classmethod
    def parse(cls, value) -> "ProblemVersion":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"power2": "powersoftwo", "pow2": "powersoftwo", "ranking": "rank"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown problem version {value!r}")

    @property
    def code(self) -> int:
        return list(ProblemVersion).index(self)

    @property
    def label(self) -> str:
        return {"rank": "Rank", "uniform": "Uniform",
                "powersoftwo": "PowersOfTwo", "pareto": "Pareto"}[self.value]


def max_power_exponent(n: int) -> int:
    """Largest exponent for PowersOfTwo weights: ``31 - floor(log2 n)``."""
    k = 31 - (n.bit_length() - 1)
    if k < 1:
        raise ValueError(f"PowersOfTwo needs N < 2**31, got {n}")
    return k


def sample_weights(version: ProblemVersion, rng, n: int) -> np.ndarray:
    """Fresh environment weights for a numeric version."""
    version = ProblemVersion.parse(version)
    if n < 1:
        raise ValueError("N must be positive")
    bg = rng.bit_generator if hasattr(rng, "bit_generator") else rng
    if version is ProblemVersion.UNIFORM:
        return draws.uniform_weights(bg, n)
    if version is ProblemVersion.POWERS_OF_TWO:
        return draws.power_of_two_weights(bg, n, max_power_exponent(n))
    if version is ProblemVersion.PARETO:
        return draws.pareto_weights(bg, n)
    raise ValueError("the Rank version samples a permutation, not weights")


def binval_exact(x, pi) -> int:
    """Exact ``sum_i 2**(pi[i] - 1) * x[i]`` for a 1-based permutation ``pi``.

    Test oracle only, limited to N <= 62. Environments store ``pi`` 0-based,
    so pass ``env.pi + 1``.
    """
    if len(x) > 62:
        raise ValueError("binval_exact is limited to N <= 62")
    if len(x) != len(pi):
        raise ValueError("length mismatch")
    return sum(1 << (int(p) - 1) for xi, p in zip(x, pi) if xi)


@dataclass
class Environment:
    pi: np.ndarray | None = None
    weights: np.ndarray | None = None
    generation_index: int = 0


@dataclass
class InstanceTransform:
    instance_id: int
    xor_mask: np.ndarray
    var_permutation: np.ndarray
    scale: float = 1.0
    translate: float = 0.0

    @classmethod
    def identity(cls, n: int, instance_id: int = 1) -> "InstanceTransform":
        return cls(instance_id, np.zeros(n, dtype=np.uint8), np.arange(n, dtype=np.intp))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Map genomes (1-d or rows of a 2-d array) to the base function's input."""
        x = np.asarray(x)
        return x[..., self.var_permutation] ^ self.xor_mask

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "xor_mask": to_text(self.xor_mask),
            "var_permutation": self.var_permutation.tolist(),
            "scale": repr(float(self.scale)),
            "translate": repr(float(self.translate)),
        }


class Ranking(NamedTuple):
    """Result of ranking a population.

    ``order`` lists population indices best first (ties keep input order);
    ``level[i]`` is the dense rank of individual ``i``, 0 for the best, equal
    for tied individuals.
    """

    order: np.ndarray
    level: np.ndarray

    @property
    def has_ties(self) -> bool:
        return len(np.unique(self.level)) < len(self.level)


class DynBinValProblem:
    """A dynamic problem instance driven by an optimizer through ``step``.

    Evaluations are counted in ``eval_count``: one per ``evaluate`` call, and
    one per ranked individual whose rank is not already valid for the current
    environment. Stepping is free. Not safe for concurrent use.
    """

    def __init__(self, version, n: int, transform: InstanceTransform, env_rng,
                 env_seed: int | None = None):
        self.version = ProblemVersion.parse(version)
        if n < 1:
            raise ValueError("N must be positive")
        if len(transform.xor_mask) != n or len(transform.var_permutation) != n:
            raise ValueError("transform does not match N")
        if transform.scale <= 0:
            raise ValueError("scale must be positive")
        self.n = n
        self.transform = transform
        self.rng_env = env_rng
        self.env_seed = env_seed
        self.eval_count = 0
        self.env = Environment()
        self._opt = self._compute_optimum()
        self._resample()

    @property
    def is_rank(self) -> bool:
        return self.version is ProblemVersion.RANK

    def _resample(self) -> None:
        bg = self.rng_env.bit_generator
        if self.is_rank:
            self.env.pi = draws.permutation(bg, self.n)
        else:
            self.env.weights = sample_weights(self.version, bg, self.n)

    def step(self) -> None:
        """Move to a fresh environment; does not touch ``eval_count``."""
        self._resample()
        self.env.generation_index += 1

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.uint8)
        if x.shape[-1] != self.n:
            raise ValueError(f"bit string length {x.shape[-1]} != N={self.n}")
        return x

    def evaluate(self, x) -> float:
        if self.is_rank:
            raise TypeError("the Rank version has no numeric fitness; use rank()")
        y = self.transform.apply(self._check(x))
        self.eval_count += 1
        # sequential left-to-right sum; the compiled kernel adds in the same order
        s = float(np.add.accumulate(self.env.weights * y)[-1])
        return self.transform.scale * s + self.transform.translate

    def priority_order(self) -> np.ndarray:
        """Base-function positions from heaviest to lightest weight."""
        order = np.empty(self.n, dtype=np.intp)
        order[self.env.pi] = np.arange(self.n, dtype=np.intp)
        return order[::-1]

    def rank(self, pop: Sequence, valid: Sequence[bool] | None = None) -> Ranking:
        """Rank ``pop`` best first under the current permutation.

        Transformed strings are compared on positions in decreasing weight
        order; the first differing position decides and a one wins. ``valid``
        flags individuals whose rank from the current environment is already
        known; only the others are charged an evaluation.
        """
        if not self.is_rank:
            raise TypeError("rank() is only available for the Rank version")
        pop = self._check(np.asarray(pop, dtype=np.uint8).reshape(len(pop), -1))
        charged = len(pop) if valid is None else sum(1 for v in valid if not v)
        self.eval_count += charged
        keys = [row.tobytes() for row in self.transform.apply(pop)[:, self.priority_order()]]
        order = sorted(range(len(pop)), key=keys.__getitem__, reverse=True)
        level = np.zeros(len(pop), dtype=np.int64)
        current = 0
        for prev, idx in zip([None] + order[:-1], order):
            if prev is not None and keys[idx] != keys[prev]:
                current += 1
            level[idx] = current
        return Ranking(np.array(order, dtype=np.intp), level)

    def _compute_optimum(self) -> np.ndarray:
        opt = np.empty(self.n, dtype=np.uint8)
        opt[self.transform.var_permutation] = 1 ^ self.transform.xor_mask
        return opt

    def optimum(self) -> np.ndarray:
        return self._opt.copy()

    def is_optimum(self, x) -> bool:
        return bool(np.array_equal(self._check(x), self._opt))

    def descriptor(self) -> dict:
        return {
            "version": self.version.label,
            "N": self.n,
            "instance_id": self.transform.instance_id,
            "environment_seed": self.env_seed,
            "transform": self.transform.to_dict(),
        }


def transform_seed(master_seed: int, version: ProblemVersion, n: int, instance_id: int) -> int:
    """Seed for an instance's transformation; shared by every run on that instance."""
    base = derive_seed(SeedSpec(master_seed, instance_id, StreamTag.TRANSFORMATION))
    return mix64(base ^ mix64((n << 8) | version.code))


def make_transform(version: ProblemVersion, n: int, instance_id: int, master_seed: int) -> InstanceTransform:
    if instance_id < 1:
        raise ValueError("instance ids start at 1")
    if instance_id == 1:
        return InstanceTransform.identity(n)
    bg = make_rng(transform_seed(master_seed, version, n, instance_id)).bit_generator
    z = draws.coin_bits(bg, n)
    sigma = draws.permutation(bg, n)
    a = 0.2 + 4.8 * draws.uniform(bg)
    b = -1000.0 + 2000.0 * draws.uniform(bg)
    return InstanceTransform(instance_id, z, sigma, a, b)


def make_problem(version, n: int, instance_id: int, seed_spec: SeedSpec) -> DynBinValProblem:
    """Build an instance; the environment stream comes from ``seed_spec``.

    ``seed_spec.stream_tag`` is ignored: the environment always uses the
    ENVIRONMENT stream of ``(master_seed, run_index)``.
    """
    version = ProblemVersion.parse(version)
    if n < 1:
        raise ValueError("N must be positive")
    transform = make_transform(version, n, instance_id, seed_spec.master_seed)
    env_seed = derive_seed(SeedSpec(seed_spec.master_seed, seed_spec.run_index, StreamTag.ENVIRONMENT))
    return DynBinValProblem(version, n, transform, make_rng(env_seed), env_seed=env_seed)
