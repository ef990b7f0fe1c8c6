"""Bit strings, seed derivation and Hamming distances.

Bit strings are plain ``numpy.uint8`` arrays holding one bit per byte. Every
module in the package passes them around as such; the helpers here only
validate and convert.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import draws

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class StreamTag(enum.IntEnum):
    """Independent random streams used by a single run."""

    PROBLEM_INIT = 1
    MUTATION = 2
    CROSSOVER = 3
    ENVIRONMENT = 4
    TRANSFORMATION = 5


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    run_index: int
    stream_tag: StreamTag

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= self.run_index <= MASK64:
            raise ValueError("run_index must be a non-negative 64-bit integer")
        object.__setattr__(self, "stream_tag", StreamTag(self.stream_tag))


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(spec: SeedSpec) -> int:
    """Derive a 64-bit seed from ``(master_seed, run_index, stream_tag)``.

    Each field is folded in with an XOR followed by a golden-ratio increment and
    a SplitMix64 avalanche::

        h0 = mix64(master + G)
        h1 = mix64((h0 ^ run_index) + G)
        seed = mix64((h1 ^ tag) + G)

    All arithmetic is modulo 2**64. Because ``mix64`` is a bijection, two specs
    that differ only in run index, or only in tag, never collide.
    """
    h = mix64(spec.master_seed + _GAMMA)
    h = mix64(((h ^ spec.run_index) + _GAMMA) & MASK64)
    return mix64(((h ^ int(spec.stream_tag)) + _GAMMA) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64-backed generator; the bit generator is shared with the compiled kernel."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rng(spec: SeedSpec) -> np.random.Generator:
    return make_rng(derive_seed(spec))


def as_bitstring(bits) -> np.ndarray:
    """Validate and copy ``bits`` into a fresh uint8 bit string."""
    if isinstance(bits, str):
        return from_text(bits)
    arr = np.array(bits, dtype=np.int64).ravel()
    if arr.size == 0:
        raise ValueError("bit string must not be empty")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("bit string elements must be 0 or 1")
    return arr.astype(np.uint8)


def to_text(x: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in x)


def from_text(text: str) -> np.ndarray:
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    _check_same_length(a, b)
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


def random_bitstring(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniformly random bit string of length ``n`` (64 bits per raw draw)."""
    if n < 1:
        raise ValueError("bit string length must be positive")
    return draws.coin_bits(rng.bit_generator, n)


def bitstring_at_distance(rng: np.random.Generator, target: np.ndarray, d: int) -> np.ndarray:
    """Copy of ``target`` with ``d`` distinct, uniformly chosen positions flipped."""
    n = len(target)
    if not 0 <= d <= n:
        raise ValueError(f"distance {d} outside [0, {n}]")
    out = np.array(target, dtype=np.uint8, copy=True)
    for pos in draws.sample_positions(rng.bit_generator, n, d):
        out[pos] ^= 1
    return out
