"""Performance measures over runs: fraction of correct bits, hitting times, ERT."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .core import hamming

# Mutation-factor thresholds of the (1+1) EA known from runtime theory.
# Reference values for documentation and plots; nothing asserts against them.
CHI0_DBV = 2.13
CHI0_HOTTOPIC = 1.59
FIG_THRESHOLD_MARKER = 1.6

INF = math.inf


def fraction_correct(x, opt) -> float:
    return (len(opt) - hamming(x, opt)) / len(opt)


def evals_to_fraction(trajectory: Sequence[tuple[int, float]], phi: float) -> int | None:
    """First logged evaluation count whose best-so-far fraction reaches ``phi``."""
    for evals, frac in trajectory:
        if frac >= phi:
            return int(evals)
    return None


@dataclass
class RunSet:
    """Runs of one configuration sharing N, budget, parameters and version."""

    trajectories: list[list[tuple[int, float]]]
    budget: int
    config: dict = field(default_factory=dict)

    @classmethod
    def from_results(cls, results, budget: int, config: dict | None = None) -> "RunSet":
        return cls([list(r.trajectory) for r in results], budget, dict(config or {}))

    def __len__(self) -> int:
        return len(self.trajectories)


def _hits(runset: RunSet, phi: float) -> list[int | None]:
    if len(runset) == 0:
        raise ValueError("empty run set")
    return [evals_to_fraction(t, phi) for t in runset.trajectories]


def ert(runset: RunSet, phi: float) -> float:
    """Expected running time to reach ``phi``; ``math.inf`` when no run reaches it.

    Runs that miss the target contribute the full budget (not their actual,
    possibly overshooting, evaluation count).
    """
    hits = _hits(runset, phi)
    n_hit = sum(h is not None for h in hits)
    if n_hit == 0:
        return INF
    return sum(runset.budget if h is None else h for h in hits) / n_hit


def success_rate(runset: RunSet, phi: float) -> float:
    hits = _hits(runset, phi)
    return sum(h is not None for h in hits) / len(hits)


def format_ert(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.1f}"
