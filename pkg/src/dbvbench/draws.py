"""Random primitives built on raw 64-bit draws from a numpy bit generator.

Everything stochastic in a run goes through these functions, and
``_kernel.pyx`` re-implements each of them draw for draw. That is what lets
the compiled and the pure-Python backends produce bit-identical runs from the
same seeds, so any change here must be mirrored there.

Conventions:

* ``uniform``: ``(raw >> 11) * 2**-53``, in [0, 1).
* ``bounded(k)``: Lemire's multiply-shift on the top 32 bits of a raw draw,
  with rejection; ``k == 1`` consumes nothing.
* ``binomial``: inversion for ``p <= 1/2`` (mirrored for larger ``p``),
  Bernoulli counting when ``(1 - p)**n`` underflows.
* ``sample_positions``: Floyd's algorithm.
* ``coin_bits``: bit ``i`` is bit ``i % 64`` of raw draw ``i // 64``.
"""
from __future__ import annotations

import numpy as np

TWO_M53 = 1.0 / 9007199254740992.0
_MASK32 = 0xFFFFFFFF
_U32 = np.uint64(32)
_UNDERFLOW = 1e-290


def raw(bg) -> int:
    return int(bg.random_raw())


def uniform(bg) -> float:
    return (raw(bg) >> 11) * TWO_M53


def _lemire(next_raw, k: int) -> int:
    m = (next_raw() >> 32) * k
    low = m & _MASK32
    if low < k:
        t = ((1 << 32) - k) % k
        while low < t:
            m = (next_raw() >> 32) * k
            low = m & _MASK32
    return m >> 32


def bounded(bg, k: int) -> int:
    """Uniform integer in ``[0, k)`` for ``1 <= k <= 2**32``."""
    if k <= 1:
        return 0
    return _lemire(lambda: raw(bg), k)


def bounded_array(bg, ks) -> np.ndarray:
    """``[bounded(bg, k) for k in ks]``, vectorised over the common no-rejection case."""
    ks = np.asarray(ks, dtype=np.uint64)
    out = np.zeros(len(ks), dtype=np.int64)
    live = np.flatnonzero(ks > 1)
    if live.size == 0:
        return out
    kl = ks[live]
    raws = bg.random_raw(live.size)
    m = (raws >> _U32) * kl
    low = m & np.uint64(_MASK32)
    thresh = ((np.uint64(1) << _U32) - kl) % kl
    out[live] = (m >> _U32).astype(np.int64)
    bad = np.flatnonzero(low < thresh)
    if bad.size == 0:
        return out
    # A rejection consumes an extra raw draw, shifting every later element
    # onto the next buffered value; redo the tail sequentially.
    first = int(bad[0])
    buffered = iter(raws[first:].tolist())

    def next_raw():
        for v in buffered:
            return v
        return raw(bg)

    for i in range(first, live.size):
        out[live[i]] = _lemire(next_raw, int(kl[i]))
    return out


def binomial(bg, n: int, p: float) -> int:
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    if p > 0.5:
        return n - binomial(bg, n, 1.0 - p)
    q = 1.0 - p
    f = q ** n
    if f < _UNDERFLOW:
        count = 0
        for _ in range(n):
            if uniform(bg) < p:
                count += 1
        return count
    u = uniform(bg)
    r = p / q
    k = 0
    while u >= f and k < n:
        u -= f
        f *= r * (n - k) / (k + 1)
        k += 1
    return k


def sample_positions(bg, n: int, k: int) -> set[int]:
    """``k`` distinct positions from ``range(n)``, uniformly (Floyd)."""
    chosen: set[int] = set()
    for j in range(n - k, n):
        t = bounded(bg, j + 1)
        chosen.add(j if t in chosen else t)
    return chosen


def coin_bits(bg, n: int) -> np.ndarray:
    words = bg.random_raw((n + 63) // 64)
    bits = (words[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1)
    return bits.ravel()[:n].astype(np.uint8)


def permutation(bg, n: int) -> np.ndarray:
    """Fisher-Yates shuffle of ``arange(n)`` (swap targets drawn for i = n-1 .. 1)."""
    perm = np.arange(n, dtype=np.intp)
    if n < 2:
        return perm
    targets = bounded_array(bg, np.arange(n, 1, -1)).tolist()
    for i, j in zip(range(n - 1, 0, -1), targets):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def uniform_weights(bg, n: int) -> np.ndarray:
    """Odd multiples of 2**-53, so every weight lies strictly inside (0, 1)."""
    return ((bg.random_raw(n) >> np.uint64(11)) | np.uint64(1)).astype(np.float64) * TWO_M53


def pareto_weight(u):
    """``(1 - u)**-10`` through an explicit multiply chain (no libm ``pow``)."""
    t = 1.0 / (1.0 - u)
    t2 = t * t
    t4 = t2 * t2
    t8 = t4 * t4
    return t8 * t2


def pareto_weights(bg, n: int) -> np.ndarray:
    u = 0.75 * ((bg.random_raw(n) >> np.uint64(11)).astype(np.float64) * TWO_M53)
    return pareto_weight(u)


def power_of_two_weights(bg, n: int, max_exponent: int) -> np.ndarray:
    exps = bounded_array(bg, np.full(n, max_exponent))
    return np.ldexp(1.0, (exps + 1).astype(np.int32))
