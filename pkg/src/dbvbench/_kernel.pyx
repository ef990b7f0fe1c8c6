# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled generation loop for ``dbvbench.ga``.

Mirrors ``draws`` and ``ga._python_loop`` draw for draw; see those modules for
the conventions. Compile without fast-math or FMA contraction, otherwise the
fitness sums stop matching the Python backend bit for bit.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport pow
from libc.stdint cimport int64_t, uint8_t, uint64_t
from libc.string cimport memcpy
from numpy.random cimport bitgen_t

import numpy as np

cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double UNDERFLOW = 1e-290

cdef enum:
    RANK = 0
    UNIFORM = 1
    POWERS_OF_TWO = 2
    PARETO = 3


cdef bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline uint64_t raw(bitgen_t *bg) noexcept nogil:
    return bg.next_uint64(bg.state)


cdef inline double uniform(bitgen_t *bg) noexcept nogil:
    return <double>(raw(bg) >> 11) * TWO_M53


cdef inline int64_t bounded(bitgen_t *bg, uint64_t k) noexcept nogil:
    cdef uint64_t m, low, t
    if k <= 1:
        return 0
    m = (raw(bg) >> 32) * k
    low = m & 0xFFFFFFFFULL
    if low < k:
        t = (0x100000000ULL - k) % k
        while low < t:
            m = (raw(bg) >> 32) * k
            low = m & 0xFFFFFFFFULL
    return <int64_t>(m >> 32)


cdef int64_t binomial(bitgen_t *bg, int64_t n, double p) noexcept nogil:
    cdef double q, f, u, r
    cdef int64_t k, count
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    if p > 0.5:
        return n - binomial(bg, n, 1.0 - p)
    q = 1.0 - p
    f = pow(q, <double>n)
    if f < UNDERFLOW:
        count = 0
        for k in range(n):
            if uniform(bg) < p:
                count += 1
        return count
    u = uniform(bg)
    r = p / q
    k = 0
    while u >= f and k < n:
        u -= f
        f *= r * <double>(n - k) / <double>(k + 1)
        k += 1
    return k


cdef void flip_random(bitgen_t *bg, uint8_t *x, int64_t n, int64_t k,
                      uint8_t *mark, int64_t *picked) noexcept nogil:
    """Flip ``k`` distinct uniformly chosen positions (Floyd's algorithm)."""
    cdef int64_t j, t, c = 0
    for j in range(n - k, n):
        t = bounded(bg, j + 1)
        if mark[t]:
            t = j
        mark[t] = 1
        picked[c] = t
        c += 1
    for j in range(c):
        x[picked[j]] ^= 1
        mark[picked[j]] = 0


cdef int64_t _floor_log2(int64_t n) noexcept:
    cdef int64_t lg = 0
    while n > 1:
        n >>= 1
        lg += 1
    return lg


cdef class _Run:
    cdef int64_t n, mu, lam, m
    cdef int version
    cdef bint comma, mac, keep_stale
    cdef double chi, p_c, scale, translate
    cdef int64_t d, n_min, max_exp
    cdef bitgen_t *env_bg
    cdef bitgen_t *mut_bg
    cdef bitgen_t *xo_bg
    cdef int64_t[::1] pi
    cdef int64_t[::1] order
    cdef double[::1] w
    cdef int64_t[::1] sigma
    cdef uint8_t[::1] z
    cdef uint8_t[::1] opt
    cdef uint8_t[:, ::1] pool
    cdef uint8_t[:, ::1] spare
    cdef double[::1] score
    cdef double[::1] spare_score
    cdef int64_t[::1] gen
    cdef int64_t[::1] spare_gen
    cdef int64_t[::1] cand
    cdef uint8_t[::1] mark
    cdef int64_t[::1] picked

    cdef void step_env(self) noexcept nogil:
        cdef int64_t i, j, tmp, e
        cdef double u, t, t2, t4, t8
        if self.version == RANK:
            for i in range(self.n):
                self.pi[i] = i
            i = self.n - 1
            while i > 0:
                j = bounded(self.env_bg, i + 1)
                tmp = self.pi[i]
                self.pi[i] = self.pi[j]
                self.pi[j] = tmp
                i -= 1
            self.update_order()
        elif self.version == UNIFORM:
            for i in range(self.n):
                self.w[i] = <double>((raw(self.env_bg) >> 11) | 1ULL) * TWO_M53
        elif self.version == POWERS_OF_TWO:
            for i in range(self.n):
                e = bounded(self.env_bg, self.max_exp)
                self.w[i] = <double>(1ULL << (e + 1))
        else:
            for i in range(self.n):
                u = 0.75 * uniform(self.env_bg)
                t = 1.0 / (1.0 - u)
                t2 = t * t
                t4 = t2 * t2
                t8 = t4 * t4
                self.w[i] = t8 * t2

    cdef void update_order(self) noexcept nogil:
        cdef int64_t i
        for i in range(self.n):
            self.order[self.pi[i]] = i

    cdef double evaluate(self, int64_t row) noexcept nogil:
        cdef double s = 0.0
        cdef int64_t j
        for j in range(self.n):
            if self.pool[row, self.sigma[j]] ^ self.z[j]:
                s += self.w[j]
        return self.scale * s + self.translate

    cdef int compare(self, int64_t a, int64_t b) noexcept nogil:
        """+1 if row ``a`` ranks above row ``b``, -1 if below, 0 if equal."""
        cdef int64_t r, j, g
        if self.version == RANK:
            r = self.n - 1
            while r >= 0:
                j = self.order[r]
                g = self.sigma[j]
                if self.pool[a, g] != self.pool[b, g]:
                    return 1 if (self.pool[a, g] ^ self.z[j]) else -1
                r -= 1
            return 0
        if self.score[a] > self.score[b]:
            return 1
        if self.score[a] < self.score[b]:
            return -1
        return 0

    cdef bint same_key(self, int64_t a, int64_t b) noexcept nogil:
        return self.compare(a, b) == 0 and ((a >= self.mu) == (b >= self.mu))

    cdef bint precedes(self, int64_t a, int64_t b) noexcept nogil:
        cdef int c = self.compare(a, b)
        if c != 0:
            return c > 0
        if (a >= self.mu) != (b >= self.mu):
            return a >= self.mu
        return a < b

    cdef int64_t hamming_opt(self, int64_t row) noexcept nogil:
        cdef int64_t j, dist = 0
        for j in range(self.n):
            dist += self.pool[row, j] != self.opt[j]
        return dist

    cdef void make_child(self, int64_t row) noexcept nogil:
        cdef bint crossed
        cdef int64_t a, b, j, nflip
        cdef uint64_t word = 0
        crossed = self.p_c >= 1.0 or (self.p_c > 0.0 and uniform(self.xo_bg) < self.p_c)
        if crossed:
            if self.mu >= 2:
                a = bounded(self.xo_bg, self.mu)
                b = bounded(self.xo_bg, self.mu - 1)
                if b >= a:
                    b += 1
                for j in range(self.n):
                    if (j & 63) == 0:
                        word = raw(self.xo_bg)
                    self.pool[row, j] = self.pool[a, j] if (word >> (j & 63)) & 1ULL else self.pool[b, j]
            else:
                memcpy(&self.pool[row, 0], &self.pool[0, 0], self.n)
        else:
            a = bounded(self.mut_bg, self.mu)
            memcpy(&self.pool[row, 0], &self.pool[a, 0], self.n)
        if not crossed or self.mac:
            nflip = binomial(self.mut_bg, self.n, self.chi / <double>self.n)
            if nflip < self.n_min:
                nflip = self.n_min
            flip_random(self.mut_bg, &self.pool[row, 0], self.n, nflip,
                        &self.mark[0], &self.picked[0])

    cdef void select(self) noexcept nogil:
        cdef int64_t count, i, j, key, lo, hi, need, tmp, start
        if self.comma:
            start = self.mu
        else:
            start = 0
        count = 0
        for i in range(start, self.m):
            self.cand[count] = i
            count += 1
        for i in range(1, count):
            key = self.cand[i]
            j = i - 1
            while j >= 0 and self.precedes(key, self.cand[j]):
                self.cand[j + 1] = self.cand[j]
                j -= 1
            self.cand[j + 1] = key
        if count > self.mu and self.same_key(self.cand[self.mu - 1], self.cand[self.mu]):
            lo = self.mu - 1
            while lo > 0 and self.same_key(self.cand[lo - 1], self.cand[self.mu - 1]):
                lo -= 1
            hi = self.mu + 1
            while hi < count and self.same_key(self.cand[hi], self.cand[self.mu - 1]):
                hi += 1
            need = self.mu - lo
            for i in range(need):
                j = i + bounded(self.mut_bg, hi - lo - i)
                tmp = self.cand[lo + i]
                self.cand[lo + i] = self.cand[lo + j]
                self.cand[lo + j] = tmp
        for i in range(self.mu):
            memcpy(&self.spare[i, 0], &self.pool[self.cand[i], 0], self.n)
            self.spare_score[i] = self.score[self.cand[i]]
            self.spare_gen[i] = self.gen[self.cand[i]]
        for i in range(self.mu):
            memcpy(&self.pool[i, 0], &self.spare[i, 0], self.n)
            self.score[i] = self.spare_score[i]
            self.gen[i] = self.spare_gen[i]


def run_loop(uint8_t[:, ::1] parents, double[::1] pscore, int64_t[::1] pgen,
             int version, int64_t[::1] pi, double[::1] w, int64_t[::1] sigma,
             uint8_t[::1] z, double scale, double translate, uint8_t[::1] opt,
             env_bit_generator, mut_bit_generator, xo_bit_generator,
             double chi, int64_t lam, int64_t mu, bint comma, double p_c,
             int64_t update_freq, int64_t n_min, bint mutate_after_crossover,
             bint keep_stale_fitness, int64_t evals, int64_t generation,
             int64_t env_gen, int64_t budget, int64_t target_dist,
             int64_t best_dist, bint success):
    """Run generations until the target distance or the budget is reached.

    ``pi`` (Rank) or ``w`` (numeric versions) is updated in place. Returns
    ``(parents, scores, score_gens, evals, generation, env_gen, best_dist,
    success, evals_to_target or -1, trajectory)`` with trajectory rows
    ``(evals, dist, generation)``.
    """
    cdef _Run run = _Run()
    cdef int64_t n = parents.shape[1]
    cdef int64_t i, k, first, dist, evals_to_target = -1
    cdef int64_t traj_len = 0
    cdef int64_t[:, ::1] traj = np.zeros((n + 1, 3), dtype=np.int64)

    run.n = n
    run.mu = mu
    run.lam = lam
    run.m = mu + lam
    run.version = version
    run.comma = comma
    run.mac = mutate_after_crossover
    run.keep_stale = keep_stale_fitness
    run.chi = chi
    run.p_c = p_c
    run.scale = scale
    run.translate = translate
    run.d = update_freq
    run.n_min = n_min
    run.max_exp = 31 - _floor_log2(n) if version == POWERS_OF_TWO else 1
    run.env_bg = _bitgen(env_bit_generator)
    run.mut_bg = _bitgen(mut_bit_generator)
    run.xo_bg = _bitgen(xo_bit_generator)
    run.pi = pi
    run.order = np.zeros(n, dtype=np.int64)
    run.w = w
    run.sigma = sigma
    run.z = z
    run.opt = opt
    run.pool = np.zeros((mu + lam, n), dtype=np.uint8)
    run.spare = np.zeros((mu, n), dtype=np.uint8)
    run.score = np.zeros(mu + lam, dtype=np.float64)
    run.spare_score = np.zeros(mu, dtype=np.float64)
    run.gen = np.zeros(mu + lam, dtype=np.int64)
    run.spare_gen = np.zeros(mu, dtype=np.int64)
    run.cand = np.zeros(mu + lam, dtype=np.int64)
    run.mark = np.zeros(n, dtype=np.uint8)
    run.picked = np.zeros(n, dtype=np.int64)
    run.pool[:mu, :] = parents
    run.score[:mu] = pscore
    run.gen[:mu] = pgen
    if version == RANK:
        run.update_order()

    with nogil:
        while not success and evals < budget:
            generation += 1
            if update_freq > 0 and (generation - 1) % update_freq == 0:
                run.step_env()
                env_gen += 1
            for k in range(lam):
                run.make_child(mu + k)
            if version == RANK:
                for i in range(mu):
                    if run.gen[i] != env_gen:
                        evals += 1
                    run.gen[i] = env_gen
                evals += lam
            else:
                if not keep_stale_fitness:
                    for i in range(mu):
                        if run.gen[i] != env_gen:
                            run.score[i] = run.evaluate(i)
                            run.gen[i] = env_gen
                            evals += 1
                for k in range(lam):
                    run.score[mu + k] = run.evaluate(mu + k)
                    evals += 1
            first = evals - lam
            for k in range(lam):
                run.gen[mu + k] = env_gen
                dist = run.hamming_opt(mu + k)
                if dist < best_dist:
                    best_dist = dist
                    traj[traj_len, 0] = first + k + 1
                    traj[traj_len, 1] = dist
                    traj[traj_len, 2] = generation
                    traj_len += 1
                if not success and dist <= target_dist:
                    success = True
                    evals_to_target = first + k + 1
            run.select()

    rows = [tuple(r) for r in np.asarray(traj[:traj_len]).tolist()]
    return (np.array(run.pool[:mu, :]), np.array(run.score[:mu]), np.array(run.gen[:mu]),
            evals, generation, env_gen, best_dist, bool(success), evals_to_target, rows)


# Thin wrappers over the draw primitives, used by the test suite to check
# them against ``draws`` one value at a time.

def draw_bounded(object bit_generator, uint64_t k, Py_ssize_t count):
    cdef bitgen_t *bg = _bitgen(bit_generator)
    cdef Py_ssize_t i
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] view = out
    with bit_generator.lock:
        for i in range(count):
            view[i] = bounded(bg, k)
    return out


def draw_binomial(object bit_generator, int64_t n, double p, Py_ssize_t count):
    cdef bitgen_t *bg = _bitgen(bit_generator)
    cdef Py_ssize_t i
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] view = out
    with bit_generator.lock:
        for i in range(count):
            view[i] = binomial(bg, n, p)
    return out


def draw_positions(object bit_generator, int64_t n, int64_t k):
    """Positions flipped by one Floyd draw, as a sorted array."""
    cdef bitgen_t *bg = _bitgen(bit_generator)
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    x = np.zeros(n, dtype=np.uint8)
    mark = np.zeros(n, dtype=np.uint8)
    picked = np.zeros(max(k, 1), dtype=np.int64)
    cdef uint8_t[::1] xv = x
    cdef uint8_t[::1] mv = mark
    cdef int64_t[::1] pv = picked
    with bit_generator.lock:
        flip_random(bg, &xv[0], n, k, &mv[0], &pv[0])
    return np.flatnonzero(x)
