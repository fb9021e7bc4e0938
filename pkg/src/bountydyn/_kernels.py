"""Hot kernels: cohort simulation and the AutoKS xmin scan.

Each kernel exists twice — a vectorized numpy implementation and a numba
``@njit`` implementation — selected per call via ``_backend.use_numba()``.
Both variants execute the same arithmetic on the same splitmix64 streams:
discovery counts agree exactly and totals agree to within vector-vs-libm
ulp noise (see tests/test_rng_backend.py).

Numba compilation is lazy: the jitted functions are created on first use so
importing the package never pays the compile cost.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import use_numba
from ._rng import GAMMA, MASK64, _TWO_NEG53, mix64_np, substream_seeds_np

_CRIT_TOL = 1e-9

# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _units_at_np(t: np.ndarray, k: int) -> np.ndarray:
    """Uniform draw ``k`` of each stream in the uint64 seed vector ``t``."""
    bits = mix64_np(mix64_np(t) + np.uint64((k + 1) * GAMMA & MASK64))
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53


def _stop_counts_np(t: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0.0:
        return np.zeros(t.shape[0], dtype=np.int64)
    u0 = _units_at_np(t, 0)
    return np.floor(np.log(u0) / math.log(beta)).astype(np.int64)


def _geom_total_np(n: np.ndarray, lam: float, s0: float) -> np.ndarray:
    if abs(lam - 1.0) <= _CRIT_TOL:
        return s0 * n.astype(np.float64)
    return s0 * lam * np.expm1(n * math.log(lam)) / (lam - 1.0)


def cohort_fixed_np(beta: float, lam: float, s0: float, n_researchers: int, seed: int):
    t = substream_seeds_np(seed, np.arange(n_researchers, dtype=np.uint64))
    n = _stop_counts_np(t, beta)
    return n, _geom_total_np(n, lam, s0)


def _accumulate_np(t, n, s0, factor_fn):
    """Shared masked-column accumulator for heterogeneous factors.

    ``factor_fn(t_active, k)`` returns the rank-``k`` factor draw per active
    trajectory; accumulation order matches the scalar loops exactly:
    r *= factor; total += r.
    """
    totals = np.zeros(n.shape[0], dtype=np.float64)
    idx = np.flatnonzero(n >= 1)
    t_a = t[idx]
    r_a = np.full(idx.shape[0], s0, dtype=np.float64)
    k = 1
    while idx.shape[0] > 0:
        r_a = r_a * factor_fn(t_a, k)
        totals[idx] += r_a
        k += 1
        keep = n[idx] >= k
        if not keep.all():
            idx, t_a, r_a = idx[keep], t_a[keep], r_a[keep]
    return totals


def cohort_twopoint_np(
    beta: float, v0: float, v1: float, p0: float, s0: float, n_researchers: int, seed: int
):
    t = substream_seeds_np(seed, np.arange(n_researchers, dtype=np.uint64))
    n = _stop_counts_np(t, beta)

    def factor(t_a, k):
        u = _units_at_np(t_a, k)
        return np.where(u < p0, v0, v1)

    return n, _accumulate_np(t, n, s0, factor)


def cohort_lognormal_np(
    beta: float, mu: float, sigma: float, s0: float, n_researchers: int, seed: int
):
    t = substream_seeds_np(seed, np.arange(n_researchers, dtype=np.uint64))
    n = _stop_counts_np(t, beta)

    def factor(t_a, k):
        ua = _units_at_np(t_a, 2 * k - 1)
        ub = _units_at_np(t_a, 2 * k)
        z = np.sqrt(-2.0 * np.log(ua)) * np.cos(2.0 * np.pi * ub)
        return np.exp(mu + sigma * z)

    return n, _accumulate_np(t, n, s0, factor)


def autoks_np(ln_x: np.ndarray, suffix_logsum: np.ndarray, starts: np.ndarray):
    """Per-candidate Hill MLE + two-sided KS distance.

    ``ln_x``: log of the ascending-sorted sample; ``suffix_logsum[i]`` =
    sum of ln_x[i:]; ``starts``: tail start index per candidate xmin.
    Returns (gammas, ks) arrays aligned with ``starts``.
    """
    n = ln_x.shape[0]
    m = starts.shape[0]
    gammas = np.empty(m, dtype=np.float64)
    ks = np.empty(m, dtype=np.float64)
    for j in range(m):
        i0 = int(starts[j])
        nt = n - i0
        lxm = ln_x[i0]
        s = suffix_logsum[i0] - nt * lxm
        if s <= 0.0:
            gammas[j] = np.inf
            ks[j] = np.inf
            continue
        a = nt / s
        gammas[j] = 1.0 + a
        cdf = 1.0 - np.exp(-a * (ln_x[i0:] - lxm))
        inv = 1.0 / nt
        steps = np.arange(nt, dtype=np.float64)
        d_lo = np.abs(cdf - steps * inv).max()
        d_hi = np.abs(cdf - (steps + 1.0) * inv).max()
        ks[j] = d_hi if d_hi > d_lo else d_lo
    return gammas, ks


# ---------------------------------------------------------------------------
# numba path (compiled lazily, cached on disk)
# ---------------------------------------------------------------------------

_jitted: dict = {}


def _build_jitted():
    import numba  # noqa: PLC0415

    njit = numba.njit
    prange = numba.prange
    u64 = np.uint64

    @njit(cache=True, inline="always")
    def _mix64(x):
        x ^= x >> u64(30)
        x *= u64(0xBF58476D1CE4E5B9)
        x ^= x >> u64(27)
        x *= u64(0x94D049BB133111EB)
        x ^= x >> u64(31)
        return x

    @njit(cache=True, inline="always")
    def _unit(t, k):
        bits = _mix64(_mix64(t) + (u64(k) + u64(1)) * u64(0x9E3779B97F4A7C15))
        return (np.float64(bits >> u64(11)) + 1.0) * _TWO_NEG53

    @njit(cache=True, inline="always")
    def _sub_seed(useed, i):
        return _mix64(_mix64(useed) + (u64(i) + u64(1)) * u64(0x9E3779B97F4A7C15))

    @njit(cache=True, inline="always")
    def _stop_count(t, beta, log_beta):
        if beta == 0.0:
            return np.int64(0)
        u0 = _unit(t, 0)
        return np.int64(math.floor(math.log(u0) / log_beta))

    @njit(cache=True, parallel=True)
    def cohort_fixed(beta, lam, s0, n_researchers, useed):
        n = np.empty(n_researchers, dtype=np.int64)
        totals = np.empty(n_researchers, dtype=np.float64)
        log_beta = math.log(beta) if beta > 0.0 else 0.0
        critical = abs(lam - 1.0) <= _CRIT_TOL
        log_lam = math.log(lam)
        for i in prange(n_researchers):
            t = _sub_seed(useed, i)
            ni = _stop_count(t, beta, log_beta)
            n[i] = ni
            if critical:
                totals[i] = s0 * np.float64(ni)
            else:
                totals[i] = s0 * lam * math.expm1(ni * log_lam) / (lam - 1.0)
        return n, totals

    @njit(cache=True, parallel=True)
    def cohort_twopoint(beta, v0, v1, p0, s0, n_researchers, useed):
        n = np.empty(n_researchers, dtype=np.int64)
        totals = np.empty(n_researchers, dtype=np.float64)
        log_beta = math.log(beta) if beta > 0.0 else 0.0
        for i in prange(n_researchers):
            t = _sub_seed(useed, i)
            ni = _stop_count(t, beta, log_beta)
            n[i] = ni
            r = s0
            tot = 0.0
            for k in range(1, ni + 1):
                u = _unit(t, k)
                r = r * (v0 if u < p0 else v1)
                tot += r
            totals[i] = tot
        return n, totals

    @njit(cache=True, parallel=True)
    def cohort_lognormal(beta, mu, sigma, s0, n_researchers, useed):
        n = np.empty(n_researchers, dtype=np.int64)
        totals = np.empty(n_researchers, dtype=np.float64)
        log_beta = math.log(beta) if beta > 0.0 else 0.0
        for i in prange(n_researchers):
            t = _sub_seed(useed, i)
            ni = _stop_count(t, beta, log_beta)
            n[i] = ni
            r = s0
            tot = 0.0
            for k in range(1, ni + 1):
                ua = _unit(t, 2 * k - 1)
                ub = _unit(t, 2 * k)
                z = math.sqrt(-2.0 * math.log(ua)) * math.cos(2.0 * math.pi * ub)
                r = r * math.exp(mu + sigma * z)
                tot += r
            totals[i] = tot
        return n, totals

    @njit(cache=True, parallel=True)
    def autoks(ln_x, suffix_logsum, starts):
        n = ln_x.shape[0]
        m = starts.shape[0]
        gammas = np.empty(m, dtype=np.float64)
        ks = np.empty(m, dtype=np.float64)
        for j in prange(m):
            i0 = starts[j]
            nt = n - i0
            lxm = ln_x[i0]
            s = suffix_logsum[i0] - nt * lxm
            if s <= 0.0:
                gammas[j] = np.inf
                ks[j] = np.inf
                continue
            a = nt / s
            gammas[j] = 1.0 + a
            d = 0.0
            inv = 1.0 / nt
            for p in range(nt):
                cdf = 1.0 - math.exp(-a * (ln_x[i0 + p] - lxm))
                lo = abs(cdf - p * inv)
                hi = abs(cdf - (p + 1.0) * inv)
                if lo > d:
                    d = lo
                if hi > d:
                    d = hi
            ks[j] = d
        return gammas, ks

    return {
        "cohort_fixed": cohort_fixed,
        "cohort_twopoint": cohort_twopoint,
        "cohort_lognormal": cohort_lognormal,
        "autoks": autoks,
    }


def _jit(name: str):
    if not _jitted:
        _jitted.update(_build_jitted())
    return _jitted[name]


def _useed(seed: int) -> np.uint64:
    return np.uint64(seed & MASK64)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def cohort_fixed(beta, lam, s0, n_researchers, seed):
    if use_numba():
        return _jit("cohort_fixed")(beta, lam, s0, n_researchers, _useed(seed))
    return cohort_fixed_np(beta, lam, s0, n_researchers, seed)


def cohort_twopoint(beta, v0, v1, p0, s0, n_researchers, seed):
    if use_numba():
        return _jit("cohort_twopoint")(beta, v0, v1, p0, s0, n_researchers, _useed(seed))
    return cohort_twopoint_np(beta, v0, v1, p0, s0, n_researchers, seed)


def cohort_lognormal(beta, mu, sigma, s0, n_researchers, seed):
    if use_numba():
        return _jit("cohort_lognormal")(beta, mu, sigma, s0, n_researchers, _useed(seed))
    return cohort_lognormal_np(beta, mu, sigma, s0, n_researchers, seed)


def autoks_scan(ln_x, suffix_logsum, starts):
    if use_numba():
        return _jit("autoks")(ln_x, suffix_logsum, starts)
    return autoks_np(ln_x, suffix_logsum, starts)
