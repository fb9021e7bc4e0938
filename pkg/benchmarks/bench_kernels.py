"""Compare the numba kernels against the pure-numpy fallback.

Runs each hot kernel on both backends, checks that the results agree, and
prints wall times with the speedup. Backend selection works exactly like the
library's: the numpy path is what you get with BD_NUMBA=0.

Usage:
    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeats 3]
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np


def _best_of(fn, repeats: int) -> tuple[float, object]:
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1_000_000, help="trajectories per cohort")
    parser.add_argument("--repeats", type=int, default=3, help="timed repeats; best is reported")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    from bountydyn import _kernels
    from bountydyn._backend import use_numba

    n, seed, repeats = args.n, args.seed, args.repeats

    # tail sample for the xmin scan: continuous totals, so nearly every value
    # is a distinct candidate cutoff
    os.environ["BD_NUMBA"] = "0"
    _, scan_sample = _kernels.cohort_lognormal(0.5, 0.0, 0.25, 1.0, 50_000, seed)
    scan_sample = np.sort(scan_sample[scan_sample > 0.0])
    uniq, first = np.unique(scan_sample, return_index=True)
    ln_sorted = np.log(scan_sample)
    suffix = np.cumsum(ln_sorted[::-1])[::-1]
    keep = (scan_sample.size - first) >= 10
    cand_idx = first[keep].astype(np.int64)

    cases = [
        ("cohort_fixed", lambda: _kernels.cohort_fixed(0.5, 2.0, 1.0, n, seed)),
        (
            "cohort_twopoint",
            lambda: _kernels.cohort_twopoint(0.5, 0.5, 2.0, 0.5, 100.0, n, seed),
        ),
        (
            "cohort_lognormal",
            lambda: _kernels.cohort_lognormal(0.5, 0.0, 0.25, 1.0, n, seed),
        ),
        (
            "autoks_scan",
            lambda: _kernels.autoks_scan(ln_sorted, suffix, cand_idx),
        ),
    ]

    print(f"n = {n:,} trajectories, best of {repeats}")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>9}   agree")
    for name, fn in cases:
        os.environ["BD_NUMBA"] = "0"
        assert not use_numba()
        t_np, out_np = _best_of(fn, repeats)

        os.environ["BD_NUMBA"] = "1"
        assert use_numba()
        fn()  # compile outside the timed region
        t_nb, out_nb = _best_of(fn, repeats)

        if isinstance(out_np, tuple):
            agree = all(
                np.allclose(a, b, rtol=1e-12, atol=0.0) for a, b in zip(out_np, out_nb)
            )
        else:
            agree = np.allclose(out_np, out_nb, rtol=1e-12, atol=0.0)
        print(
            f"{name:<18} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>8.1f}x   {agree}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
