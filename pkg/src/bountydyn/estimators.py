"""Tail, scaling, and activity estimators.

Everything here is distribution-side: continuous power-law tails with
Hill-style MLE and a KS-minimizing xmin scan, percentile bootstrap CIs,
logarithmic binning, log-log OLS scaling fits, exponential rate fits with a
parametric-bootstrap KS test, and the across-program activity decay curve.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._kernels import autoks_scan
from .errors import ValidationError

__all__ = [
    "PowerLawFit",
    "FixedXmin",
    "AutoKS",
    "fit_power_law_mle",
    "bootstrap_ci",
    "LogBins",
    "log_binned_means",
    "ScalingFit",
    "fit_loglog_ols",
    "ExponentialFit",
    "fit_exponential_rate",
    "DecayCurve",
    "activity_decay_curve",
    "fit_decay_exponent",
]

_MIN_TAIL = 10


def _as_positive_sample(x, what: str = "sample") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError(f"domain error: empty {what}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValidationError(f"domain error: {what} must be finite and > 0")
    return arr


@dataclass(frozen=True)
class FixedXmin:
    """Fit the tail at a caller-chosen cutoff."""

    xmin: float

    def __post_init__(self):
        if not (self.xmin > 0.0) or not math.isfinite(self.xmin):
            raise ValidationError("domain error: xmin must be finite and > 0")


@dataclass(frozen=True)
class AutoKS:
    """Scan every distinct sample value as a cutoff, keep the KS minimizer."""


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    xmin: float
    n_tail: int
    ks: float
    method: str
    ci: tuple | None = None

    def with_ci(self, ci) -> "PowerLawFit":
        return dataclasses.replace(self, ci=(float(ci[0]), float(ci[1])))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "xmin": self.xmin,
            "n_tail": self.n_tail,
            "ks": self.ks,
            "method": self.method,
            "ci": list(self.ci) if self.ci is not None else None,
        }


def _tail_gamma_ks(ln_tail: np.ndarray, lxm: float):
    """Hill MLE plus two-sided KS distance on an ascending log-tail,
    anchored at log-cutoff ``lxm``."""
    nt = ln_tail.shape[0]
    s = float(np.sum(ln_tail) - nt * lxm)
    if s <= 0.0:
        return None
    a = nt / s
    cdf = 1.0 - np.exp(-a * (ln_tail - lxm))
    inv = 1.0 / nt
    steps = np.arange(nt, dtype=np.float64)
    d_lo = np.abs(cdf - steps * inv).max()
    d_hi = np.abs(cdf - (steps + 1.0) * inv).max()
    return 1.0 + a, float(max(d_lo, d_hi))


def fit_power_law_mle(x, rule=None) -> PowerLawFit:
    """Continuous power-law tail fit; CCDF ~ (x/xmin)^-(gamma-1) above xmin.

    ``rule`` is FixedXmin, AutoKS, a bare float (treated as FixedXmin), or
    None for AutoKS. The tail is right-closed: points equal to xmin count.
    """
    arr = _as_positive_sample(x)
    if rule is None:
        rule = AutoKS()
    elif isinstance(rule, (int, float)):
        rule = FixedXmin(float(rule))

    if isinstance(rule, FixedXmin):
        tail = np.sort(arr[arr >= rule.xmin])
        if tail.size == 0:
            raise ValidationError("insufficient tail: no points at or above xmin")
        got = _tail_gamma_ks(np.log(tail), math.log(rule.xmin))
        if got is None:
            raise ValidationError("degenerate tail: all tail values equal xmin")
        gamma, ks = got
        return PowerLawFit(
            gamma=gamma, xmin=rule.xmin, n_tail=int(tail.size), ks=ks, method="fixed"
        )

    if not isinstance(rule, AutoKS):
        raise ValidationError("rule must be FixedXmin, AutoKS, or a number")

    srt = np.sort(arr)
    n = srt.shape[0]
    _, first = np.unique(srt, return_index=True)
    starts = first[(n - first) >= _MIN_TAIL].astype(np.int64)
    if starts.size == 0:
        raise ValidationError(
            f"insufficient tail: need at least {_MIN_TAIL} points above some cutoff"
        )
    ln_x = np.log(srt)
    suffix_logsum = np.cumsum(ln_x[::-1])[::-1]
    gammas, ks = autoks_scan(ln_x, suffix_logsum, starts)
    if not np.any(np.isfinite(ks)):
        raise ValidationError("degenerate tail: all candidate tails are constant")
    j = int(np.argmin(ks))  # ties resolve to the smallest xmin (starts ascend)
    i0 = int(starts[j])
    return PowerLawFit(
        gamma=float(gammas[j]),
        xmin=float(srt[i0]),
        n_tail=n - i0,
        ks=float(ks[j]),
        method="autoks",
    )


def bootstrap_ci(x, fit: PowerLawFit, n_boot: int = 200, seed: int = 0):
    """95% percentile bootstrap CI for gamma, resampling the fitted tail.

    The cutoff stays fixed at ``fit.xmin``; replicates re-estimate gamma
    only, so the interval reflects tail-sampling noise, not cutoff choice.
    """
    if n_boot < 100:
        raise ValidationError("too few replicates: n_boot must be >= 100")
    arr = _as_positive_sample(x)
    tail = arr[arr >= fit.xmin]
    if tail.size == 0:
        raise ValidationError("insufficient tail: no points at or above xmin")
    ln_rel = np.log(tail) - math.log(fit.xmin)
    nt = ln_rel.shape[0]
    rng = np.random.default_rng(seed)
    gammas = np.empty(n_boot, dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(nt, 1)))
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        idx = rng.integers(0, nt, size=(m, nt))
        s = ln_rel[idx].sum(axis=1)
        with np.errstate(divide="ignore"):
            gammas[done : done + m] = 1.0 + nt / s
        done += m
    lo, hi = np.percentile(gammas, [2.5, 97.5])
    return float(lo), float(hi)


@dataclass(frozen=True)
class LogBins:
    centers: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    edges: np.ndarray


def log_binned_means(x, y, bins_per_decade: int = 5) -> LogBins:
    """Mean of ``y`` inside geometric bins of ``x``.

    Edges sit at integer powers of 10**(1/bins_per_decade). Bins are
    left-closed, the last one right-closed; empty bins are dropped and
    centers are the geometric midpoints of the surviving edges.
    """
    if bins_per_decade < 1:
        raise ValidationError("bins_per_decade must be >= 1")
    x_arr = _as_positive_sample(x, "x")
    y_arr = np.asarray(y, dtype=np.float64).ravel()
    if y_arr.shape[0] != x_arr.shape[0]:
        raise ValidationError("x and y must have the same length")
    if not np.all(np.isfinite(y_arr)):
        raise ValidationError("domain error: y must be finite")

    lo = np.log10(x_arr.min()) * bins_per_decade
    hi = np.log10(x_arr.max()) * bins_per_decade
    k0 = int(math.floor(lo + 1e-9))
    k1 = int(math.ceil(hi - 1e-9))
    if k1 <= k0:
        k1 = k0 + 1
    edges = np.power(10.0, np.arange(k0, k1 + 1, dtype=np.float64) / bins_per_decade)
    # float guard: make sure the extremes actually fall inside the edge span
    if edges[0] > x_arr.min():
        edges[0] = x_arr.min()
    if edges[-1] < x_arr.max():
        edges[-1] = x_arr.max()

    nbins = edges.shape[0] - 1
    idx = np.searchsorted(edges, x_arr, side="right") - 1
    idx[idx == nbins] = nbins - 1  # top edge is right-closed
    counts = np.bincount(idx, minlength=nbins)
    sums = np.bincount(idx, weights=y_arr, minlength=nbins)
    keep = counts > 0
    centers = np.sqrt(edges[:-1] * edges[1:])
    return LogBins(
        centers=centers[keep],
        means=sums[keep] / counts[keep],
        counts=counts[keep],
        edges=edges,
    )


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    pvalue: float
    n: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "stderr": self.stderr,
            "pvalue": self.pvalue,
            "n": self.n,
        }


def fit_loglog_ols(x, y) -> ScalingFit:
    """OLS of ln y on ln x; slope is the scaling exponent."""
    x_arr = _as_positive_sample(x, "x")
    y_arr = _as_positive_sample(y, "y")
    if y_arr.shape[0] != x_arr.shape[0]:
        raise ValidationError("x and y must have the same length")
    if x_arr.shape[0] < 3:
        raise ValidationError("underdetermined: need at least three points")
    if np.unique(x_arr).size < 2:
        raise ValidationError("underdetermined: need at least two distinct x values")
    res = stats.linregress(np.log(x_arr), np.log(y_arr))
    return ScalingFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r2=float(res.rvalue**2),
        stderr=float(res.stderr),
        pvalue=float(res.pvalue),
        n=int(x_arr.shape[0]),
    )


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    ks: float
    p_value: float
    n: int

    def to_dict(self) -> dict:
        return {"rate": self.rate, "ks": self.ks, "p_value": self.p_value, "n": self.n}


def _exp_ks(sorted_x: np.ndarray, rate: float) -> float:
    n = sorted_x.shape[0]
    cdf = -np.expm1(-rate * sorted_x)
    steps = np.arange(n, dtype=np.float64) / n
    d_lo = np.abs(cdf - steps).max()
    d_hi = np.abs(cdf - (steps + 1.0 / n)).max()
    return float(max(d_lo, d_hi))


def fit_exponential_rate(interarrivals, n_boot: int = 1000, seed: int = 0) -> ExponentialFit:
    """MLE exponential rate (1/mean) with a parametric-bootstrap KS p-value.

    Each replicate is drawn from the fitted law and refit before its KS
    distance is measured, so the p-value accounts for the estimated rate.
    """
    if n_boot < 100:
        raise ValidationError("too few replicates: n_boot must be >= 100")
    arr = _as_positive_sample(interarrivals, "interarrivals")
    rate = 1.0 / float(np.mean(arr))
    d_obs = _exp_ks(np.sort(arr), rate)
    n = arr.shape[0]
    rng = np.random.default_rng(seed)
    exceed = 0
    chunk = max(1, int(4_000_000 // max(n, 1)))
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        sim = rng.exponential(scale=1.0 / rate, size=(m, n))
        sim.sort(axis=1)
        rates_b = 1.0 / sim.mean(axis=1)
        cdf = -np.expm1(-rates_b[:, None] * sim)
        steps = np.arange(n, dtype=np.float64) / n
        d_lo = np.abs(cdf - steps[None, :]).max(axis=1)
        d_hi = np.abs(cdf - (steps[None, :] + 1.0 / n)).max(axis=1)
        d_b = np.maximum(d_lo, d_hi)
        exceed += int(np.count_nonzero(d_b >= d_obs))
        done += m
    p = (exceed + 1.0) / (n_boot + 1.0)
    return ExponentialFit(rate=rate, ks=d_obs, p_value=p, n=n)


@dataclass(frozen=True)
class DecayCurve:
    """Across-program activity profile by time since each program's launch."""

    t: np.ndarray
    values: np.ndarray
    n_covering: np.ndarray
    bin_width: float
    statistic: str


def activity_decay_curve(
    event_times_by_program, bin_width: float = 7.0, statistic: str = "median"
) -> DecayCurve:
    """Normalized activity share per post-launch time bin, pooled by rank.

    Inputs are per-program event times in days (any common origin). Each
    program is re-anchored to its first event, events are counted in bins of
    ``bin_width`` days, and shares are each program's bin count divided by
    its event total. A program covers bin k while k*bin_width is at most its
    observed span; bins kept must be covered by at least min(3, n_programs)
    programs. ``values`` is the median (or mean) share across covering
    programs; ``t`` holds bin midpoints in days.
    """
    if statistic not in ("median", "mean"):
        raise ValidationError("statistic must be 'median' or 'mean'")
    if not (bin_width > 0.0) or not math.isfinite(bin_width):
        raise ValidationError("bin_width must be > 0")

    per_program = []
    spans = []
    for times in event_times_by_program:
        t_arr = np.asarray(times, dtype=np.float64).ravel()
        if t_arr.size == 0:
            continue
        if not np.all(np.isfinite(t_arr)):
            raise ValidationError("domain error: event times must be finite")
        rel = t_arr - t_arr.min()
        bins = np.floor(rel / bin_width).astype(np.int64)
        counts = np.bincount(bins)
        per_program.append(counts / t_arr.size)
        spans.append(rel.max())
    if not per_program:
        raise ValidationError("no programs")

    n_prog = len(per_program)
    need = min(3, n_prog)
    max_covered = [int(math.floor(span / bin_width)) for span in spans]
    n_bins = max(mc for mc in max_covered) + 1

    t_out, v_out, c_out = [], [], []
    for k in range(n_bins):
        shares = [
            shares_p[k] if k < shares_p.shape[0] else 0.0
            for shares_p, mc in zip(per_program, max_covered)
            if mc >= k
        ]
        if len(shares) < need:
            continue
        stat = np.median(shares) if statistic == "median" else float(np.mean(shares))
        t_out.append((k + 0.5) * bin_width)
        v_out.append(float(stat))
        c_out.append(len(shares))
    if not t_out:
        raise ValidationError("no programs")
    return DecayCurve(
        t=np.asarray(t_out),
        values=np.asarray(v_out),
        n_covering=np.asarray(c_out, dtype=np.int64),
        bin_width=float(bin_width),
        statistic=statistic,
    )


def fit_decay_exponent(curve: DecayCurve) -> ScalingFit:
    """Log-log OLS on the decay curve, skipping the launch bin.

    The first bin mixes the launch burst with the decay proper, so the fit
    starts at the second kept bin; non-positive shares cannot enter a log
    fit and are dropped.
    """
    t = curve.t[1:]
    v = curve.values[1:]
    keep = v > 0.0
    if int(np.count_nonzero(keep)) < 3:
        raise ValidationError("underdetermined: need at least three positive bins")
    return fit_loglog_ols(t[keep], v[keep])
