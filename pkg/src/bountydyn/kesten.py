"""Multiplicative reward cascades with geometric stopping.

A researcher starts from a base reward ``s0``. Each successive discovery
multiplies the running reward by a random factor, and after every discovery
the researcher continues with probability ``beta``. The model exposes the
rank-k payoff identities, both the exact and the regime-limit CCDF of the
career total, and cohort simulation over independent splitmix64 substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from ._kernels import (
    _CRIT_TOL,
    cohort_fixed,
    cohort_lognormal,
    cohort_twopoint,
)
from ._rng import stream_unit, substream_seed

__all__ = [
    "FixedLambda",
    "TwoPointLambda",
    "LogNormalLambda",
    "LambdaSpec",
    "lambda_spec_to_dict",
    "ModelParams",
    "Regime",
    "RegimeConstants",
    "Trajectory",
    "Cohort",
    "CRIT_TOL",
    "classify_regime",
    "regime_constants",
    "rank_stop_pmf",
    "cumulative_reward",
    "expected_payoff",
    "exact_ccdf",
    "regime_ccdf",
    "weibull_central_ccdf",
    "fit_weibull_central",
    "WeibullFit",
    "simulate_trajectory",
    "simulate_cohort",
]

from .errors import ValidationError

CRIT_TOL = _CRIT_TOL


@dataclass(frozen=True)
class FixedLambda:
    """Deterministic multiplicative factor."""

    value: float

    def __post_init__(self):
        if not (self.value > 0.0) or not math.isfinite(self.value):
            raise ValidationError("lambda values must be > 0")

    def mean(self) -> float:
        return self.value


@dataclass(frozen=True)
class TwoPointLambda:
    """Factor drawn from {values[0], values[1]} with probs (p0, p1)."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.values) != 2 or len(self.probs) != 2:
            raise ValidationError("two-point factor needs exactly two values and two probabilities")
        for v in self.values:
            if not (v > 0.0) or not math.isfinite(v):
                raise ValidationError("lambda values must be > 0")
        for p in self.probs:
            if not (0.0 <= p <= 1.0):
                raise ValidationError("probabilities must lie in [0, 1]")
        if abs(self.probs[0] + self.probs[1] - 1.0) > 1e-12:
            raise ValidationError("probabilities must sum to 1")

    def mean(self) -> float:
        return self.values[0] * self.probs[0] + self.values[1] * self.probs[1]


@dataclass(frozen=True)
class LogNormalLambda:
    """Factor exp(mu + sigma * Z), Z standard normal."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValidationError("mu must be finite")
        if not (self.sigma > 0.0) or not math.isfinite(self.sigma):
            raise ValidationError("sigma must be > 0")

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)


LambdaSpec = Union[FixedLambda, TwoPointLambda, LogNormalLambda]


def lambda_spec_to_dict(spec: LambdaSpec) -> dict:
    """JSON-friendly description of a factor spec."""
    if isinstance(spec, FixedLambda):
        return {"kind": "fixed", "value": spec.value}
    if isinstance(spec, TwoPointLambda):
        return {"kind": "two-point", "values": list(spec.values), "probs": list(spec.probs)}
    if isinstance(spec, LogNormalLambda):
        return {"kind": "lognormal", "mu": spec.mu, "sigma": spec.sigma}
    raise ValidationError("lam must be a number or a factor spec")


@dataclass(frozen=True)
class ModelParams:
    """Reward-cascade parameters.

    ``lam`` accepts a plain float (wrapped into :class:`FixedLambda`) or any
    factor spec. ``beta`` is the per-discovery continuation probability.
    """

    beta: float
    lam: LambdaSpec
    s0: float = 1.0

    def __post_init__(self):
        if isinstance(self.lam, (int, float)):
            object.__setattr__(self, "lam", FixedLambda(float(self.lam)))
        elif not isinstance(self.lam, (FixedLambda, TwoPointLambda, LogNormalLambda)):
            raise ValidationError("lam must be a number or a factor spec")
        if not (self.beta >= 0.0):
            raise ValidationError("beta must be >= 0")
        if not (self.beta < 1.0):
            raise ValidationError("beta must be < 1")
        if not (self.s0 > 0.0) or not math.isfinite(self.s0):
            raise ValidationError("s0 must be > 0")

    @property
    def is_fixed(self) -> bool:
        return isinstance(self.lam, FixedLambda)

    def fixed_value(self) -> float:
        """The single factor value; defined only for homogeneous factors."""
        if not self.is_fixed:
            raise ValidationError("regime undefined for heterogeneous factors")
        return self.lam.value


class Regime(Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def classify_regime(lam) -> Regime:
    """Classify a factor: contracting, critical (within CRIT_TOL), expanding.

    Accepts a float, a FixedLambda, or ModelParams with a fixed factor.
    Heterogeneous factor specs have no single regime and raise.
    """
    if isinstance(lam, ModelParams):
        value = lam.fixed_value()
    elif isinstance(lam, FixedLambda):
        value = lam.value
    elif isinstance(lam, (TwoPointLambda, LogNormalLambda)):
        raise ValidationError("regime undefined for heterogeneous factors")
    else:
        value = float(lam)
        if not (value > 0.0):
            raise ValidationError("lambda values must be > 0")
    if abs(value - 1.0) <= CRIT_TOL:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if value < 1.0 else Regime.SUPERCRITICAL


@dataclass(frozen=True)
class RegimeConstants:
    """Closed-form constants of the career-total tail in each regime.

    Subcritical: bounded support [0, s_max), shape exponent ``c``.
    Critical: exponential tail with rate ``|ln beta| / s0`` (c is nan and
    both support constants are infinite).
    Supercritical: power-law tail with exponent ``mu`` (and c == mu).
    """

    regime: Regime
    beta: float
    lam: float
    s0: float
    c: float
    s_max: float
    s_star: float
    mu: float | None

    def to_dict(self) -> dict:
        def _num(x):
            if x is None or not math.isfinite(x):
                return None
            return x

        return {
            "regime": self.regime.value,
            "beta": self.beta,
            "lambda": self.lam,
            "s0": self.s0,
            "c": _num(self.c),
            "s_max": _num(self.s_max),
            "s_star": _num(self.s_star),
            "mu": _num(self.mu),
        }


def regime_constants(params: ModelParams) -> RegimeConstants:
    beta = params.beta
    lam = params.fixed_value()
    s0 = params.s0
    if beta == 0.0:
        raise ValidationError("degenerate: process always stops at 0")
    regime = classify_regime(lam)
    if regime is Regime.CRITICAL:
        return RegimeConstants(regime, beta, lam, s0, math.nan, math.inf, math.inf, None)
    if regime is Regime.SUBCRITICAL:
        c = math.log(beta) / math.log(lam)
        s_max = s0 * lam / (1.0 - lam)
        return RegimeConstants(regime, beta, lam, s0, c, s_max, math.inf, None)
    mu = -math.log(beta) / math.log(lam)
    s_star = s0 * lam / (lam - 1.0)
    return RegimeConstants(regime, beta, lam, s0, mu, math.inf, s_star, mu)


def rank_stop_pmf(beta: float, n_max: int) -> np.ndarray:
    """P(exactly k discoveries) for k = 0..n_max: (1 - beta) * beta**k."""
    if not (0.0 <= beta < 1.0):
        raise ValidationError("beta must be >= 0 and < 1")
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    k = np.arange(n_max + 1, dtype=np.float64)
    return (1.0 - beta) * np.power(beta, k)


def _geom_sum(lam: float, s0: float, n):
    """s0 * (lam + lam^2 + ... + lam^n), stable through the critical point."""
    n_arr = np.asarray(n, dtype=np.float64)
    if abs(lam - 1.0) <= CRIT_TOL:
        return s0 * n_arr
    return s0 * lam * np.expm1(n_arr * math.log(lam)) / (lam - 1.0)


def cumulative_reward(params: ModelParams, n):
    """Career total after exactly n discoveries (homogeneous factor only)."""
    lam = params.fixed_value()
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ValidationError("n must be >= 0")
    out = _geom_sum(lam, params.s0, n_arr)
    return float(out) if np.isscalar(n) else out


def expected_payoff(params: ModelParams, k):
    """Unconditional rank-k payoff: P(stop at k) times the rank-k total."""
    s_k = cumulative_reward(params, k)
    k_arr = np.asarray(k, dtype=np.float64)
    w = np.power(params.beta, k_arr) * (1.0 - params.beta)
    out = w * s_k
    return float(out) if np.isscalar(k) else out


def _min_rank_reaching(beta: float, lam: float, s0: float, s: np.ndarray):
    """Smallest n with S_n >= s, elementwise; -1 marks unreachable targets.

    Closed-form inversion plus an exact correction loop, so float atoms
    S_n map back to exactly n.
    """
    m = np.zeros(s.shape, dtype=np.int64)
    reachable = np.ones(s.shape, dtype=bool)
    pos = s > 0.0
    if abs(lam - 1.0) <= CRIT_TOL:
        est = s / s0
    else:
        arg = 1.0 + s * (lam - 1.0) / (s0 * lam)
        if lam < 1.0:
            reachable = arg > 0.0
        est = np.zeros(s.shape, dtype=np.float64)
        ok = pos & reachable
        with np.errstate(divide="ignore"):
            est[ok] = np.log(arg[ok]) / math.log(lam)
    work = pos & reachable
    m[work] = np.maximum(np.ceil(est[work]).astype(np.int64) - 2, 0)
    while True:
        under = work & (_geom_sum(lam, s0, m) < s)
        if not under.any():
            break
        m[under] += 1
    m[~reachable] = -1
    return m


def exact_ccdf(params: ModelParams, s):
    """P(career total >= s) under the exact finite-rank distribution.

    Right-closed at the support atoms: evaluating at S_n returns beta**n.
    """
    lam = params.fixed_value()
    beta = params.beta
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if beta == 0.0:
        out = np.where(s_arr <= 0.0, 1.0, 0.0)
    else:
        m = _min_rank_reaching(beta, lam, params.s0, s_arr)
        out = np.where(m < 0, 0.0, np.power(beta, m.astype(np.float64)))
        out = np.where(s_arr <= 0.0, 1.0, out)
    return float(out[0]) if np.isscalar(s) or np.ndim(s) == 0 else out


def regime_ccdf(params: ModelParams, s):
    """Large-n limit CCDF for the regime of the (homogeneous) factor.

    Subcritical factors bound the total by s_max; evaluating past that
    bound is a validation error rather than a silent zero.
    """
    beta = params.beta
    s0 = params.s0
    lam = params.fixed_value()
    if beta == 0.0:
        raise ValidationError("degenerate: process always stops at 0")
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if np.any(s_arr < 0.0):
        raise ValidationError("reward must be >= 0")
    regime = classify_regime(lam)
    if regime is Regime.CRITICAL:
        out = (1.0 - beta) * np.exp(math.log(beta) * s_arr / s0)
    elif regime is Regime.SUBCRITICAL:
        consts = regime_constants(params)
        if np.any(s_arr > consts.s_max):
            raise ValidationError("beyond maximum possible reward")
        out = (1.0 - beta) * np.power(1.0 - s_arr / consts.s_max, consts.c)
    else:
        consts = regime_constants(params)
        out = np.power(1.0 + s_arr / consts.s_star, -consts.mu)
    return float(out[0]) if np.isscalar(s) or np.ndim(s) == 0 else out


@dataclass(frozen=True)
class WeibullFit:
    """Stretched-exponential fit exp(-(s/scale)**shape) to a CCDF body."""

    shape: float
    scale: float

    def ccdf(self, s):
        return weibull_central_ccdf(s, self.shape, self.scale)


def weibull_central_ccdf(s, shape: float, scale: float):
    s_arr = np.asarray(s, dtype=np.float64)
    out = np.exp(-np.power(s_arr / scale, shape))
    return float(out) if np.isscalar(s) else out


def fit_weibull_central(params: ModelParams, n_grid: int = 200) -> WeibullFit:
    """Least-squares Weibull fit to the central body of a subcritical CCDF.

    Fits log(-log CCDF) against log s on an even grid over
    [0.1 * s_max, 0.7 * s_max], where the bounded-support law is well
    approximated by a stretched exponential.
    """
    if classify_regime(params.fixed_value()) is not Regime.SUBCRITICAL:
        raise ValidationError("central fit requires a contracting factor")
    if n_grid < 2:
        raise ValidationError("n_grid must be >= 2")
    consts = regime_constants(params)
    grid = np.linspace(0.1 * consts.s_max, 0.7 * consts.s_max, n_grid)
    ccdf = exact_ccdf(params, grid)
    y = np.log(-np.log(ccdf))
    x = np.log(grid)
    slope, intercept = np.polyfit(x, y, 1)
    shape = float(slope)
    scale = float(math.exp(-intercept / shape))
    return WeibullFit(shape=shape, scale=scale)


@dataclass(frozen=True)
class Trajectory:
    """One researcher's career: per-rank rewards and their running total.

    ``seed`` is the trajectory's own stream seed; cohort members record the
    substream seed they were assigned.
    """

    params: ModelParams
    seed: int
    n_discoveries: int
    rewards: tuple
    total: float


def _draw_factor(params: ModelParams, seed: int, k: int) -> float:
    lam = params.lam
    if isinstance(lam, FixedLambda):
        return lam.value
    if isinstance(lam, TwoPointLambda):
        u = stream_unit(seed, k)
        return lam.values[0] if u < lam.probs[0] else lam.values[1]
    ua = stream_unit(seed, 2 * k - 1)
    ub = stream_unit(seed, 2 * k)
    z = math.sqrt(-2.0 * math.log(ua)) * math.cos(2.0 * math.pi * ub)
    return math.exp(lam.mu + lam.sigma * z)


def simulate_trajectory(params: ModelParams, seed: int) -> Trajectory:
    beta = params.beta
    if beta == 0.0:
        n = 0
    else:
        u0 = stream_unit(seed, 0)
        n = int(math.floor(math.log(u0) / math.log(beta)))
    rewards = []
    r = params.s0
    total = 0.0
    for k in range(1, n + 1):
        r *= _draw_factor(params, seed, k)
        rewards.append(r)
        total += r
    return Trajectory(
        params=params, seed=seed, n_discoveries=n, rewards=tuple(rewards), total=total
    )


class Cohort(Sequence):
    """Simulated cohort; indexing re-materializes a full Trajectory."""

    def __init__(self, params: ModelParams, seed: int, n_discoveries, totals):
        self.params = params
        self.seed = seed
        self.n_discoveries = n_discoveries
        self.totals = totals

    def __len__(self) -> int:
        return self.totals.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        if not isinstance(i, (int, np.integer)):
            raise TypeError("cohort indices must be integers")
        n = len(self)
        if i < 0:
            i += n
        if not (0 <= i < n):
            raise IndexError("cohort index out of range")
        return simulate_trajectory(self.params, substream_seed(self.seed, i))

    def __repr__(self) -> str:
        return f"Cohort(n={len(self)}, seed={self.seed})"


def simulate_cohort(params: ModelParams, n_researchers: int, seed: int) -> Cohort:
    """Simulate independent researchers on substreams of ``seed``.

    Heavy path; runs through the numba kernels unless BD_NUMBA disables them.
    """
    if n_researchers < 1:
        raise ValidationError("n_researchers must be >= 1")
    lam = params.lam
    if isinstance(lam, FixedLambda):
        n, totals = cohort_fixed(params.beta, lam.value, params.s0, n_researchers, seed)
    elif isinstance(lam, TwoPointLambda):
        n, totals = cohort_twopoint(
            params.beta,
            lam.values[0],
            lam.values[1],
            lam.probs[0],
            params.s0,
            n_researchers,
            seed,
        )
    else:
        n, totals = cohort_lognormal(
            params.beta, lam.mu, lam.sigma, params.s0, n_researchers, seed
        )
    return Cohort(params, seed, n, totals)
