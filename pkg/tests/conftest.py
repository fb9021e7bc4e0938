"""Shared fixtures.

The accelerated kernels compile on first use, which would otherwise land
inside whichever timed test happens to run first. Tests with runtime
budgets request ``warm_kernels`` so compilation stays out of the clock.
"""

from __future__ import annotations

import numpy as np
import pytest

import bountydyn as bd
from bountydyn.estimators import FixedXmin


@pytest.fixture(scope="session")
def warm_kernels():
    bd.simulate_cohort(bd.ModelParams(0.5, 2.0, 1.0), 100, 0)
    bd.simulate_cohort(
        bd.ModelParams(0.5, bd.TwoPointLambda((0.5, 2.0), (0.5, 0.5)), 1.0), 100, 0
    )
    bd.simulate_cohort(bd.ModelParams(0.5, bd.LogNormalLambda(0.0, 0.25), 1.0), 100, 0)
    x = np.random.default_rng(0).random(200) ** -1.0
    bd.fit_power_law_mle(x)
    bd.fit_power_law_mle(x, rule=FixedXmin(1.0))


@pytest.fixture
def pareto_oracle():
    """10^5 draws with CCDF x^-0.63 on [1, inf), i.e. gamma = 1.63."""
    u = np.random.default_rng(163).random(100_000)
    return u ** (-1.0 / 0.63)
