"""Design construction, OLS, robust errors, and the four-model battery."""

from __future__ import annotations

import math

import numpy as np
import pytest

import bountydyn as bd
from bountydyn.errors import NumericalError, ValidationError


def make_panel(n_programs=101, n_months=12, beta_dp=-1.2, noise=1.5, seed=8):
    """Planted panel: v = round(25 + beta_dp*dp + 2a + 1.5b + 0.1t + eps)."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(5.0, 14.0, n_programs)
    b = rng.uniform(4.0, 8.0, n_programs)
    dp = rng.integers(0, 6, n_months)
    nb = np.where(dp > 0, rng.uniform(100.0, 900.0, n_months), 0.0)
    rows = []
    for i in range(n_programs):
        for t in range(n_months):
            eps = rng.normal(0.0, noise)
            v = 25.0 + beta_dp * dp[t] + 2.0 * a[i] + 1.5 * b[i] + 0.1 * t + eps
            rows.append(
                bd.PanelObservation(
                    program_id=f"p{i:03d}",
                    month_index=t,
                    v_it=max(0, int(round(v))),
                    dp_t=int(dp[t]),
                    t_it=t,
                    a_i=float(a[i]),
                    b_i=float(b[i]),
                    nb_t=float(nb[t]),
                )
            )
    return rows


class TestBuildDesign:
    def test_model1_columns(self):
        rows = make_panel(1, 2)
        design = bd.build_design(rows, bd.RegressionSpec.for_model(1))
        assert design.X.shape == (2, 5)
        assert design.columns == ("dp_t", "a_i", "b_i", "t_it", "const")

    def test_model2_adds_nb(self):
        rows = make_panel(2, 3)
        design = bd.build_design(rows, bd.RegressionSpec.for_model(2))
        assert design.columns == ("dp_t", "a_i", "b_i", "t_it", "nb_t", "const")

    def test_model3_interaction_is_elementwise_product(self):
        rows = make_panel(3, 6)
        design = bd.build_design(rows, bd.RegressionSpec.for_model(3))
        j = design.columns.index("t_it:dp_t")
        jd = design.columns.index("dp_t")
        jt = design.columns.index("t_it")
        assert np.array_equal(design.X[:, j], design.X[:, jd] * design.X[:, jt])

    def test_model4_dummy_count(self):
        rows = make_panel(5, 4)
        design = bd.build_design(rows, bd.RegressionSpec.for_model(4))
        dummies = [c for c in design.columns if c.startswith("fe:")]
        assert len(dummies) == 4
        assert design.n_programs == 5

    def test_duplicate_cell_rejected(self):
        rows = make_panel(2, 3)
        with pytest.raises(ValidationError, match="panel not unique"):
            bd.build_design(rows + [rows[0]], bd.RegressionSpec.for_model(1))

    def test_constant_regressor_flagged(self):
        rows = make_panel(4, 5)
        frozen = [
            bd.PanelObservation(r.program_id, r.month_index, r.v_it, 3, r.t_it, r.a_i, r.b_i, r.nb_t)
            for r in rows
        ]
        design = bd.build_design(frozen, bd.RegressionSpec.for_model(1))
        assert "dp_t" in design.flagged
        assert any("collinear" in w for w in design.warnings)

    def test_empty_panel(self):
        with pytest.raises(ValidationError, match="no programs"):
            bd.build_design([], bd.RegressionSpec.for_model(1))

    def test_bad_model_id(self):
        with pytest.raises(ValidationError, match="model must be"):
            bd.RegressionSpec.for_model(5)


class TestOlsFit:
    def test_exact_line(self):
        x = np.arange(10.0)
        X = np.column_stack([x, np.ones(10)])
        beta = bd.ols_fit(X, 2.0 + 3.0 * x)
        assert beta == pytest.approx([3.0, 2.0], abs=1e-10)

    def test_orthonormal_design(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(30, 4)))
        y = np.random.default_rng(2).normal(size=30)
        assert bd.ols_fit(q, y) == pytest.approx(q.T @ y, abs=1e-12)

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([rng.normal(size=(400, 3)), np.ones(400)])
        y = rng.normal(size=400)
        beta = bd.ols_fit(X, y)
        resid = y - X @ beta
        assert np.max(np.abs(X.T @ resid)) < 1e-8 * np.linalg.norm(X.T @ y)

    def test_noisy_recovery_within_three_se(self):
        rng = np.random.default_rng(30)
        X = np.column_stack([rng.normal(size=(1200, 2)), np.ones(1200)])
        truth = np.array([1.5, -0.7, 4.0])
        y = X @ truth + rng.normal(0.0, 1.0, 1200)
        beta = bd.ols_fit(X, y)
        se = bd.robust_se(X, y, beta)
        assert np.all(np.abs(beta - truth) <= 3.0 * se)

    def test_wild_column_scales(self):
        # level regressors twenty decades apart must not read as rank loss
        rng = np.random.default_rng(31)
        small = rng.normal(size=800)
        huge = rng.normal(size=800) * 1e20
        X = np.column_stack([small, huge, np.ones(800)])
        truth = np.array([2.0, 3e-20, 1.0])
        y = X @ truth
        beta = bd.ols_fit(X, y)
        assert beta == pytest.approx(truth, rel=1e-8)
        se = bd.robust_se(X, y + 1e-3 * rng.normal(size=800), beta)
        assert np.all(np.isfinite(se))

    def test_singular_design(self):
        x = np.arange(12.0)
        X = np.column_stack([x, 2.0 * x, np.ones(12)])
        with pytest.raises(NumericalError, match="singular design"):
            bd.ols_fit(X, x)

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            bd.ols_fit(np.ones((3, 2)), np.ones(4))


class TestRobustSe:
    def test_zero_residuals_zero_se(self):
        x = np.arange(1.0, 21.0)
        X = np.column_stack([x, np.ones(20)])
        y = 5.0 * x - 2.0
        beta = bd.ols_fit(X, y)
        assert bd.robust_se(X, y, beta) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_residual_scaling_homogeneity(self):
        rng = np.random.default_rng(12)
        X = np.column_stack([rng.normal(size=(50, 2)), np.ones(50)])
        beta = np.array([1.0, 2.0, 3.0])
        e = rng.normal(size=50)
        se1 = bd.robust_se(X, X @ beta + e, beta)
        se3 = bd.robust_se(X, X @ beta + 3.0 * e, beta)
        assert se3 == pytest.approx(3.0 * se1, rel=1e-9)

    def test_homoskedastic_matches_classical(self):
        rng = np.random.default_rng(13)
        X = np.column_stack([rng.normal(size=(20_000, 2)), np.ones(20_000)])
        beta_true = np.array([1.0, -1.0, 0.5])
        y = X @ beta_true + rng.normal(0.0, 2.0, 20_000)
        beta = bd.ols_fit(X, y)
        robust = bd.robust_se(X, y, beta)
        resid = y - X @ beta
        s2 = resid @ resid / (20_000 - 3)
        classical = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
        assert robust == pytest.approx(classical, rel=0.05)

    def test_degrees_of_freedom_exhausted(self):
        X = np.eye(3)
        beta = bd.ols_fit(X, np.arange(3.0))
        with pytest.raises(ValidationError, match="degrees of freedom"):
            bd.robust_se(X, np.arange(3.0), beta)


class TestRunModels:
    def test_planted_recovery(self):
        rows = make_panel()
        results = bd.run_models(rows)
        m1 = results[0]
        assert m1.n == 1212
        assert abs(m1.coefficients["dp_t"] - (-1.2)) <= 2.0 * m1.se["dp_t"]
        for name, truth in [("a_i", 2.0), ("b_i", 1.5), ("t_it", 0.1)]:
            assert abs(m1.coefficients[name] - truth) <= 3.0 * m1.se[name]

    def test_r2_ordering_with_fe(self):
        results = bd.run_models(make_panel())
        assert results[3].r2 >= results[2].r2

    def test_fe_matches_within_transform(self):
        rows = make_panel()
        m4 = bd.run_models(rows, models=(4,))[0]
        within = bd.within_fit(rows, bd.RegressionSpec.for_model(4))
        assert m4.fe_absorbed
        for name, slope in within.items():
            assert abs(m4.coefficients[name] - slope) <= 1e-8

    def test_fe_absorbs_time_invariant_columns(self):
        m4 = bd.run_models(make_panel(), models=(4,))[0]
        # nan in memory; the JSON view turns these into null.
        assert math.isnan(m4.coefficients["a_i"])
        assert math.isnan(m4.coefficients["b_i"])
        assert any("absorbed" in w for w in m4.warnings)

    def test_row_order_invariance(self):
        rows = make_panel(20, 8)
        shuffled = list(rows)
        np.random.default_rng(0).shuffle(shuffled)
        a = bd.run_models(rows)
        b = bd.run_models(shuffled)
        for ra, rb in zip(a, b):
            assert ra.coefficients == rb.coefficients
            assert ra.se == rb.se
            assert ra.r2 == rb.r2

    def test_interaction_model_column_present(self):
        m3 = bd.run_models(make_panel(), models=(3,))[0]
        assert "t_it:dp_t" in m3.coefficients
        assert m3.se["t_it:dp_t"] > 0


class TestReporting:
    def test_significance_stars(self):
        assert bd.significance_stars(0.005) == "***"
        assert bd.significance_stars(0.03) == "**"
        assert bd.significance_stars(0.07) == "*"
        assert bd.significance_stars(0.2) == ""
        assert bd.significance_stars(0.01) == "**"
        assert bd.significance_stars(0.1) == ""

    def test_stars_match_pvalues(self):
        results = bd.run_models(make_panel())
        for res in results:
            for name, p in res.pvalues.items():
                if p is None:
                    continue
                assert res.stars[name] == bd.significance_stars(p)

    def test_format_table_shape(self):
        results = bd.run_models(make_panel())
        table = bd.format_table(results)
        assert "dp_t" in table
        assert "(1)" in table and "(4)" in table
        # absorbed cells render as a dash, not a number
        lines = [ln for ln in table.splitlines() if ln.strip().startswith("a_i")]
        assert lines and lines[0].rstrip().endswith("-")
