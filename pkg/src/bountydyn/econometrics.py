"""Panel OLS with heteroskedasticity-robust errors for program regressions.

The design follows a fixed column order so fitted tables line up across
model variants: platform growth, program log-rank, program log-bounty,
program age, then optionally the active-program count, the age x growth
interaction, an intercept, and program dummies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericalError, ValidationError

__all__ = [
    "PanelObservation",
    "RegressionSpec",
    "Design",
    "RegressionResult",
    "build_design",
    "ols_fit",
    "robust_se",
    "run_models",
    "within_fit",
    "significance_stars",
    "format_table",
]

# canonical order of the named (non-dummy) regressors
_BASE_COLS = ("dp_t", "a_i", "b_i", "t_it")
_NB_COL = "nb_t"
_INTER_COL = "t_it:dp_t"
_CONST_COL = "const"


@dataclass(frozen=True)
class PanelObservation:
    """One program-month row of the activity panel."""

    program_id: str
    month_index: int
    v_it: int
    dp_t: int
    t_it: int
    a_i: float
    b_i: float
    nb_t: float


@dataclass(frozen=True)
class RegressionSpec:
    """Which optional regressors enter the model."""

    include_nb: bool = False
    include_interaction: bool = False
    program_fe: bool = False

    @classmethod
    def for_model(cls, model: int) -> "RegressionSpec":
        """Specs 1-4: base, +active programs, +interaction, +program effects."""
        if model == 1:
            return cls()
        if model == 2:
            return cls(include_nb=True)
        if model == 3:
            return cls(include_nb=True, include_interaction=True)
        if model == 4:
            return cls(include_nb=True, include_interaction=True, program_fe=True)
        raise ValidationError("model must be 1, 2, 3, or 4")

    def named_columns(self) -> tuple:
        cols = list(_BASE_COLS)
        if self.include_nb:
            cols.append(_NB_COL)
        if self.include_interaction:
            cols.append(_INTER_COL)
        cols.append(_CONST_COL)
        return tuple(cols)


@dataclass(frozen=True)
class Design:
    X: np.ndarray
    y: np.ndarray
    columns: tuple
    flagged: tuple
    warnings: tuple
    n_programs: int


def build_design(rows, spec: RegressionSpec) -> Design:
    """Assemble the design matrix in canonical row and column order.

    Rows sort by (program_id, month_index) so permuting the input cannot
    change the fit. Collinear columns are kept (callers decide whether to
    prune) but each is flagged with a "collinear column" warning.
    """
    rows = sorted(rows, key=lambda r: (r.program_id, r.month_index))
    if not rows:
        raise ValidationError("no programs")
    for a, b in zip(rows, rows[1:]):
        if a.program_id == b.program_id and a.month_index == b.month_index:
            raise ValidationError(
                f"panel not unique: duplicate ({a.program_id}, {a.month_index})"
            )

    n = len(rows)
    programs = sorted({r.program_id for r in rows})
    pid_arr = np.asarray([r.program_id for r in rows])

    base = {
        "dp_t": np.asarray([r.dp_t for r in rows], dtype=np.float64),
        "a_i": np.asarray([r.a_i for r in rows], dtype=np.float64),
        "b_i": np.asarray([r.b_i for r in rows], dtype=np.float64),
        "t_it": np.asarray([r.t_it for r in rows], dtype=np.float64),
        "nb_t": np.asarray([r.nb_t for r in rows], dtype=np.float64),
    }
    base["t_it:dp_t"] = base["t_it"] * base["dp_t"]

    columns = list(spec.named_columns())
    mats = [base[c] if c != _CONST_COL else np.ones(n) for c in columns]

    if spec.program_fe:
        for pid in programs[1:]:
            columns.append(f"fe:{pid}")
            mats.append((pid_arr == pid).astype(np.float64))

    X = np.column_stack(mats)
    y = np.asarray([r.v_it for r in rows], dtype=np.float64)
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValidationError("domain error: panel values must be finite")

    flagged = []
    warnings = []
    for name, col in zip(columns, mats):
        if name == _CONST_COL or name.startswith("fe:"):
            continue
        if np.ptp(col) == 0.0:
            flagged.append(name)
            warnings.append(f"collinear column: {name} is constant")
            continue
        if spec.program_fe and len(programs) > 1:
            within = all(np.ptp(col[pid_arr == pid]) == 0.0 for pid in programs)
            if within:
                flagged.append(name)
                warnings.append(
                    f"collinear column: {name} is absorbed by program effects"
                )
    return Design(
        X=X,
        y=y,
        columns=tuple(columns),
        flagged=tuple(flagged),
        warnings=tuple(warnings),
        n_programs=len(programs),
    )


def _column_scale(X: np.ndarray) -> np.ndarray:
    # Level regressors can sit twenty decades above the rest (nb_t averages
    # raw bounty amounts), which would swamp both the rank tolerance and the
    # solve. Per-column scaling leaves the true rank unchanged.
    scale = np.max(np.abs(X), axis=0)
    scale[scale == 0.0] = 1.0
    return scale


def ols_fit(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients; the design must have full column rank."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError("X must be 2-d and y 1-d with matching rows")
    scale = _column_scale(X)
    Xs = X / scale
    if np.linalg.matrix_rank(Xs) < X.shape[1]:
        raise NumericalError("singular design")
    beta, _, _, _ = np.linalg.lstsq(Xs, y, rcond=None)
    return beta / scale


def robust_se(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """HC1 heteroskedasticity-robust standard errors."""
    X = np.asarray(X, dtype=np.float64)
    n, k = X.shape
    if n - k <= 0:
        raise ValidationError("degrees of freedom exhausted")
    scale = _column_scale(X)
    Xs = X / scale
    resid = y - X @ beta
    xtx_inv = np.linalg.inv(Xs.T @ Xs)
    meat = (Xs * resid[:, None] ** 2).T @ Xs
    cov = xtx_inv @ meat @ xtx_inv * (n / (n - k))
    return np.sqrt(np.diag(cov)) / scale


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass(frozen=True)
class RegressionResult:
    model: int
    n: int
    k: int
    r2: float
    fe_absorbed: bool
    coefficients: dict
    se: dict
    tstats: dict
    pvalues: dict
    stars: dict
    warnings: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        def _clean(d):
            return {k: (None if not math.isfinite(v) else v) for k, v in d.items()}

        return {
            "model": self.model,
            "n": self.n,
            "k": self.k,
            "r2": None if not math.isfinite(self.r2) else self.r2,
            "fe_absorbed": self.fe_absorbed,
            "coefficients": _clean(self.coefficients),
            "se": _clean(self.se),
            "tstats": _clean(self.tstats),
            "pvalues": _clean(self.pvalues),
            "stars": dict(self.stars),
            "warnings": list(self.warnings),
        }


def _fit_one(rows, model: int) -> RegressionResult:
    spec = RegressionSpec.for_model(model)
    design = build_design(rows, spec)
    named = spec.named_columns()

    keep = [c for c in design.columns if c not in design.flagged]
    keep_idx = [design.columns.index(c) for c in keep]
    X = design.X[:, keep_idx]
    y = design.y

    beta = ols_fit(X, y)
    se = robust_se(X, y, beta)
    n, k = X.shape
    resid = y - X @ beta
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = math.nan if sst == 0.0 else 1.0 - float(np.sum(resid**2)) / sst

    dof = n - k
    coeffs, ses, ts, ps, stars = {}, {}, {}, {}, {}
    fitted = {c: (float(b), float(s)) for c, b, s in zip(keep, beta, se)}
    for c in named:
        if c in fitted:
            b, s = fitted[c]
            t = b / s if s > 0 else math.nan
            p = 2.0 * float(stats.t.sf(abs(t), dof)) if math.isfinite(t) else math.nan
            coeffs[c], ses[c], ts[c], ps[c] = b, s, t, p
            stars[c] = significance_stars(p) if math.isfinite(p) else ""
        else:
            coeffs[c] = ses[c] = ts[c] = ps[c] = math.nan
            stars[c] = ""
    return RegressionResult(
        model=model,
        n=n,
        k=k,
        r2=r2,
        fe_absorbed=spec.program_fe,
        coefficients=coeffs,
        se=ses,
        tstats=ts,
        pvalues=ps,
        stars=stars,
        warnings=design.warnings,
    )


def run_models(rows, models=(1, 2, 3, 4)):
    """Fit the requested model variants on one panel.

    Flagged collinear columns are pruned before fitting and reported as nan
    coefficients; program-dummy coefficients never appear in the output maps.
    """
    return [_fit_one(rows, m) for m in models]


def within_fit(rows, spec: RegressionSpec) -> dict:
    """Within (demeaned) estimator for the time-varying regressors.

    Subtracting program means absorbs the fixed effects without dummies;
    coefficients agree with the dummy-variable fit up to numerics, which is
    the cross-check pipelines use. Program-constant columns demean to zero
    and are excluded.
    """
    design = build_design(rows, RegressionSpec(spec.include_nb, spec.include_interaction, False))
    pid = np.asarray([r.program_id for r in sorted(rows, key=lambda r: (r.program_id, r.month_index))])
    programs = sorted(set(pid))
    codes = np.searchsorted(np.asarray(programs), pid)
    n_prog = len(programs)

    def demean(col):
        sums = np.bincount(codes, weights=col, minlength=n_prog)
        cnts = np.bincount(codes, minlength=n_prog)
        return col - (sums / cnts)[codes]

    names = []
    cols = []
    for name in design.columns:
        if name == _CONST_COL or name in design.flagged:
            continue
        j = design.columns.index(name)
        raw = design.X[:, j]
        dm = demean(raw)
        # program-constant columns demean to rounding noise, not exact zero
        if np.max(np.abs(dm)) <= 1e-9 * max(1.0, float(np.max(np.abs(raw)))):
            continue
        names.append(name)
        cols.append(dm)
    if not names:
        raise ValidationError("no programs")
    Xw = np.column_stack(cols)
    yw = demean(design.y)
    beta = ols_fit(Xw, yw)
    return {name: float(b) for name, b in zip(names, beta)}


def format_table(results) -> str:
    """Side-by-side text table of fitted models, robust SEs in parentheses."""
    order = list(_BASE_COLS) + [_NB_COL, _INTER_COL, _CONST_COL]
    rows_present = [c for c in order if any(c in res.coefficients for res in results)]
    headers = ["", *[f"({res.model})" for res in results]]

    body = []
    for c in rows_present:
        coef_cells = [c]
        se_cells = [""]
        for res in results:
            if c not in res.coefficients:
                coef_cells.append("")
                se_cells.append("")
            elif not math.isfinite(res.coefficients[c]):
                coef_cells.append("-")
                se_cells.append("")
            else:
                coef_cells.append(f"{res.coefficients[c]:.4f}{res.stars[c]}")
                se_cells.append(f"({res.se[c]:.4f})")
        body.append(coef_cells)
        body.append(se_cells)

    body.append([""] * (len(results) + 1))
    body.append(["Program FE", *["yes" if r.fe_absorbed else "no" for r in results]])
    body.append(["N", *[str(r.n) for r in results]])
    body.append(
        ["R2", *[("-" if not math.isfinite(r.r2) else f"{r.r2:.3f}") for r in results]]
    )

    table = [headers, *body]
    widths = [max(len(row[j]) for row in table) for j in range(len(headers))]
    lines = []
    for i, row in enumerate(table):
        cells = [row[0].ljust(widths[0])] + [
            row[j].rjust(widths[j]) for j in range(1, len(row))
        ]
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines)
