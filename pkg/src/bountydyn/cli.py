"""Command-line front door.

Subcommands: simulate, ccdf, fit-tail, scaling, regress, synth, pipeline.
Each run writes its primary outputs (CSV tables, JSON fit results) plus one
report.json run report into --out. Primary outputs are byte-identical for
identical flags; the run report carries wall time and so is not.

Exit codes: 0 success, 1 pipeline recovery miss, 2 usage or validation,
3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .econometrics import RegressionSpec, format_table, run_models, within_fit
from .errors import NumericalError, ValidationError
from .estimators import (
    AutoKS,
    FixedXmin,
    bootstrap_ci,
    fit_loglog_ols,
    fit_power_law_mle,
    log_binned_means,
)
from .kesten import (
    LogNormalLambda,
    ModelParams,
    TwoPointLambda,
    exact_ccdf,
    regime_ccdf,
    regime_constants,
    simulate_cohort,
)
from .pipeline import (
    Grouping,
    PowerLawCounts,
    SynthConfig,
    monthly_panel,
    parse_metas,
    parse_panel,
    parse_records,
    program_researcher_scaling,
    reward_rank_series,
    run_recovery,
    serialize_metas,
    serialize_records,
    synth_dataset,
    _parse_ts,
)


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_report(out_dir: str, command: str, inputs: dict, outputs: dict, seed: int, t0: float):
    report = {
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "seed": int(seed),
        "tool_version": __version__,
        "wall_time_ms": int((time.perf_counter() - t0) * 1000),
    }
    _write_json(os.path.join(out_dir, "report.json"), report)


def _parse_lambda_spec(text: str):
    kind, _, rest = text.partition(":")
    try:
        if kind == "two-point":
            vals_s, _, probs_s = rest.partition(":")
            vals = tuple(float(v) for v in vals_s.split(","))
            probs = tuple(float(p) for p in probs_s.split(","))
            return TwoPointLambda(vals, probs)
        if kind == "lognormal":
            mu_s, sigma_s = rest.split(",")
            return LogNormalLambda(float(mu_s), float(sigma_s))
    except (ValueError, TypeError):
        pass
    if kind not in ("two-point", "lognormal"):
        raise ValidationError(
            "lambda-dist must be 'two-point:v1,v2:p1,p2' or 'lognormal:mu,sigma'"
        )
    raise ValidationError(f"bad lambda-dist arguments in {text!r}")


def _model_from_args(args) -> ModelParams:
    if getattr(args, "lambda_dist", None) is not None:
        lam = _parse_lambda_spec(args.lambda_dist)
    elif args.lam is not None:
        lam = args.lam
    else:
        raise ValidationError("one of --lambda or --lambda-dist is required")
    return ModelParams(beta=args.beta, lam=lam, s0=args.s0)


def _read_values(path: str) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for i, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValidationError(f"line {i}: bad value {line!r}") from None
    return np.asarray(values, dtype=np.float64)


def _float_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    params = _model_from_args(args)
    cohort = simulate_cohort(params, args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)

    totals = cohort.totals
    vals, cnts = np.unique(totals, return_counts=True)
    ccdf = np.cumsum(cnts[::-1])[::-1] / totals.shape[0]
    _float_csv(os.path.join(args.out, "ccdf.csv"), "s,ccdf", zip(vals, ccdf))

    files = ["ccdf.csv"]
    if args.trajectories:
        with open(os.path.join(args.out, "trajectories.csv"), "w", encoding="utf-8") as f:
            f.write("index,n_discoveries,total\n")
            for i in range(len(cohort)):
                f.write(f"{i},{int(cohort.n_discoveries[i])},{float(totals[i])!r}\n")
        files.append("trajectories.csv")

    first = cohort[0]
    outputs = {
        "n": int(totals.shape[0]),
        "mean_total": float(totals.mean()),
        "max_total": float(totals.max()),
        "mean_discoveries": float(cohort.n_discoveries.mean()),
        "first_trajectory": {
            "seed": int(first.seed),
            "n_discoveries": int(first.n_discoveries),
            "rewards": [float(r) for r in first.rewards],
            "total": float(first.total),
        },
        "files": files,
    }
    inputs = {
        "beta": args.beta,
        "lambda": args.lam,
        "lambda_dist": args.lambda_dist,
        "s0": args.s0,
        "n": args.n,
    }
    _write_report(args.out, "simulate", inputs, outputs, args.seed, t0)
    return 0


def _cmd_ccdf(args) -> int:
    t0 = time.perf_counter()
    params = ModelParams(beta=args.beta, lam=args.lam, s0=args.s0)
    if args.s:
        grid = np.asarray(sorted(args.s), dtype=np.float64)
    else:
        if args.points is None or args.max_s is None:
            raise ValidationError("give --s values or both --points and --max-s")
        if args.points < 2:
            raise ValidationError("--points must be >= 2")
        grid = np.linspace(0.0, args.max_s, args.points)
    fn = exact_ccdf if args.source == "exact" else regime_ccdf
    values = fn(params, grid)

    os.makedirs(args.out, exist_ok=True)
    _float_csv(os.path.join(args.out, "ccdf.csv"), "s,ccdf", zip(grid, values))
    outputs = {
        "source": args.source,
        "n_points": int(grid.shape[0]),
        "regime": regime_constants(params).to_dict() if params.beta > 0 else None,
        "files": ["ccdf.csv"],
    }
    inputs = {"beta": args.beta, "lambda": args.lam, "s0": args.s0, "source": args.source}
    _write_report(args.out, "ccdf", inputs, outputs, 0, t0)
    return 0


def _cmd_fit_tail(args) -> int:
    t0 = time.perf_counter()
    values = _read_values(args.input)
    rule = FixedXmin(args.xmin) if args.xmin is not None else AutoKS()
    fit = fit_power_law_mle(values, rule)
    if args.bootstrap:
        fit = fit.with_ci(bootstrap_ci(values, fit, n_boot=args.bootstrap, seed=args.seed))
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "fit.json"), fit.to_dict())
    inputs = {"input": args.input, "xmin": args.xmin, "bootstrap": args.bootstrap}
    outputs = dict(fit.to_dict(), files=["fit.json"])
    _write_report(args.out, "fit-tail", inputs, outputs, args.seed, t0)
    return 0


def _cmd_scaling(args) -> int:
    t0 = time.perf_counter()
    records = parse_records(args.records)
    os.makedirs(args.out, exist_ok=True)
    files = []
    if args.mode == "researchers":
        scaling = program_researcher_scaling(records)
        with open(os.path.join(args.out, "scaling.csv"), "w", encoding="utf-8") as f:
            f.write("program_id,h,b_c\n")
            for pid, (h, bc) in scaling.items():
                f.write(f"{pid},{h},{bc}\n")
        files.append("scaling.csv")
        x = np.asarray([v[0] for v in scaling.values()], dtype=np.float64)
        y = np.asarray([v[1] for v in scaling.values()], dtype=np.float64)
    else:
        grouping = {
            "program": Grouping.PER_PROGRAM,
            "researcher-program": Grouping.PER_RESEARCHER_PER_PROGRAM,
            "researcher-global": Grouping.PER_RESEARCHER_GLOBAL,
        }[args.grouping]
        series = reward_rank_series(records, grouping)
        with open(os.path.join(args.out, "rank_series.csv"), "w", encoding="utf-8") as f:
            f.write("k,cumulative,count_at_rank\n")
            for k, cum, cnt in series.rows():
                f.write(f"{k},{cum!r},{cnt}\n")
        files.append("rank_series.csv")
        x = series.k.astype(np.float64)
        y = series.cumulative

    binned = log_binned_means(x, y, bins_per_decade=args.bins_per_decade)
    _float_csv(
        os.path.join(args.out, "binned.csv"),
        "center,mean,count",
        zip(binned.centers, binned.means, binned.counts),
    )
    files.append("binned.csv")
    fit = fit_loglog_ols(binned.centers, binned.means)
    _write_json(os.path.join(args.out, "fit.json"), fit.to_dict())
    files.append("fit.json")

    inputs = {
        "records": args.records,
        "mode": args.mode,
        "grouping": args.grouping,
        "bins_per_decade": args.bins_per_decade,
    }
    outputs = dict(fit.to_dict(), files=files)
    _write_report(args.out, "scaling", inputs, outputs, 0, t0)
    return 0


def _cmd_regress(args) -> int:
    t0 = time.perf_counter()
    if args.panel is not None:
        if args.records is not None or args.metas is not None:
            raise ValidationError("--panel cannot be combined with --records/--metas")
        panel = parse_panel(args.panel)
    else:
        if args.records is None or args.metas is None or args.horizon_end is None:
            raise ValidationError(
                "give --panel, or all of --records, --metas, and --horizon-end"
            )
        try:
            horizon_end = _parse_ts(args.horizon_end)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        panel = monthly_panel(parse_records(args.records), parse_metas(args.metas), horizon_end)

    models = tuple(int(m) for m in args.models.split(","))
    results = run_models(panel, models=models)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "regression.json"), [r.to_dict() for r in results])
    table = format_table(results)
    with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")

    outputs = {
        "models": list(models),
        "n_rows": len(panel),
        "files": ["regression.json", "table.txt"],
    }
    if 4 in models:
        fe = next(r for r in results if r.model == 4)
        within = within_fit(panel, RegressionSpec.for_model(4))
        gap = max(
            abs(fe.coefficients[c] - within[c])
            for c in within
            if math.isfinite(fe.coefficients.get(c, math.nan))
        )
        outputs["fe_within_gap"] = gap
    inputs = {
        "panel": args.panel,
        "records": args.records,
        "metas": args.metas,
        "horizon_end": args.horizon_end,
        "models": args.models,
    }
    _write_report(args.out, "regress", inputs, outputs, 0, t0)
    return 0


def _config_from_args(args) -> SynthConfig:
    overrides = {}
    if args.n_programs is not None:
        overrides["n_programs"] = args.n_programs
    if args.horizon_days is not None:
        overrides["horizon_days"] = args.horizon_days
    if args.launch_rate_days is not None:
        overrides["launch_rate_days"] = args.launch_rate_days
    if args.decay_exponent is not None:
        overrides["decay_exponent"] = args.decay_exponent
    if args.count_gamma is not None or args.count_cutoff is not None:
        base = SynthConfig(seed=args.seed).per_researcher_count_law
        overrides["per_researcher_count_law"] = PowerLawCounts(
            args.count_gamma if args.count_gamma is not None else base.gamma,
            args.count_cutoff if args.count_cutoff is not None else base.cutoff,
        )
    if getattr(args, "defaults", False) and overrides:
        raise ValidationError("--defaults cannot be combined with generator overrides")
    return SynthConfig(seed=args.seed, **overrides)


def _cmd_synth(args) -> int:
    t0 = time.perf_counter()
    config = _config_from_args(args)
    records, metas, manifest = synth_dataset(config)
    os.makedirs(args.out, exist_ok=True)
    serialize_records(records, os.path.join(args.out, "records.csv"))
    serialize_metas(metas, os.path.join(args.out, "metas.csv"))
    _write_json(os.path.join(args.out, "ground_truth.json"), manifest)
    outputs = {
        "n_records": len(records),
        "n_programs": len(metas),
        "files": ["records.csv", "metas.csv", "ground_truth.json"],
    }
    _write_report(args.out, "synth", {"config": manifest}, outputs, args.seed, t0)
    return 0


def _cmd_pipeline(args) -> int:
    t0 = time.perf_counter()
    config = _config_from_args(args)
    report = run_recovery(config, args.out, panel_window_months=args.panel_window_months)
    outputs = {
        "all_recovered": report["all_recovered"],
        "recovery": report["recovery"],
        "files": [
            "records.csv",
            "metas.csv",
            "ground_truth.json",
            "decay_curve.csv",
            "scaling.csv",
            "panel.csv",
            "pipeline_report.json",
        ],
    }
    _write_report(args.out, "pipeline", {"config": report["config"]}, outputs, args.seed, t0)
    if not report["all_recovered"]:
        missed = [r["name"] for r in report["recovery"] if not r["passed"]]
        print(f"recovery missed: {', '.join(missed)}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser, dist_ok: bool) -> None:
    p.add_argument("--beta", type=float, required=True, help="continuation probability")
    p.add_argument("--lambda", dest="lam", type=float, help="fixed multiplicative factor")
    if dist_ok:
        p.add_argument(
            "--lambda-dist",
            help="'two-point:v1,v2:p1,p2' or 'lognormal:mu,sigma'",
        )
    p.add_argument("--s0", type=float, default=1.0, help="base reward (default 1)")


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-programs", type=int, default=None)
    p.add_argument("--horizon-days", type=float, default=None)
    p.add_argument("--launch-rate-days", type=float, default=None)
    p.add_argument("--decay-exponent", type=float, default=None)
    p.add_argument("--count-gamma", type=float, default=None)
    p.add_argument("--count-cutoff", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bountydyn",
        description="Reward-cascade simulation and bounty-data estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a researcher cohort")
    _add_model_flags(p, dist_ok=True)
    p.add_argument("--n", type=int, required=True, help="number of researchers")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trajectories", action="store_true", help="also write per-trajectory CSV")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ccdf", help="evaluate the career-total CCDF")
    _add_model_flags(p, dist_ok=False)
    p.add_argument("--source", choices=("exact", "paper"), default="exact")
    p.add_argument("--s", type=float, action="append", help="evaluation point (repeatable)")
    p.add_argument("--points", type=int, help="grid size (with --max-s)")
    p.add_argument("--max-s", type=float, help="grid upper end (with --points)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_ccdf)

    p = sub.add_parser("fit-tail", help="power-law tail fit on a value-per-line file")
    p.add_argument("--input", required=True)
    p.add_argument("--xmin", type=float, default=None, help="fixed cutoff (default: KS scan)")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates for a CI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_fit_tail)

    p = sub.add_parser("scaling", help="scaling exponents from a records CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--mode", choices=("researchers", "ranks"), default="researchers")
    p.add_argument(
        "--grouping",
        choices=("program", "researcher-program", "researcher-global"),
        default="program",
    )
    p.add_argument("--bins-per-decade", type=int, default=5)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("regress", help="panel regression battery")
    p.add_argument("--panel", help="panel CSV (alternative to --records/--metas)")
    p.add_argument("--records")
    p.add_argument("--metas")
    p.add_argument("--horizon-end", help="panel horizon end, YYYY-MM-DDThh:mm:ssZ")
    p.add_argument("--models", default="1,2,3,4")
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("synth", help="generate a synthetic platform dataset")
    _add_synth_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="synthesize, re-ingest, fit, and gate recovery")
    _add_synth_flags(p)
    p.add_argument("--defaults", action="store_true", help="use the default generator config")
    p.add_argument("--panel-window-months", type=int, default=420)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
