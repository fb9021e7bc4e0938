"""Ingestion, derived series, synthetic generation, and planted recovery."""

from __future__ import annotations

import io
import json
from datetime import datetime, timezone

import numpy as np
import pytest

import bountydyn as bd
from bountydyn.errors import SchemaError, ValidationError
from bountydyn.estimators import FixedXmin


def ts(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)


def rec(pid, rid, when, amount):
    return bd.BountyRecord(pid, rid, ts(when), amount)


RECORDS_CSV = (
    "program_id,researcher_id,timestamp,amount_usd\n"
    "acme,alice,2020-01-20T12:00:00Z,150.00\n"
    "acme,bob,2020-03-05T09:30:00Z,75.50\n"
)


class TestParseRecords:
    def test_empty_body(self):
        assert bd.parse_records(io.StringIO("program_id,researcher_id,timestamp,amount_usd\n")) == []

    def test_single_row_round_trip(self):
        records = bd.parse_records(io.StringIO(RECORDS_CSV))
        assert len(records) == 2
        r = records[0]
        assert r.program_id == "acme"
        assert r.researcher_id == "alice"
        assert r.timestamp == ts("2020-01-20T12:00:00")
        assert r.amount == 150.0
        out = io.StringIO()
        bd.serialize_records(records, out)
        assert bd.parse_records(io.StringIO(out.getvalue())) == records

    def test_rows_sorted_by_timestamp(self):
        swapped = (
            "program_id,researcher_id,timestamp,amount_usd\n"
            "acme,bob,2020-03-05T09:30:00Z,75.50\n"
            "acme,alice,2020-01-20T12:00:00Z,150.00\n"
        )
        records = bd.parse_records(io.StringIO(swapped))
        assert [r.researcher_id for r in records] == ["alice", "bob"]

    def test_negative_amount_reports_line(self):
        bad = RECORDS_CSV + "acme,eve,2020-04-01T00:00:00Z,-5\n"
        with pytest.raises(ValidationError, match="line 4.*amount"):
            bd.parse_records(io.StringIO(bad))

    def test_schema_mismatch(self):
        with pytest.raises(SchemaError, match="schema mismatch"):
            bd.parse_records(io.StringIO("program,researcher,time,amount\nx,y,z,1\n"))

    def test_field_count_reports_line(self):
        with pytest.raises(ValidationError, match="line 2"):
            bd.parse_records(
                io.StringIO("program_id,researcher_id,timestamp,amount_usd\nacme,alice\n")
            )

    def test_bad_timestamp_reports_line(self):
        bad = (
            "program_id,researcher_id,timestamp,amount_usd\n"
            "acme,alice,2020-01-20 12:00:00,150.00\n"
        )
        with pytest.raises(ValidationError, match="line 2"):
            bd.parse_records(io.StringIO(bad))


class TestParseMetas:
    def test_round_trip_and_empty_launch(self):
        src = (
            "program_id,launch,alexa_rank,avg_bounty_usd\n"
            "acme,2020-01-15T00:00:00Z,1200,350.00\n"
            "beta,,44,80.00\n"
        )
        metas = bd.parse_metas(io.StringIO(src))
        assert metas[0].launch == ts("2020-01-15T00:00:00")
        assert metas[1].launch is None
        assert metas[1].alexa_rank == 44
        out = io.StringIO()
        bd.serialize_metas(metas, out)
        assert bd.parse_metas(io.StringIO(out.getvalue())) == metas

    def test_duplicate_program_rejected(self):
        src = (
            "program_id,launch,alexa_rank,avg_bounty_usd\n"
            "acme,,1,10.00\n"
            "acme,,2,20.00\n"
        )
        with pytest.raises(ValidationError, match="line 3.*duplicate"):
            bd.parse_metas(io.StringIO(src))

    def test_launch_inferred_from_first_record(self):
        metas = [bd.ProgramMeta("acme", None, 10, 100.0)]
        records = bd.parse_records(io.StringIO(RECORDS_CSV))
        resolved = bd.resolve_launches(metas, records)
        assert resolved[0].launch == ts("2020-01-20T12:00:00")


class TestScaling:
    def test_counts_example(self):
        records = [
            rec("acme", "alice", "2020-01-01T00:00:00", 10.0),
            rec("acme", "alice", "2020-01-02T00:00:00", 10.0),
            rec("acme", "bob", "2020-01-03T00:00:00", 10.0),
        ]
        assert bd.program_researcher_scaling(records) == {"acme": (2, 3)}

    def test_duplication_doubles_counts_not_researchers(self):
        records = [
            rec("acme", "alice", "2020-01-01T00:00:00", 10.0),
            rec("acme", "bob", "2020-01-02T00:00:00", 10.0),
        ]
        h, b_c = bd.program_researcher_scaling(records + records)["acme"]
        assert (h, b_c) == (2, 4)

    def test_counts_sum_to_total_records(self):
        records, _, _ = bd.synth_dataset(bd.SynthConfig(seed=3, n_programs=8, horizon_days=300.0))
        scaling = bd.program_researcher_scaling(records)
        assert sum(b for _, b in scaling.values()) == len(records)

    def test_planted_exponent_recovery(self):
        # B_c = round(h^1.10) across sites spanning 2.5 decades of h
        rng = np.random.default_rng(7)
        hs = np.unique(np.rint(10 ** rng.uniform(0.5, 3.0, 60)).astype(int))
        records = []
        for j, h in enumerate(hs):
            b_c = int(round(float(h) ** 1.10))
            for i in range(b_c):
                records.append(
                    rec(f"p{j}", f"r{j}_{i % h}", "2021-01-01T00:00:00", 25.0)
                )
        pairs = bd.program_researcher_scaling(records).values()
        fit = bd.fit_loglog_ols([h for h, _ in pairs], [b for _, b in pairs])
        assert fit.slope == pytest.approx(1.10, abs=0.05)


class TestPerResearcherCounts:
    def test_single_pair(self):
        records = [rec("acme", "alice", f"2020-01-0{d}T00:00:00", 5.0) for d in range(1, 6)]
        assert bd.per_researcher_counts(records).tolist() == [5]

    def test_two_programs_two_counts(self):
        records = [
            rec("acme", "alice", "2020-01-01T00:00:00", 5.0),
            rec("beta", "alice", "2020-01-02T00:00:00", 5.0),
            rec("beta", "alice", "2020-01-03T00:00:00", 5.0),
        ]
        assert sorted(bd.per_researcher_counts(records).tolist()) == [1, 2]

    def test_planted_truncated_law(self):
        # capped counts min(floor(u^(-1/0.63)), 40): the generic continuous
        # scan reads the cap pile-up as extra slope (pinned value), while
        # the capped-count likelihood recovers the planted exponent
        from bountydyn.pipeline import _truncated_count_gamma

        u = np.random.default_rng(40).random(200_000)
        counts = np.minimum(np.floor(u ** (-1.0 / 0.63)), 40.0)
        generic = bd.fit_power_law_mle(counts)
        assert generic.gamma == pytest.approx(1.8574, abs=2e-3)
        assert _truncated_count_gamma(counts.astype(np.int64)) == pytest.approx(1.63, abs=0.02)


class TestRewardRankSeries:
    def test_single_group_example(self):
        records = [
            rec("acme", "alice", "2020-01-01T00:00:00", 10.0),
            rec("acme", "alice", "2020-01-02T00:00:00", 20.0),
        ]
        series = bd.reward_rank_series(records, bd.Grouping.PER_PROGRAM)
        assert series.k.tolist() == [1, 2]
        assert series.cumulative.tolist() == [10.0, 30.0]
        assert series.count_at_rank.tolist() == [1, 1]

    def test_global_grouping_merges_across_programs(self):
        records = [
            rec("acme", "alice", "2020-01-01T00:00:00", 10.0),
            rec("beta", "alice", "2020-02-01T00:00:00", 5.0),
        ]
        per_prog = bd.reward_rank_series(records, bd.Grouping.PER_RESEARCHER_PER_PROGRAM)
        merged = bd.reward_rank_series(records, bd.Grouping.PER_RESEARCHER_GLOBAL)
        assert per_prog.count_at_rank[0] == 2
        assert merged.count_at_rank.tolist() == [1, 1]
        assert merged.cumulative.tolist() == [10.0, 15.0]

    def test_pooled_series_invariants(self):
        records, _, _ = bd.synth_dataset(bd.SynthConfig(seed=9, n_programs=6, horizon_days=250.0))
        series = bd.reward_rank_series(records, bd.Grouping.PER_RESEARCHER_PER_PROGRAM)
        # attainment counts can only fall as rank grows
        assert np.all(series.count_at_rank[:-1] >= series.count_at_rank[1:])
        # points with rising k are same-group neighbors, so cumulative grows
        cont = series.k[1:] > 1
        assert np.all(series.cumulative[1:][cont] >= series.cumulative[:-1][cont])
        assert series.k.shape[0] == len(records)
        assert int(series.count_at_rank[0]) == int(np.sum(series.k == 1))

    def test_planted_rank_curve(self):
        # per-rank amounts k^1.27 - (k-1)^1.27 make cumulative exactly k^1.27
        records = []
        for g, length in enumerate([100, 60, 30]):
            for k in range(1, length + 1):
                amount = float(k**1.27 - (k - 1) ** 1.27)
                records.append(rec(f"p{g}", "r", f"2020-01-01T{k // 3600:02d}:{(k // 60) % 60:02d}:{k % 60:02d}", amount))
        series = bd.reward_rank_series(records, bd.Grouping.PER_PROGRAM)
        fit = bd.fit_loglog_ols(series.k, series.cumulative)
        assert fit.slope == pytest.approx(1.27, abs=1e-6)


class TestExpectedPayoffExponent:
    def test_exact_compositions(self):
        assert abs(bd.expected_payoff_exponent(1.40, -1.85) - (-0.45)) <= 1e-12
        assert abs(bd.expected_payoff_exponent(1.24, -1.05) - 0.19) <= 1e-12

    def test_zero_frequency_identity(self):
        assert bd.expected_payoff_exponent(0.7, 0.0) == 0.7


class TestMonthlyPanel:
    METAS = [bd.ProgramMeta("acme", ts("2020-01-15T00:00:00"), 100, 200.0)]

    def test_zero_months_materialized(self):
        records = [
            rec("acme", "alice", "2020-01-20T00:00:00", 50.0),
            rec("acme", "bob", "2020-03-05T00:00:00", 60.0),
        ]
        rows = bd.monthly_panel(records, self.METAS, ts("2020-03-31T00:00:00"))
        assert [r.v_it for r in rows] == [1, 0, 1]
        assert [r.t_it for r in rows] == [0, 1, 2]
        assert all(isinstance(r.v_it, int) for r in rows)
        assert rows[0].a_i == pytest.approx(np.log(100.0))
        assert rows[0].b_i == pytest.approx(np.log(200.0))

    def test_dp_counts_same_month_launches(self):
        metas = [
            bd.ProgramMeta("acme", ts("2020-01-10T00:00:00"), 10, 100.0),
            bd.ProgramMeta("beta", ts("2020-01-25T00:00:00"), 20, 300.0),
        ]
        records = [
            rec("acme", "a", "2020-01-12T00:00:00", 5.0),
            rec("beta", "b", "2020-01-26T00:00:00", 5.0),
        ]
        rows = bd.monthly_panel(records, metas, ts("2020-02-15T00:00:00"))
        jan = [r for r in rows if r.month_index == rows[0].month_index]
        assert all(r.dp_t == 2 for r in jan)
        assert all(r.nb_t == pytest.approx(200.0) for r in jan)

    def test_missing_meta_names_program(self):
        records = [rec("ghost", "a", "2020-01-01T00:00:00", 1.0)]
        with pytest.raises(ValidationError, match="ghost"):
            bd.monthly_panel(records, self.METAS, ts("2020-02-01T00:00:00"))

    def test_counts_conserved(self):
        records, metas, _ = bd.synth_dataset(
            bd.SynthConfig(seed=4, n_programs=10, horizon_days=400.0)
        )
        horizon = max(r.timestamp for r in records)
        rows = bd.monthly_panel(records, metas, horizon)
        per_program = {}
        for r in rows:
            per_program[r.program_id] = per_program.get(r.program_id, 0) + r.v_it
        truth = {}
        for r in records:
            truth[r.program_id] = truth.get(r.program_id, 0) + 1
        assert per_program == truth

    def test_panel_round_trip(self):
        records = [rec("acme", "a", "2020-01-20T00:00:00", 5.0)]
        rows = bd.monthly_panel(records, self.METAS, ts("2020-02-20T00:00:00"))
        out = io.StringIO()
        bd.serialize_panel(rows, out)
        back = bd.parse_panel(io.StringIO(out.getvalue()))
        assert back == rows


class TestLaunchInterarrivals:
    def test_example(self):
        metas = [
            bd.ProgramMeta("a", ts("2020-01-01T00:00:00"), 1, 10.0),
            bd.ProgramMeta("b", ts("2020-02-27T00:00:00"), 1, 10.0),
            bd.ProgramMeta("c", ts("2020-04-24T00:00:00"), 1, 10.0),
        ]
        assert bd.launch_interarrivals(metas).tolist() == [57.0, 57.0]

    def test_unordered_input_sorted(self):
        metas = [
            bd.ProgramMeta("b", ts("2020-02-27T00:00:00"), 1, 10.0),
            bd.ProgramMeta("c", ts("2020-04-24T00:00:00"), 1, 10.0),
            bd.ProgramMeta("a", ts("2020-01-01T00:00:00"), 1, 10.0),
        ]
        assert bd.launch_interarrivals(metas).tolist() == [57.0, 57.0]

    def test_insufficient_launches(self):
        with pytest.raises(ValidationError, match="insufficient launches"):
            bd.launch_interarrivals([bd.ProgramMeta("a", ts("2020-01-01T00:00:00"), 1, 10.0)])


class TestSynthDataset:
    def test_same_seed_byte_identical(self, tmp_path):
        paths = []
        for run in ("a", "b"):
            records, metas, truth = bd.synth_dataset(
                bd.SynthConfig(seed=17, n_programs=15, horizon_days=500.0)
            )
            p = tmp_path / f"{run}.csv"
            bd.serialize_records(records, p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]

    def test_manifest_echoes_config(self):
        config = bd.SynthConfig(
            seed=23,
            n_programs=9,
            horizon_days=365.0,
            launch_rate_days=40.0,
            model=bd.ModelParams(0.6, 0.9, 50.0),
            researcher_count_law=bd.LogNormalCounts(2.5, 0.8),
            per_researcher_count_law=bd.PowerLawCounts(1.8, 25),
            decay_exponent=-0.35,
        )
        _, _, truth = bd.synth_dataset(config)
        assert truth["seed"] == 23
        assert truth["n_programs"] == 9
        assert truth["launch_rate_days"] == 40.0
        law = truth["per_researcher_count_law"]
        assert law["kind"] == "power_law"
        assert law["gamma"] == 1.8
        assert law["cutoff"] == 25
        assert truth["researcher_count_law"]["kind"] == "lognormal"
        assert truth["researcher_count_law"]["mu"] == 2.5
        assert truth["decay_exponent"] == -0.35
        assert truth["model"]["beta"] == 0.6
        json.dumps(truth)

    def test_counts_respect_cutoff(self):
        config = bd.SynthConfig(
            seed=5,
            n_programs=25,
            horizon_days=600.0,
            per_researcher_count_law=bd.PowerLawCounts(1.63, 12),
        )
        records, _, _ = bd.synth_dataset(config)
        counts = bd.per_researcher_counts(records)
        assert int(counts.max()) <= 12

    def test_launch_equals_first_event(self):
        records, metas, _ = bd.synth_dataset(
            bd.SynthConfig(seed=6, n_programs=12, horizon_days=400.0)
        )
        firsts = {}
        for r in records:
            if r.program_id not in firsts or r.timestamp < firsts[r.program_id]:
                firsts[r.program_id] = r.timestamp
        for m in metas:
            assert m.launch == firsts[m.program_id]

    def test_records_sorted(self):
        records, _, _ = bd.synth_dataset(bd.SynthConfig(seed=2, n_programs=10, horizon_days=300.0))
        stamps = [r.timestamp for r in records]
        assert stamps == sorted(stamps)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            bd.SynthConfig(seed=1, n_programs=0)
        with pytest.raises(ValidationError):
            bd.SynthConfig(seed=1, decay_exponent=-1.5)
        with pytest.raises(ValidationError):
            bd.PowerLawCounts(0.9, 10)


class TestDerivedSeriesPermutationInvariance:
    def test_shuffled_records_same_outputs(self):
        records, metas, _ = bd.synth_dataset(
            bd.SynthConfig(seed=13, n_programs=8, horizon_days=350.0)
        )
        shuffled = list(records)
        np.random.default_rng(1).shuffle(shuffled)
        assert bd.program_researcher_scaling(shuffled) == bd.program_researcher_scaling(records)
        assert np.array_equal(bd.per_researcher_counts(shuffled), bd.per_researcher_counts(records))
        a = bd.reward_rank_series(records, bd.Grouping.PER_PROGRAM)
        b = bd.reward_rank_series(shuffled, bd.Grouping.PER_PROGRAM)
        assert np.array_equal(a.cumulative, b.cumulative)


class TestRunRecovery:
    def test_report_structure_and_artifacts(self, tmp_path):
        config = bd.SynthConfig(seed=11, n_programs=12, horizon_days=400.0)
        report = bd.run_recovery(config, tmp_path)
        names = [g["name"] for g in report["recovery"]]
        assert names == [
            "launch_rate_days",
            "count_tail_gamma",
            "decay_exponent",
            "n_programs",
            "count_cutoff",
        ]
        for gate in report["recovery"]:
            assert set(gate) == {"name", "planted", "recovered", "tolerance", "passed"}
        assert report["all_recovered"] == all(g["passed"] for g in report["recovery"])
        for artifact in (
            "records.csv",
            "metas.csv",
            "panel.csv",
            "ground_truth.json",
            "pipeline_report.json",
            "decay_curve.csv",
            "scaling.csv",
        ):
            assert (tmp_path / artifact).exists()
        on_disk = json.loads((tmp_path / "pipeline_report.json").read_text())
        assert on_disk["recovery"] == report["recovery"]

    def test_n_programs_gate_exact(self, tmp_path):
        report = bd.run_recovery(bd.SynthConfig(seed=2, n_programs=10, horizon_days=350.0), tmp_path)
        gate = next(g for g in report["recovery"] if g["name"] == "n_programs")
        assert gate["planted"] == 10
        assert gate["recovered"] == 10
        assert gate["passed"]
