from __future__ import annotations

import csv
import hashlib
import json

import numpy as np
import pytest

from mces import (
    ConsolidationConfig,
    ExperimentSpec,
    GateFailure,
    GridTooLarge,
    InvalidSpec,
    MissingQuestion,
    SyntheticSpec,
    WeightedFrame,
    bench_mem,
    canonical_report_bytes,
    check_gate,
    compute_relevance_metrics,
    generate_synthetic,
    plant_eval,
    run,
    sweep,
    write_report,
    write_stream,
)


def tiny_synth(**kw):
    defaults = dict(frame_count=40, n_tokens=2, dims=8, seed=0)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


def planted_synth(**kw):
    return tiny_synth(segments=((16, 32, 0.9),), noise_scale=0.05, **kw)


class TestExperimentSpec:
    def test_exactly_one_source(self):
        with pytest.raises(InvalidSpec):
            ExperimentSpec()
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), stream_file="x.mces")

    def test_policy_and_seed_validation(self):
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), policies=())
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), policies=("keep_all",))
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), seeds=())
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), seeds=(-1,))

    def test_sweep_axis_aliases_normalize(self):
        spec = ExperimentSpec(synthetic=tiny_synth(),
                              sweep=(("l_short", (8, 16)), ("l_long", (64,))))
        assert spec.sweep == (("k", (8, 16)), ("ltm_cap", (64,)))

    def test_sweep_axis_validation(self):
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), sweep=(("window", (1, 2)),))
        with pytest.raises(InvalidSpec):
            ExperimentSpec(synthetic=tiny_synth(), sweep=(("k", ()),))

    def test_to_dict_echoes_everything(self):
        spec = ExperimentSpec(synthetic=planted_synth(), seeds=(0, 1),
                              question=(1.0, 0.0))
        d = spec.to_dict()
        assert d["synthetic"]["segments"] == [[16, 32, 0.9]]
        assert d["question"] == [1.0, 0.0]
        assert d["seeds"] == [0, 1]
        assert d["cfg"]["base_target"] == 4


class TestRelevanceMetrics:
    def frame(self, weight, prov):
        return WeightedFrame(np.ones((1, 2)), weight=weight, provenance=prov)

    def test_hand_computed_fractions(self):
        entries = [self.frame(4, ((0, 4, 1),)), self.frame(2, ((6, 8, 1),))]
        m = compute_relevance_metrics(entries, [(2, 6, 0.9)])
        assert m.applicable
        # first entry: overlap [2,4) is 2 of weight 4; second: none
        assert m.relevant_mass_fraction == pytest.approx((0.5 + 0.0) / 2)
        # planted frames 2..5, covered 2 and 3 only
        assert m.slot_recall == pytest.approx(0.5)
        assert m.q_affinity is None

    def test_multiplicity_counts(self):
        entries = [self.frame(4, ((0, 2, 2),))]
        m = compute_relevance_metrics(entries, [(0, 2, 1.0)])
        assert m.relevant_mass_fraction == pytest.approx(1.0)

    def test_no_segments_not_applicable(self):
        m = compute_relevance_metrics([self.frame(1, ((0, 1, 1),))], [])
        assert not m.applicable
        assert m.relevant_mass_fraction == 0.0

    def test_affinity_against_question(self):
        f = WeightedFrame(np.array([[1.0, 0.0]]), weight=1, provenance=((0, 1, 1),))
        m = compute_relevance_metrics([f], [(0, 1, 1.0)], question=[1.0, 0.0])
        assert m.q_affinity == pytest.approx(1.0)


class TestRun:
    def test_row_grid_and_schema(self):
        spec = ExperimentSpec(
            synthetic=tiny_synth(),
            policies=("no_memory", "temporal_pool", "question_merge"),
            seeds=(0, 1))
        report = run(spec)
        rows = report["rows"]
        assert len(rows) == 6
        for row in rows:
            assert set(row) == {"policy", "seed", "params", "relevance",
                                "accounting", "token_budget", "counters",
                                "wall_time_s"}
        by_policy = {r["policy"]: r for r in rows if r["seed"] == 0}
        assert by_policy["no_memory"]["accounting"] is None
        assert by_policy["question_merge"]["accounting"] is not None
        assert by_policy["no_memory"]["token_budget"] == 16 * 2
        assert by_policy["temporal_pool"]["token_budget"] == 2
        assert by_policy["question_merge"]["token_budget"] == 256 * 2
        assert by_policy["question_merge"]["params"]["k"] == 16

    def test_canonical_bytes_reproduce(self):
        spec = ExperimentSpec(synthetic=planted_synth(), seeds=(0, 3),
                              policies=("question_merge", "ema"))
        a = canonical_report_bytes(run(spec))
        b = canonical_report_bytes(run(spec))
        assert a == b

    def test_report_hash_matches_canonical_bytes(self):
        report = run(ExperimentSpec(synthetic=tiny_synth(), policies=("ema",)))
        want = hashlib.sha256(canonical_report_bytes(report)).hexdigest()
        assert report["canonical_sha256"] == want

    def test_stream_file_source(self, tmp_path, rng):
        frames = rng.standard_normal((20, 2, 4)).astype(np.float32)
        q = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)
        path = str(tmp_path / "s.mces")
        write_stream(path, frames, q)
        report = run(ExperimentSpec(stream_file=path,
                                    policies=("question_merge", "stream_merge")))
        assert len(report["rows"]) == 2
        assert report["spec_echo"]["stream_file"] == path

    def test_question_merge_needs_a_question(self, tmp_path, rng):
        path = str(tmp_path / "bare.mces")
        write_stream(path, rng.standard_normal((20, 2, 4)).astype(np.float32))
        with pytest.raises(MissingQuestion):
            run(ExperimentSpec(stream_file=path, policies=("question_merge",)))
        # an explicit question override fills the gap
        report = run(ExperimentSpec(stream_file=path, policies=("question_merge",),
                                    question=(1.0, 0.0, 0.0, 0.0)))
        assert len(report["rows"]) == 1


class TestSweep:
    def test_grid_cartesian_product(self):
        spec = ExperimentSpec(
            synthetic=tiny_synth(),
            policies=("stream_merge",),
            sweep=(("l_short", (8, 16)), ("m0", (1, 2)),
                   ("reinit", ("none", "merged_tokens"))))
        report = sweep(spec)
        seen = {(r["params"]["k"], r["params"]["m0"], r["params"]["reinit"])
                for r in report["rows"]}
        assert len(report["rows"]) == 8
        assert seen == {(k, m, re) for k in (8, 16) for m in (1, 2)
                        for re in ("none", "merged_tokens")}

    def test_point_overrides_reach_the_config(self):
        spec = ExperimentSpec(synthetic=tiny_synth(), policies=("stream_merge",),
                              sweep=(("k", (8,)), ("alpha", (0.5,))))
        row = sweep(spec)["rows"][0]
        assert row["params"]["k"] == 8
        assert row["params"]["alpha"] == 0.5

    def test_sweep_requires_axes(self):
        with pytest.raises(InvalidSpec):
            sweep(ExperimentSpec(synthetic=tiny_synth()))

    def test_grid_cap(self):
        spec = ExperimentSpec(synthetic=tiny_synth(), max_grid_points=3,
                              sweep=(("k", (4, 8, 16, 32)),))
        with pytest.raises(GridTooLarge):
            sweep(spec)


class TestPlantEval:
    def spec(self, **kw):
        defaults = dict(synthetic=planted_synth(), seeds=(0, 1, 2),
                        reinit_mode="none")
        defaults.update(kw)
        return ExperimentSpec(**defaults)

    def test_aware_beats_agnostic_on_aligned_plants(self):
        report = plant_eval(self.spec())
        summary = report["summary"]
        assert summary["applicable"]
        assert summary["wins"] == 3
        assert summary["mean_diff"] > 0
        assert summary["gate"]["passed"]
        for row in report["rows"]:
            assert row["aware"]["relevant_mass_fraction"] > \
                   row["agnostic"]["relevant_mass_fraction"]

    def test_min_wins_gate(self):
        report = plant_eval(self.spec(), min_wins=4)  # only 3 seeds exist
        assert not report["summary"]["gate"]["passed"]
        with pytest.raises(GateFailure):
            check_gate(report)

    def test_needs_synthetic(self, tmp_path, rng):
        path = str(tmp_path / "s.mces")
        write_stream(path, rng.standard_normal((4, 1, 2)).astype(np.float32))
        with pytest.raises(InvalidSpec):
            plant_eval(ExperimentSpec(stream_file=path))

    def test_needs_sharp_plants_and_real_alpha(self):
        weak = tiny_synth(segments=((16, 32, 0.3),))
        with pytest.raises(InvalidSpec):
            plant_eval(self.spec(synthetic=weak))
        flat_cfg = ConsolidationConfig(alpha=1.0)
        with pytest.raises(InvalidSpec):
            plant_eval(self.spec(cfg=flat_cfg))

    def test_no_segments_is_inapplicable(self):
        report = plant_eval(self.spec(synthetic=tiny_synth()))
        assert not report["summary"]["applicable"]
        assert report["summary"]["wins"] is None
        assert not report["summary"]["gate"]["passed"]


class TestBenchMem:
    def test_small_growth_table(self):
        spec = ExperimentSpec(synthetic=tiny_synth(n_tokens=2, dims=4))
        report = bench_mem(spec, t_list=(32, 64, 128))
        rows = report["rows"]
        assert [r["frame_count"] for r in rows] == [32, 64, 128]
        raw = 2 * 4 * 4
        for row in rows:
            assert row["raw_bytes_per_frame"] == raw
            # base_target 4 of capacity 16, so a quarter of every frame survives
            assert row["amortized_bytes_per_frame"] == raw / 4
            assert row["empirical_bytes_per_frame"] == raw / 4
            assert row["peak_resident_bytes"] == (16 + 256) * raw
        assert report["summary"]["peak_constant"]
        assert report["summary"]["amortized_within_1pct"]
        assert report["summary"]["gate"]["passed"]

    def test_lazy_generation_matches_batch_run(self):
        # the bench streams frames lazily; a pipeline fed the materialized
        # array must land in the identical long-term state
        spec = ExperimentSpec(synthetic=tiny_synth(n_tokens=2, dims=4))
        report = bench_mem(spec, t_list=(48,))
        from mces import Pipeline
        frames, _ = generate_synthetic(tiny_synth(n_tokens=2, dims=4, frame_count=48))
        pipe = Pipeline(2, 4, spec.cfg, ltm_capacity=256, reinit_mode="none")
        pipe.run_stream(frames)
        assert report["rows"][0]["ltm_entries"] == len(pipe.long)
        assert report["rows"][0]["measured_peak_frames"] == pipe.peak_resident_frames

    def test_validation(self):
        spec = ExperimentSpec(synthetic=tiny_synth())
        with pytest.raises(InvalidSpec):
            bench_mem(spec, t_list=(0,))


class TestReportPlumbing:
    def test_volatile_keys_stripped_at_depth(self):
        report = {
            "rows": [{"x": 1, "wall_time_s": 0.5,
                      "nested": {"r_squared": 0.9, "y": 2}}],
            "canonical_sha256": "abc",
        }
        raw = canonical_report_bytes(report).decode()
        assert "wall_time_s" not in raw
        assert "r_squared" not in raw
        assert "canonical_sha256" not in raw
        assert json.loads(raw) == {"rows": [{"x": 1, "nested": {"y": 2}}]}

    def test_check_gate_passes_quietly(self):
        check_gate({"summary": {"gate": {"passed": True}}})
        check_gate({"rows": []})  # no gate at all is fine

    def test_write_json_and_csv(self, tmp_path):
        spec = ExperimentSpec(synthetic=tiny_synth(),
                              policies=("ema", "question_merge"))
        report = run(spec)
        paths = write_report(report, str(tmp_path), formats=("json", "csv"))
        assert sorted(p.rsplit(".", 1)[1] for p in paths) == ["csv", "json"]

        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["canonical_sha256"] == report["canonical_sha256"]

        with open(tmp_path / "report.csv", newline="") as fh:
            table = list(csv.reader(fh))
        header, *cells = table
        assert len(cells) == len(report["rows"])
        # every number in the CSV is the JSON spelling of the same value
        col = header.index("token_budget")
        for row, csv_row in zip(report["rows"], cells):
            assert json.loads(csv_row[col]) == row["token_budget"]
        col = header.index("relevance.applicable")
        assert {c[col] for c in cells} <= {"true", "false"}

    def test_csv_none_is_empty_cell(self, tmp_path):
        report = run(ExperimentSpec(synthetic=tiny_synth(), policies=("ema",)))
        write_report(report, str(tmp_path), formats=("csv",))
        with open(tmp_path / "report.csv", newline="") as fh:
            header, row = list(csv.reader(fh))
        assert row[header.index("accounting")] == ""

    def test_environment_block(self):
        report = run(ExperimentSpec(synthetic=tiny_synth(), policies=("ema",)))
        env = report["environment"]
        assert set(env) == {"version", "build_hash"}
        assert len(env["build_hash"]) == 16
