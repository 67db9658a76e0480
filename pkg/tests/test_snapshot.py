from __future__ import annotations

import json

import numpy as np
import pytest

from mces import (
    ConsolidationConfig,
    InvalidSpec,
    IoFailure,
    LongTermMemory,
    Pipeline,
    ShapeMismatch,
    export_long_term,
    export_pipeline,
    import_pipeline,
    write_stream,
)

from conftest import make_frames

Q = np.array([0.6, 0.8, 0.0, 0.0])


def small_pipeline(rng, pushes=20):
    pipe = Pipeline(2, 4, question=Q, ltm_capacity=32)
    for _ in range(pushes):
        pipe.step(rng.standard_normal((2, 4)))
    return pipe


def assert_same_state(a: Pipeline, b: Pipeline, tokens_exact=True):
    assert a.frames_pushed == b.frames_pushed
    assert a.consolidations_run == b.consolidations_run
    assert a.consolidation_input_total == b.consolidation_input_total
    assert a.consolidation_output_total == b.consolidation_output_total
    assert a.seeded_weight_total == b.seeded_weight_total
    assert a.cfg == b.cfg
    assert a.long.position_ids == b.long.position_ids
    assert a.short.next_source_index == b.short.next_source_index
    for fa, fb in zip(list(a.long.entries) + list(a.short.frames),
                      list(b.long.entries) + list(b.short.frames)):
        assert fa.weight == fb.weight
        assert fa.provenance == fb.provenance
        assert fa.context_flag == fb.context_flag
        if tokens_exact:
            assert np.array_equal(fa.tokens, fb.tokens)
        else:
            assert np.allclose(fa.tokens, fb.tokens, atol=1e-6)


class TestExport:
    def test_deterministic_bytes(self, tmp_path, rng):
        pipe = small_pipeline(rng)
        j1, s1 = export_pipeline(pipe, str(tmp_path / "a.json"))
        j2, s2 = export_pipeline(pipe, str(tmp_path / "b.json"))
        assert (tmp_path / "a.json").read_bytes().replace(b"a.mces", b"x") == \
               (tmp_path / "b.json").read_bytes().replace(b"b.mces", b"x")
        assert (tmp_path / "a.mces").read_bytes() == (tmp_path / "b.mces").read_bytes()

    def test_json_is_compact_sorted_and_newline_terminated(self, tmp_path, rng):
        export_pipeline(small_pipeline(rng), str(tmp_path / "s.json"))
        raw = (tmp_path / "s.json").read_text()
        assert raw.endswith("\n")
        doc = json.loads(raw)
        assert raw == json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    def test_sidecar_defaults_next_to_json(self, tmp_path, rng):
        jp, sp = export_pipeline(small_pipeline(rng), str(tmp_path / "snap.json"))
        assert sp == str(tmp_path / "snap.mces")
        assert (tmp_path / "snap.mces").exists()

    def test_empty_pipeline_has_no_sidecar(self, tmp_path):
        pipe = Pipeline(2, 4)
        jp, sp = export_pipeline(pipe, str(tmp_path / "empty.json"))
        assert sp is None
        assert not (tmp_path / "empty.mces").exists()
        assert json.loads((tmp_path / "empty.json").read_text())["sidecar"] is None


class TestImport:
    def test_round_trip_state(self, tmp_path, rng):
        pipe = small_pipeline(rng)
        jp, _ = export_pipeline(pipe, str(tmp_path / "s.json"))
        back = import_pipeline(jp)
        # token matrices come back at 32-bit storage precision
        assert_same_state(pipe, back, tokens_exact=False)
        for fa, fb in zip(pipe.long.entries, back.long.entries):
            assert np.array_equal(fa.tokens.astype(np.float32),
                                  fb.tokens.astype(np.float32))

    def test_question_survives_at_full_precision(self, tmp_path, rng):
        pipe = small_pipeline(rng)
        jp, _ = export_pipeline(pipe, str(tmp_path / "s.json"))
        assert np.array_equal(import_pipeline(jp).question, pipe.question)

    def test_import_export_is_a_fixpoint(self, tmp_path, rng):
        pipe = small_pipeline(rng)
        j1, _ = export_pipeline(pipe, str(tmp_path / "one.json"))
        j2, _ = export_pipeline(import_pipeline(j1), str(tmp_path / "two.json"))
        a = (tmp_path / "one.json").read_bytes().replace(b"one.mces", b"x")
        b = (tmp_path / "two.json").read_bytes().replace(b"two.mces", b"x")
        assert a == b
        assert (tmp_path / "one.mces").read_bytes() == (tmp_path / "two.mces").read_bytes()

    def test_empty_round_trip_still_streams(self, tmp_path, rng):
        jp, _ = export_pipeline(Pipeline(2, 4), str(tmp_path / "e.json"))
        back = import_pipeline(jp)
        assert back.frames_pushed == 0
        reports = back.run_stream([rng.standard_normal((2, 4)) for _ in range(17)],
                                  flush=False)
        assert len(reports) == 1

    def test_resume_matches_uninterrupted_run(self, tmp_path, rng):
        frames = [rng.standard_normal((2, 4)) for _ in range(40)]
        whole = Pipeline(2, 4, question=Q, ltm_capacity=32)
        for f in frames:
            whole.step(f)

        first = Pipeline(2, 4, question=Q, ltm_capacity=32)
        for f in frames[:20]:
            first.step(f)
        jp, _ = export_pipeline(first, str(tmp_path / "mid.json"))
        resumed = import_pipeline(jp)
        for f in frames[20:]:
            resumed.step(f)

        assert resumed.frames_pushed == whole.frames_pushed
        assert resumed.consolidations_run == whole.consolidations_run
        assert resumed.long.position_ids == whole.long.position_ids
        for fa, fb in zip(whole.long.entries, resumed.long.entries):
            assert fa.weight == fb.weight
            assert fa.provenance == fb.provenance
            assert np.allclose(fa.tokens, fb.tokens, atol=1e-5)

    def test_wrong_kind_rejected(self, tmp_path, rng):
        mem = LongTermMemory(8)
        mem.append(make_frames(rng, 3, 2, 4))
        jp, _ = export_long_term(mem, str(tmp_path / "ltm.json"))
        with pytest.raises(InvalidSpec):
            import_pipeline(jp)

    def test_unknown_version_rejected(self, tmp_path, rng):
        jp, _ = export_pipeline(small_pipeline(rng), str(tmp_path / "s.json"))
        doc = json.loads((tmp_path / "s.json").read_text())
        doc["snapshot_version"] = 99
        (tmp_path / "s.json").write_text(json.dumps(doc))
        with pytest.raises(InvalidSpec):
            import_pipeline(str(tmp_path / "s.json"))

    def test_sidecar_count_mismatch_rejected(self, tmp_path, rng):
        jp, sp = export_pipeline(small_pipeline(rng), str(tmp_path / "s.json"))
        write_stream(sp, np.zeros((1, 2, 4), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            import_pipeline(jp)

    def test_missing_sidecar_rejected(self, tmp_path, rng):
        jp, sp = export_pipeline(small_pipeline(rng), str(tmp_path / "s.json"))
        (tmp_path / "s.mces").unlink()
        with pytest.raises(IoFailure):
            import_pipeline(jp)

    def test_garbled_json_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(InvalidSpec):
            import_pipeline(str(tmp_path / "bad.json"))


class TestLongTermExport:
    def test_document_fields(self, tmp_path, rng):
        mem = LongTermMemory(8)
        mem.append(make_frames(rng, 5, 2, 4))
        jp, sp = export_long_term(mem, str(tmp_path / "ltm.json"))
        doc = json.loads((tmp_path / "ltm.json").read_text())
        assert doc["kind"] == "long_term_snapshot"
        assert doc["capacity"] == 8
        assert doc["next_position_id"] == 5
        assert [e["position_id"] for e in doc["entries"]] == [0, 1, 2, 3, 4]
        assert [e["weight"] for e in doc["entries"]] == [1] * 5
        assert sp == str(tmp_path / "ltm.mces")

    def test_empty_memory_no_sidecar(self, tmp_path):
        jp, sp = export_long_term(LongTermMemory(4), str(tmp_path / "ltm.json"))
        assert sp is None
        assert json.loads((tmp_path / "ltm.json").read_text())["entries"] == []
