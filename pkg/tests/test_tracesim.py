"""Trace formats, two-core replay semantics, synthetic workload generators."""

import io

import pytest

from seacache.cache import CacheGeometry
from seacache.errors import ConfigError, TraceParseError
from seacache.tracesim import (
    RECORD_STRUCT,
    TraceRecord,
    parse_trace_binary,
    parse_trace_text,
    run_trace,
    synth_trace,
    write_trace_binary,
    write_trace_text,
)


@pytest.fixture
def replay_geometry(default_geometry):
    return default_geometry.scaled(64)  # 2048 lines, 16 ways x 128 sets


class TestTextFormat:
    def test_round_trip(self):
        records = [TraceRecord(0, 0x1234, 1), TraceRecord(1, 0xDEADBEEF, 7)]
        buf = io.StringIO()
        write_trace_text(records, buf)
        assert list(parse_trace_text(buf.getvalue().splitlines())) == records

    def test_comments_blanks_and_default_delta(self):
        text = [
            "# header comment",
            "",
            "0 ff",
            "1 10 3   # trailing comment",
        ]
        out = list(parse_trace_text(text))
        assert out == [TraceRecord(0, 0xFF, 1), TraceRecord(1, 0x10, 3)]

    def test_malformed_reports_line_number(self):
        with pytest.raises(TraceParseError, match="record 3"):
            list(parse_trace_text(["0 1", "# ok", "0 1 2 3"]))
        with pytest.raises(TraceParseError, match="record 1"):
            list(parse_trace_text(["zero ff"]))
        err = None
        try:
            list(parse_trace_text(["0 1", "0 xyzzy_not_hex"]))
        except TraceParseError as exc:
            err = exc
        assert err is not None and err.line_number == 2


class TestBinaryFormat:
    def test_round_trip(self):
        records = [TraceRecord(1, 1 << 39, 2), TraceRecord(0, 5, 1)]
        buf = io.BytesIO()
        write_trace_binary(records, buf)
        buf.seek(0)
        assert list(parse_trace_binary(buf)) == records

    def test_record_is_13_bytes(self):
        assert RECORD_STRUCT.size == 13

    def test_truncated_record_numbered(self):
        buf = io.BytesIO()
        write_trace_binary([TraceRecord(0, 1, 1), TraceRecord(0, 2, 1)], buf)
        clipped = io.BytesIO(buf.getvalue()[:-4])
        with pytest.raises(TraceParseError, match="record 2"):
            list(parse_trace_binary(clipped))


class TestReplay:
    def test_empty_trace(self, replay_geometry):
        m = run_trace([], replay_geometry, 1, 1, seed=0)
        assert m.total.accesses == 0 and m.total.misses == 0
        assert m.total.miss_rate == 0.0 and m.total.mpki == 0.0
        assert m.rekeys == 0

    def test_single_hot_line(self, replay_geometry):
        records = [TraceRecord(0, 42)] * 1000
        m = run_trace(records, replay_geometry, 1, 1, seed=0)
        assert m.total.accesses == 1000
        assert m.total.misses == 1
        assert m.total.miss_rate == pytest.approx(0.001)
        assert m.per_core[1].accesses == 0

    def test_fully_associative_second_pass_is_free(self, default_geometry):
        # invalid-first fill with H = sets_per_way never evicts before the
        # cache is full, so a working set equal to capacity misses only once
        g = default_geometry.scaled(512)  # 256 lines
        h = g.sets_per_way
        records = [TraceRecord(0, a) for a in range(g.num_lines)] * 2
        m = run_trace(records, g, h, h, seed=1, fill_policy="invalid_first")
        assert m.total.misses == g.num_lines

    def test_latency_is_exact_per_h(self, replay_geometry):
        records = [TraceRecord(0, a) for a in range(50)]
        hi = run_trace(records, replay_geometry, 16, 1, seed=2)
        lo = run_trace([TraceRecord(1, a) for a in range(50)], replay_geometry, 16, 1, seed=2)
        assert hi.per_core[0].mean_latency_cycles == 45.0  # 43 + 1 + ceil(16/8) - 1
        assert lo.per_core[1].mean_latency_cycles == 43.0

    def test_cross_core_sharing_forbidden_when_split(self, replay_geometry):
        records = [TraceRecord(0, 7), TraceRecord(1, 7)]
        with pytest.raises(TraceParseError, match="record 2"):
            run_trace(records, replay_geometry, 16, 1, seed=0)

    def test_cross_core_sharing_allowed_when_equal(self, replay_geometry):
        records = [TraceRecord(0, 7), TraceRecord(1, 7)]
        m = run_trace(records, replay_geometry, 4, 4, seed=0)
        assert m.total.accesses == 2
        assert m.total.misses == 1  # the second core hits the shared line

    def test_rekey_counting(self, replay_geometry):
        records = [TraceRecord(0, a) for a in range(1000)]
        m = run_trace(records, replay_geometry, 1, 1, seed=3, rekey_every=250)
        assert m.rekeys == 4
        assert run_trace(records, replay_geometry, 1, 1, seed=3).rekeys == 0
        with pytest.raises(ConfigError, match="rekey_every"):
            run_trace(records, replay_geometry, 1, 1, rekey_every=0)

    def test_rekey_invalidates(self, replay_geometry):
        records = [TraceRecord(0, 5), TraceRecord(0, 5), TraceRecord(0, 5)]
        m = run_trace(records, replay_geometry, 1, 1, seed=4, rekey_every=2)
        # miss, hit (counter reaches 2, rekey), miss again
        assert m.total.misses == 2 and m.rekeys == 1

    def test_instruction_deltas_drive_mpki(self, replay_geometry):
        records = [TraceRecord(0, a, 100) for a in range(10)]
        m = run_trace(records, replay_geometry, 1, 1, seed=5)
        assert not m.mpki_is_mpka
        assert m.total.instructions == 1000
        assert m.total.mpki == pytest.approx(1000.0 * m.total.misses / 1000)

    def test_mpka_flag_without_deltas(self, replay_geometry):
        m = run_trace([TraceRecord(0, 1)], replay_geometry, 1, 1, seed=6)
        assert m.mpki_is_mpka
        assert m.total.mpki == 1000.0  # one miss per one access

    def test_record_validation(self, replay_geometry):
        with pytest.raises(TraceParseError, match="core_id"):
            run_trace([TraceRecord(2, 1)], replay_geometry, 1, 1)
        with pytest.raises(TraceParseError, match="line_address"):
            run_trace([TraceRecord(0, 1 << 40)], replay_geometry, 1, 1)
        with pytest.raises(TraceParseError, match="instruction_delta"):
            run_trace([TraceRecord(0, 1, -1)], replay_geometry, 1, 1)

    def test_per_core_totals_add_up(self, replay_geometry):
        records = synth_trace("mixed-two-core", length=2000, seed=7, ws0_lines=500, ws1_lines=500)
        m = run_trace(records, replay_geometry, 2, 1, seed=8)
        for attr in ("accesses", "misses", "instructions", "total_latency_cycles"):
            assert getattr(m.per_core[0], attr) + getattr(m.per_core[1], attr) == getattr(m.total, attr)


class TestSynth:
    def test_working_set_bounds_and_determinism(self):
        a = synth_trace("working-set", length=500, seed=1, ws_lines=32, base=100, core_id=1)
        b = synth_trace("working-set", length=500, seed=1, ws_lines=32, base=100, core_id=1)
        assert a == b
        assert all(r.core_id == 1 and 100 <= r.line_address < 132 for r in a)
        assert synth_trace("working-set", length=9, seed=1, ws_lines=1) == [TraceRecord(0, 0)] * 9

    def test_strided_wraps(self):
        t = synth_trace("strided", length=6, stride_lines=2, wrap_lines=8, base=10)
        assert [r.line_address for r in t] == [10, 12, 14, 16, 10, 12]

    def test_mixed_ratio_holds_on_every_prefix(self):
        t = synth_trace("mixed-two-core", length=1001, seed=2, core1_fraction=0.25)
        sent1 = 0
        for i, r in enumerate(t, start=1):
            sent1 += r.core_id
            assert abs(sent1 - i * 0.25) <= 1, i
        assert sent1 == int(1001 * 0.25)

    def test_mixed_ranges_disjoint(self):
        t = synth_trace("mixed-two-core", length=400, seed=3, ws0_lines=64, ws1_lines=64, base0=0, base1=64)
        zero = {r.line_address for r in t if r.core_id == 0}
        one = {r.line_address for r in t if r.core_id == 1}
        assert max(zero) < 64 <= min(one)
        with pytest.raises(ConfigError, match="overlap"):
            synth_trace("mixed-two-core", length=10, ws0_lines=64, ws1_lines=64, base0=0, base1=32)

    def test_validation(self):
        with pytest.raises(ConfigError, match="kind"):
            synth_trace("pointer-chase", length=10)
        with pytest.raises(ConfigError, match="length"):
            synth_trace("working-set", length=-1)
        with pytest.raises(ConfigError, match="unknown parameters"):
            synth_trace("working-set", length=1, stride_lines=2)
        with pytest.raises(ConfigError, match="core1_fraction"):
            synth_trace("mixed-two-core", length=1, core1_fraction=1.5)
