import json

import pytest

from protoguide import (
    Observation,
    SegmentDescriptor,
    SegmentGate,
    TraceBackend,
    TraceFile,
    expected_frame_count,
    load_trace,
    oracle_observe,
)
from protoguide.errors import (
    BackendFailure,
    OutOfOrderSegment,
    OverlappingSegment,
    TraceBoundsError,
)


def seg(seq_no, t0, t1, **kw):
    return SegmentDescriptor("s", seq_no, t0, t1, **kw)


def trace_with(records, segment_ms=5000):
    t = TraceFile(header={"segment_ms": segment_ms})
    t.records.update(records)
    return t


class TestSegmentDescriptor:
    def test_rejects_empty_duration(self):
        with pytest.raises(ValueError):
            seg(0, 5000, 5000)

    def test_rejects_oversize(self):
        with pytest.raises(ValueError):
            seg(0, 0, 61000)

    def test_warns_outside_nominal(self):
        with pytest.warns(UserWarning):
            seg(0, 0, 1000)

    def test_nominal_is_silent(self, recwarn):
        seg(0, 0, 5000)
        assert not recwarn.list


@pytest.mark.filterwarnings("ignore::UserWarning")
class TestFrameCount:
    def test_five_seconds_at_4fps_is_20(self):
        assert expected_frame_count(seg(0, 0, 5000)) == 20

    def test_7500ms_at_4fps_is_30(self):
        assert expected_frame_count(seg(0, 0, 7500)) == 30

    def test_ten_seconds_at_4fps_is_40(self):
        assert expected_frame_count(seg(0, 0, 10000)) == 40

    def test_ceil_composition(self):
        # f(d1+d2) in {f(d1)+f(d2), f(d1)+f(d2)-1}
        for d1 in range(4100, 5000, 37):
            for d2 in range(4100, 5000, 53):
                f = expected_frame_count
                total = f(seg(0, 0, d1 + d2))
                parts = f(seg(0, 0, d1)) + f(seg(0, 0, d2))
                assert total in (parts, parts - 1)

    def test_monotone_in_duration(self):
        counts = [expected_frame_count(seg(0, 0, d))
                  for d in range(4500, 9000, 10)]
        assert counts == sorted(counts)


class TestOracleBackend:
    def test_playback_deterministic(self):
        t = trace_with({3: [
            {"t_ms": 15100, "action_label": "a", "confidence": 0.5},
            {"t_ms": 16000, "action_label": "b", "confidence": 0.7},
        ]})
        d = seg(3, 15000, 20000)
        first = oracle_observe(d, t)
        assert len(first) == 2
        assert first == oracle_observe(d, t)

    def test_missing_record_empty(self):
        assert oracle_observe(seg(7, 35000, 40000), trace_with({})) == []

    def test_out_of_bounds_timestamp(self):
        t = trace_with({0: [{"t_ms": 12000, "action_label": "a",
                             "confidence": 0.5}]})
        with pytest.raises(TraceBoundsError):
            oracle_observe(seg(0, 0, 5000), t)


class TestTraceFile:
    def test_load_ndjson(self):
        text = "\n".join([
            json.dumps({"header": {"protocol_id": "p", "segment_ms": 5000}}),
            json.dumps({"seq_no": 0, "observations": [
                {"t_ms": 900, "action_label": "a", "confidence": 0.9},
                {"t_ms": 100, "action_label": "b", "confidence": 0.9},
            ]}),
            json.dumps({"seq_no": 2, "t_start_ms": 20000, "t_end_ms": 26000,
                        "observations": []}),
        ])
        t = load_trace(text)
        assert t.header["protocol_id"] == "p"
        # observations re-sorted by t_ms
        assert [o["t_ms"] for o in t.records[0]] == [100, 900]
        assert t.segment_bounds(0) == (0, 5000)
        assert t.segment_bounds(2) == (20000, 26000)

    def test_header_required(self):
        with pytest.raises(ValueError):
            load_trace(json.dumps({"seq_no": 0, "observations": []}))


class TestSegmentGate:
    def make_gate(self, records=None):
        return SegmentGate(TraceBackend(trace_with(records or {})))

    def test_first_segment_acked(self):
        gate = self.make_gate({0: [{"t_ms": 100, "action_label": "a",
                                    "confidence": 0.9}]})
        ack, obs = gate.submit(seg(0, 0, 5000))
        assert ack.seq_no == 0
        assert ack.expected_frames == 20
        assert len(obs) == 1

    def test_repeated_seq_no_rejected(self):
        gate = self.make_gate()
        gate.submit(seg(0, 0, 5000))
        with pytest.raises(OutOfOrderSegment):
            gate.submit(seg(0, 5000, 10000))

    def test_gap_in_seq_no_allowed(self):
        gate = self.make_gate()
        gate.submit(seg(0, 0, 5000))
        ack, _ = gate.submit(seg(5, 30000, 35000))
        assert ack.seq_no == 5

    def test_time_overlap_rejected(self):
        gate = self.make_gate()
        gate.submit(seg(0, 0, 5000))
        with pytest.raises(OverlappingSegment):
            gate.submit(seg(1, 4000, 9000))

    def test_backend_failure_quarantines_segment(self):
        # Observation out of segment bounds makes the oracle fail.
        gate = self.make_gate({0: [{"t_ms": 99999, "action_label": "a",
                                    "confidence": 0.9}]})
        with pytest.raises(BackendFailure):
            gate.submit(seg(0, 0, 5000))
        # ordering state untouched: the same seq_no can be resubmitted
        ack, obs = gate.submit(seg(0, 0, 5000, payload_ref="fixed"),
                               inline=[])
        assert ack.seq_no == 0

    def test_no_reordering_across_segments(self):
        gate = self.make_gate({
            0: [{"t_ms": 4000, "action_label": "a", "confidence": 0.9},
                {"t_ms": 1000, "action_label": "b", "confidence": 0.9}],
            1: [{"t_ms": 5500, "action_label": "c", "confidence": 0.9}],
        })
        _, obs0 = gate.submit(seg(0, 0, 5000))
        _, obs1 = gate.submit(seg(1, 5000, 10000))
        times = [o.t_ms for o in obs0 + obs1]
        assert times == sorted(times)


class TestObservation:
    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            Observation("s", 0, 0, "a", 1.5)

    def test_event_vocabulary_closed(self):
        with pytest.raises(ValueError):
            Observation("s", 0, 0, "a", 0.5, events=("sneeze",))

    def test_json_roundtrip(self):
        o = Observation("s", 2, 123, "a", 0.5,
                        detected_materials=("PBS",),
                        events=("spill",))
        assert Observation.from_json(o.to_json(), "s", 2) == o
