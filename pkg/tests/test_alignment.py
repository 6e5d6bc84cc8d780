import math
import random

import numpy as np
import pytest

from protoguide import (
    OFF,
    AlignmentConfig,
    brute_force_align,
    init_alignment,
)
from protoguide.alignment.kernels import _viterbi_step_py, viterbi_step
from protoguide.errors import (
    EmptySession,
    InstanceTooLarge,
    NonMonotoneTimestamp,
)

from conftest import make_protocol, obs, random_config, random_instance


class TestInit:
    def test_one_step_column(self):
        st = init_alignment(make_protocol(1))
        assert st.scores.shape == (2,)
        assert st.scores[0] == 0.0
        assert st.scores[1] == -math.log(50)

    def test_three_step_skip_prior(self):
        st = init_alignment(make_protocol(3))
        assert st.scores[2] == -(math.log(10) * 2)

    def test_off_prior(self):
        cfg = AlignmentConfig(off_penalty=1.25)
        st = init_alignment(make_protocol(2), cfg)
        assert st.scores[2] == -1.25


class TestIngest:
    def test_single_step_match(self):
        st = init_alignment(make_protocol(1))
        u = st.ingest(obs(0, 100, "act0", conf=0.9))
        assert u.reported_state == 0
        assert u.map_logscore == pytest.approx(math.log(0.9))

    def test_perfect_three_step_stream(self, protocol3):
        st = init_alignment(protocol3)
        observations = [obs(0, 1000, "act0"), obs(0, 2000, "act1"),
                        obs(0, 3000, "act2")]
        for o in observations:
            u = st.ingest(o)
        assert u.reported_state == 2
        path, score = brute_force_align(protocol3, observations)
        assert st.map_path() == path == [0, 1, 2]
        assert float(st.scores.max()) == score

    def test_first_obs_for_last_step_skips_ahead(self, protocol3):
        # Winner among {skip-to-2, OFF} under default penalties was fixed
        # by brute-force enumeration: the skip wins.
        observations = [obs(0, 1000, "act2", conf=0.9)]
        path, score = brute_force_align(protocol3, observations)
        assert path == [2]
        st = init_alignment(protocol3)
        u = st.ingest(observations[0])
        assert u.reported_state == 2
        assert u.map_logscore == score
        assert score == pytest.approx(-(math.log(10) * 2) + math.log(0.9))

    def test_non_monotone_timestamp(self, protocol3):
        st = init_alignment(protocol3)
        st.ingest(obs(0, 1000, "act0"))
        with pytest.raises(NonMonotoneTimestamp):
            st.ingest(obs(0, 999, "act0"))

    def test_equal_timestamp_allowed(self, protocol3):
        st = init_alignment(protocol3)
        st.ingest(obs(0, 1000, "act0"))
        st.ingest(obs(0, 1000, "act0"))
        assert st.T == 2


class TestFinalize:
    def test_perfect_trace_three_intervals(self, protocol3):
        st = init_alignment(protocol3)
        for i in range(3):
            st.ingest(obs(0, 1000 + i * 2000, f"act{i}"))
        seg = st.finalize(9000)
        assert [iv.state for iv in seg.intervals] == [0, 1, 2]
        # boundaries at observation midpoints; ends at session end
        assert seg.intervals[0].t_start_ms == 1000
        assert seg.intervals[0].t_end_ms == 2000
        assert seg.intervals[1].t_end_ms == 4000
        assert seg.intervals[2].t_end_ms == 9000

    def test_all_unknown_is_single_off_interval(self, protocol3):
        st = init_alignment(protocol3)
        observations = [obs(0, i * 1000, "unknown") for i in range(3)]
        for o in observations:
            st.ingest(o)
        path, _ = brute_force_align(protocol3, observations)
        assert path == [OFF, OFF, OFF]
        seg = st.finalize(5000)
        assert len(seg.intervals) == 1
        assert seg.intervals[0].state == OFF

    def test_empty_session(self, protocol3):
        st = init_alignment(protocol3)
        with pytest.raises(EmptySession):
            st.finalize(1000)

    def test_intervals_partition_session(self):
        rng = random.Random(7)
        for _ in range(30):
            p, observations, cfg = random_instance(rng)
            st = init_alignment(p, cfg)
            for o in observations:
                st.ingest(o)
            end = observations[-1].t_ms + 1000
            seg = st.finalize(end)
            assert seg.intervals[0].t_start_ms == observations[0].t_ms
            assert seg.intervals[-1].t_end_ms == end
            for a, b in zip(seg.intervals, seg.intervals[1:]):
                assert a.t_end_ms == b.t_start_ms
                assert a.state != b.state


class TestOracle:
    def test_guard(self, protocol3):
        observations = [obs(0, i, "act0") for i in range(13)]
        # 4^13 > 10^7
        with pytest.raises(InstanceTooLarge):
            brute_force_align(protocol3, observations)

    def test_t1_n1(self):
        p = make_protocol(1)
        path, score = brute_force_align(p, [obs(0, 0, "act0", conf=1.0)])
        assert path == [0]
        assert score == 0.0

    def test_randomized_equivalence_small(self):
        rng = random.Random(42)
        for _ in range(50):
            p, observations, cfg = random_instance(rng, max_paths=5000)
            st = init_alignment(p, cfg)
            for o in observations:
                st.ingest(o)
            opath, oscore = brute_force_align(p, observations, cfg)
            assert float(st.scores.max()) == oscore
            assert st.map_path() == opath


class TestProperties:
    def test_permutation_sanity(self):
        for n in (2, 5, 9):
            p = make_protocol(n)
            st = init_alignment(p)
            for i in range(n):
                st.ingest(obs(0, i * 1000, f"act{i}", conf=1.0))
            assert st.map_path() == list(range(n))

    def test_confidence_scaling_keeps_argmax(self, protocol3):
        # All candidate paths share the same match count, so a uniform
        # confidence scale shifts every path score equally.
        base = [obs(0, i * 1000, f"act{i}", conf=0.9) for i in range(3)]
        for lam in (1.0, 0.5, 0.1):
            scaled = [obs(0, o.t_ms, o.action_label,
                          conf=o.confidence * lam) for o in base]
            st = init_alignment(protocol3)
            for o in scaled:
                st.ingest(o)
            assert st.map_path() == [0, 1, 2]

    def test_map_logscore_finite(self):
        rng = random.Random(3)
        p, observations, cfg = random_instance(rng)
        st = init_alignment(p, cfg)
        for o in observations:
            u = st.ingest(o)
            assert math.isfinite(u.map_logscore)


class TestKernelTwins:
    def test_numba_and_python_paths_bit_identical(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            prev = rng.normal(size=n + 1) * 10
            emit = rng.normal(size=n + 1)
            sp, rp, op = rng.uniform(0.1, 5.0, size=3)
            jit_scores, jit_bp = viterbi_step(prev, emit, sp, rp, op)
            py_scores = np.empty_like(prev)
            py_bp = np.empty(n + 1, dtype=np.int64)
            _viterbi_step_py(prev, emit, sp, rp, op, py_scores, py_bp)
            assert np.array_equal(jit_scores, py_scores)
            assert np.array_equal(jit_bp, py_bp)


class TestReportMargin:
    def test_hysteresis_holds_state(self, protocol3):
        cfg = AlignmentConfig(report_margin=100.0)
        st = init_alignment(protocol3, cfg)
        st.ingest(obs(0, 0, "act0", conf=0.9))
        u = st.ingest(obs(0, 1000, "act1", conf=0.9))
        # margin is huge: the display sticks to step 0
        assert u.reported_state == 0

    def test_zero_margin_flips_immediately(self, protocol3):
        st = init_alignment(protocol3)
        st.ingest(obs(0, 0, "act0", conf=0.9))
        u = st.ingest(obs(0, 1000, "act1", conf=0.9))
        assert u.reported_state == 1
        assert u.state_changed
