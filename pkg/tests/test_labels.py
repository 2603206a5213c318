import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csdkit.errors import ContractError, InputError
from csdkit.labels import (
    CORE_OFFSET_SECONDS,
    ClassStats,
    LabelTrack,
    TranscriptSegment,
    build_label_track,
    class_stats,
    concurrency_count,
    core_start_time,
    label_for_segment,
    load_transcript,
    parse_transcript_rttm,
)


def _seg(spk, start, end):
    return TranscriptSegment(speaker_id=spk, start=start, end=end)


def brute_force_concurrency(segments, t0, t1, step=0.001):
    """Independent 1 ms sampling oracle (exact when times are ms-quantized)."""
    best = 0
    t = t0
    while t < t1:
        active = {s.speaker_id for s in segments if s.start <= t < s.end}
        best = max(best, len(active))
        t = round(t + step, 6)
    return best


def random_ms_intervals(rng, n):
    """Random interval sets with millisecond-quantized endpoints."""
    out = []
    for _ in range(n):
        start = round(float(rng.integers(0, 3000)) / 1000.0, 3)
        dur = round(float(rng.integers(50, 1200)) / 1000.0, 3)
        spk = f"spk{int(rng.integers(0, 4))}"
        out.append(_seg(spk, start, start + dur))
    return out


class TestConcurrencyCount:
    def test_empty(self):
        assert concurrency_count([], 0.0, 1.0) == 0

    def test_overlapping_pair(self):
        segs = [_seg("A", 0.0, 1.0), _seg("B", 0.5, 2.0)]
        assert concurrency_count(segs, 0.0, 2.0) == 2

    def test_same_speaker_counts_once(self):
        segs = [_seg("A", 0.0, 1.0), _seg("A", 0.2, 0.8)]
        assert concurrency_count(segs, 0.0, 1.0) == 1

    def test_invalid_window(self):
        with pytest.raises(ContractError):
            concurrency_count([], 1.0, 1.0)

    def test_matches_millisecond_brute_force(self, rng):
        for _ in range(120):
            segs = random_ms_intervals(rng, int(rng.integers(0, 7)))
            t0 = round(float(rng.integers(0, 2000)) / 1000.0, 3)
            t1 = t0 + round(float(rng.integers(100, 1500)) / 1000.0, 3)
            assert concurrency_count(segs, t0, t1) == brute_force_concurrency(segs, t0, t1)


class TestLabelForSegment:
    def test_silence(self):
        assert label_for_segment([], 1.0) == 0

    def test_three_speakers_cap_at_two(self):
        segs = [_seg(s, 0.0, 1.0) for s in "ABC"]
        assert label_for_segment(segs, 0.2) == 2

    def test_context_only_activity_keeps_core_silent(self):
        # active just before the core and just after it, silent inside
        core = 2.0
        segs = [_seg("A", 1.5, 1.999), _seg("B", 2.101, 2.4)]
        assert label_for_segment(segs, core) == 0

    def test_touching_core_start_counts(self):
        assert label_for_segment([_seg("A", 2.0, 2.01)], 2.0) == 1

    def test_touching_core_end_does_not_count(self):
        # activity starting exactly at core end is outside the half-open core
        assert label_for_segment([_seg("A", 2.1, 2.5)], 2.0) == 0

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["A", "B", "C"]),
                st.floats(min_value=0.0, max_value=3.0),
                st.floats(min_value=0.01, max_value=1.0),
            ),
            max_size=6,
        ),
        st.tuples(
            st.sampled_from(["A", "B", "C"]),
            st.floats(min_value=0.0, max_value=3.0),
            st.floats(min_value=0.01, max_value=1.0),
        ),
    )
    def test_monotone_in_added_segments(self, rows, extra):
        segs = [_seg(s, t, t + d) for s, t, d in rows]
        added = segs + [_seg(extra[0], extra[1], extra[1] + extra[2])]
        for core in (0.0, 0.5, 1.0, 2.0):
            assert label_for_segment(added, core) >= label_for_segment(segs, core)


class TestLabelTrack:
    def test_core_grid(self):
        assert core_start_time(0) == pytest.approx(CORE_OFFSET_SECONDS)
        assert core_start_time(3) == pytest.approx(3 * 0.096 + CORE_OFFSET_SECONDS)

    def test_track_alignment(self):
        # cores overlap their left neighbor by core_len - stride = 4 ms, so
        # slot-aligned activity starts that margin in to hit exactly one core
        margin = 0.1 - 0.096
        segs = [_seg("A", core_start_time(1) + margin, core_start_time(2))]
        track = build_label_track(segs, 4)
        assert track.labels.tolist() == [0, 1, 0, 0]

    def test_boundary_sliver_is_shared_between_neighbors(self):
        # activity inside the shared 4 ms sliver raises both segments' labels
        segs = [_seg("A", core_start_time(1), core_start_time(1) + 0.002)]
        track = build_label_track(segs, 3)
        assert track.labels.tolist() == [1, 1, 0]

    def test_rejects_bad_labels(self):
        with pytest.raises(ContractError):
            LabelTrack(stride_seconds=0.096, labels=np.array([0, 3]))


class TestClassStats:
    def test_balanced(self):
        stats = class_stats(LabelTrack(0.096, np.array([0, 1, 2])))
        np.testing.assert_allclose(stats.frequencies, [100 / 3] * 3)
        np.testing.assert_allclose(stats.weights, [1.0, 1.0, 1.0])

    def test_meeting_like_imbalance(self):
        # frequencies 16.8 / 71.8 / 11.4; the stated weight rule is
        # total/(3*n_c) normalized to mean 1, i.e. (1/f_c) / mean(1/f).
        labels = np.concatenate([np.zeros(168), np.ones(718), np.full(114, 2)])
        stats = class_stats(LabelTrack(0.096, labels.astype(int)))
        np.testing.assert_allclose(stats.frequencies, [16.8, 71.8, 11.4])
        inv = 1.0 / np.array([0.168, 0.718, 0.114])
        expected = inv / inv.mean()  # oracle: the formula evaluated directly
        np.testing.assert_allclose(stats.weights, expected, rtol=1e-12)
        np.testing.assert_allclose(expected, [1.107965, 0.259245, 1.632790], atol=1e-5)
        assert stats.weights.mean() == pytest.approx(1.0)

    def test_degenerate_single_class_uses_guard(self):
        stats = class_stats(LabelTrack(0.096, np.ones(5, dtype=int)))
        assert (stats.weights > 0).all()
        assert stats.counts.tolist() == [0, 5, 0]

    def test_frequencies_sum_to_100(self, rng):
        for _ in range(20):
            labels = rng.integers(0, 3, size=int(rng.integers(1, 200)))
            stats = class_stats(LabelTrack(0.096, labels))
            assert abs(stats.frequencies.sum() - 100.0) < 0.1

    def test_empty_track_is_an_error(self):
        with pytest.raises(InputError):
            class_stats(LabelTrack(0.096, np.array([], dtype=int)))


class TestTranscriptParsing:
    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text('[{"speaker": "A", "start": 0.5, "end": 1.5}]')
        segs = load_transcript(path)
        assert segs == [_seg("A", 0.5, 1.5)]

    def test_rttm_standard_rows(self):
        text = (
            "SPEAKER meet 1 0.50 1.00 <NA> <NA> alice <NA> <NA>\n"
            "SPEAKER meet 1 2.00 0.50 <NA> <NA> bob <NA> <NA>\n"
        )
        segs = parse_transcript_rttm(text)
        assert segs == [_seg("alice", 0.5, 1.5), _seg("bob", 2.0, 2.5)]

    def test_rttm_compact_rows(self):
        segs = parse_transcript_rttm("SPEAKER f 1 1.0 2.0 carol\n")
        assert segs == [_seg("carol", 1.0, 3.0)]

    def test_rttm_skips_comments_and_other_types(self):
        text = "# comment\nLEXEME f 1 0 1 <NA> <NA> x <NA> <NA>\n"
        assert parse_transcript_rttm(text) == []

    def test_rttm_file_extension(self, tmp_path):
        path = tmp_path / "t.rttm"
        path.write_text("SPEAKER f 1 0.0 1.0 <NA> <NA> dave <NA> <NA>\n")
        assert load_transcript(path) == [_seg("dave", 0.0, 1.0)]

    def test_bad_interval_rejected(self):
        with pytest.raises(ContractError):
            _seg("A", 1.0, 1.0)
        with pytest.raises(ContractError):
            _seg("A", -0.5, 1.0)
