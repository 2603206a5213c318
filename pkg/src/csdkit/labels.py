"""Per-segment class labels from speaker-activity transcripts.

Classes: 0 = noise only, 1 = single speaker, 2 = concurrent speakers.
A segment's label is the maximum number of distinct simultaneously active
speakers inside its 0.1 s core, capped at 2. The surrounding context
contributes features only, never labels. Cores live on the same 96 ms grid
as the feature segments: core i starts at i * 0.096 + 0.214 s (the segment
window spans 0.528 s, so the core sits 0.214 s in from each edge).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, InputError
from .features import SEGMENT_SECONDS, STRIDE_SECONDS

NUM_CLASSES = 3
CORE_SECONDS = 0.1
CORE_OFFSET_SECONDS = (SEGMENT_SECONDS - CORE_SECONDS) / 2.0  # 0.214


@dataclass(frozen=True)
class TranscriptSegment:
    """One speaker-activity interval [start, end) in seconds."""

    speaker_id: str
    start: float
    end: float

    def __post_init__(self):
        if self.start < 0 or not self.start < self.end:
            raise ContractError(
                f"transcript segment needs 0 <= start < end, got [{self.start}, {self.end})"
            )


@dataclass
class LabelTrack:
    """Per-segment classes in {0,1,2}, index-aligned with feature segments."""

    stride_seconds: float
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size and not np.isin(self.labels, (0, 1, 2)).all():
            raise ContractError("labels must be in {0, 1, 2}")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class ClassStats:
    """Counts, frequencies (%), and mean-normalized inverse-frequency weights."""

    counts: np.ndarray
    frequencies: np.ndarray
    weights: np.ndarray


def concurrency_count(segments: list[TranscriptSegment], t0: float, t1: float) -> int:
    """Maximum number of distinct speakers active at any instant in [t0, t1).

    Exact: activity is piecewise constant with breakpoints at interval
    endpoints, so sweeping t0 plus every endpoint inside (t0, t1) covers
    every piece. Overlapping intervals of the same speaker count once.
    """
    if not t0 < t1:
        raise ContractError(f"concurrency window needs t0 < t1, got [{t0}, {t1})")
    points = {t0}
    for seg in segments:
        if t0 < seg.start < t1:
            points.add(seg.start)
        if t0 < seg.end < t1:
            points.add(seg.end)
    best = 0
    for t in points:
        active = {seg.speaker_id for seg in segments if seg.start <= t < seg.end}
        best = max(best, len(active))
    return best


def label_for_segment(segments: list[TranscriptSegment], core_start: float,
                      core_len: float = CORE_SECONDS) -> int:
    """Class of the segment whose 0.1 s core starts at `core_start`."""
    if core_start < 0:
        raise ContractError(f"core_start must be >= 0, got {core_start}")
    return min(concurrency_count(segments, core_start, core_start + core_len), 2)


def core_start_time(segment_index: int) -> float:
    """Start of segment i's labeling core on the shared 96 ms grid."""
    return segment_index * STRIDE_SECONDS + CORE_OFFSET_SECONDS


def build_label_track(segments: list[TranscriptSegment], num_segments: int) -> LabelTrack:
    """Labels for feature segments 0..num_segments-1 of one clip."""
    labels = np.fromiter(
        (label_for_segment(segments, core_start_time(i)) for i in range(num_segments)),
        dtype=np.int64,
        count=num_segments,
    )
    return LabelTrack(stride_seconds=STRIDE_SECONDS, labels=labels)


def class_stats(track: LabelTrack | np.ndarray) -> ClassStats:
    """Class counts, frequencies in percent, and training weights.

    Weights are total/(K*n_c) with K=3, normalized to mean 1; a class with
    zero count is guarded by substituting n_c = 1 so weights stay finite.
    """
    labels = track.labels if isinstance(track, LabelTrack) else np.asarray(track)
    if labels.size == 0:
        raise InputError("cannot compute class stats of an empty label track")
    counts = np.bincount(labels, minlength=NUM_CLASSES).astype(np.float64)
    total = counts.sum()
    frequencies = 100.0 * counts / total
    raw = total / (NUM_CLASSES * np.maximum(counts, 1.0))
    weights = raw / raw.mean()
    return ClassStats(counts=counts.astype(np.int64), frequencies=frequencies, weights=weights)


# ---------------------------------------------------------------------------
# Transcript parsing: JSON arrays and RTTM-style rows
# ---------------------------------------------------------------------------


def parse_transcript_json(text: str) -> list[TranscriptSegment]:
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"transcript is not valid JSON: {e}") from e
    if not isinstance(rows, list):
        raise InputError("JSON transcript must be an array of {speaker, start, end}")
    out = []
    for row in rows:
        try:
            out.append(TranscriptSegment(str(row["speaker"]), float(row["start"]),
                                         float(row["end"])))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"bad transcript row {row!r}: {e}") from e
    return out


def parse_transcript_rttm(text: str) -> list[TranscriptSegment]:
    """Parse SPEAKER rows; onset and duration are fields 3 and 4.

    Accepts both full RTTM rows (speaker name in field 7) and the compact
    6-field form SPEAKER <file> <channel> <onset> <duration> <speaker>.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0].upper() != "SPEAKER":
            continue
        if len(parts) < 6:
            raise InputError(f"RTTM line {lineno}: expected at least 6 fields")
        try:
            onset, dur = float(parts[3]), float(parts[4])
        except ValueError as e:
            raise InputError(f"RTTM line {lineno}: bad onset/duration") from e
        speaker = parts[7] if len(parts) >= 8 else parts[5]
        if dur <= 0:
            continue
        out.append(TranscriptSegment(speaker, onset, onset + dur))
    return out


def load_transcript(path) -> list[TranscriptSegment]:
    """Load a transcript file, sniffing JSON vs RTTM by suffix then content."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    if suffix == ".json":
        return parse_transcript_json(text)
    if suffix == ".rttm":
        return parse_transcript_rttm(text)
    stripped = text.lstrip()
    if stripped.startswith("["):
        return parse_transcript_json(text)
    return parse_transcript_rttm(text)


def save_transcript_json(path, segments: list[TranscriptSegment]) -> None:
    rows = [{"speaker": s.speaker_id, "start": s.start, "end": s.end} for s in segments]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
