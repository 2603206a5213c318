"""Manifest entries -> aligned (segment features, labels) arrays.

Spectrograms can be cached as .npy files when the CSDKIT_CACHE_DIR
environment variable is set (the only environment variable this package
reads); the cache key covers path, size, and mtime.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import Spectrogram, segmentize, stft_log_spectrum
from .labels import build_label_track, load_transcript
from .manifest import ManifestEntry, split_entries
from .wavio import read_wav

CACHE_ENV = "CSDKIT_CACHE_DIR"


@dataclass
class SplitData:
    """Featurized split: per-segment (N, 257, 32) views plus labels."""

    features: list[np.ndarray]
    labels: np.ndarray
    start_times: np.ndarray

    def __len__(self) -> int:
        return len(self.features)


def _cache_path(audio_path: Path) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    stat = audio_path.stat()
    key = f"{audio_path.resolve()}|{stat.st_size}|{stat.st_mtime_ns}"
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:32]
    return Path(root) / f"spec_{digest}.npy"


def load_spectrogram(audio_path) -> Spectrogram:
    """Read and featurize one file, via the optional on-disk cache."""
    audio_path = Path(audio_path)
    cached = _cache_path(audio_path)
    if cached is not None and cached.exists():
        return Spectrogram(values=np.load(cached))
    spec = stft_log_spectrum(read_wav(audio_path))
    if cached is not None:
        cached.parent.mkdir(parents=True, exist_ok=True)
        np.save(cached, spec.values)
    return spec


def load_split(entries: list[ManifestEntry], split: str) -> SplitData:
    """Featurize and label every manifest entry of one split, in order."""
    features: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    starts: list[float] = []
    for entry in split_entries(entries, split):
        segments = segmentize(load_spectrogram(entry.audio_path))
        transcript = load_transcript(entry.transcript_path)
        track = build_label_track(transcript, len(segments))
        features.extend(seg.data for seg in segments)
        starts.extend(seg.start_time for seg in segments)
        labels.append(track.labels)
    joined = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    return SplitData(features=features, labels=joined,
                     start_times=np.asarray(starts, dtype=np.float64))
