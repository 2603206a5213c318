"""Log-spectrum feature extraction for 16 kHz multichannel audio.

Each clip is analyzed with a periodic Hann window of 512 samples and hop
256 (50% overlap), giving 257 frequency bins per frame. Segments of 32
frames slide by 6 frames (96 ms, the closest hop multiple to the nominal
100 ms step), so features and labels share one 96 ms grid. No centering or
padding is applied: frame f covers samples [f*256, f*256 + 512).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError, ShapeError

SAMPLE_RATE = 16_000
WINDOW = 512
HOP = 256
FREQ_BINS = WINDOW // 2 + 1  # 257
FRAMES_PER_SEGMENT = 32
SEGMENT_STRIDE_FRAMES = 6
LOG_FLOOR = 1e-10

FRAME_HOP_SECONDS = HOP / SAMPLE_RATE  # 0.016
STRIDE_SECONDS = SEGMENT_STRIDE_FRAMES * FRAME_HOP_SECONDS  # 0.096
SEGMENT_SAMPLES = WINDOW + (FRAMES_PER_SEGMENT - 1) * HOP  # 8448
SEGMENT_SECONDS = SEGMENT_SAMPLES / SAMPLE_RATE  # 0.528

# Periodic Hann (np.hanning is symmetric, which would misplace bin centers).
_HANN = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(WINDOW) / WINDOW)


@dataclass
class AudioClip:
    """Multichannel waveform at 16 kHz, shaped (channels, samples)."""

    sample_rate: int
    channels: np.ndarray

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if self.channels.ndim != 2:
            raise ShapeError(f"clip channels must be 2-D, got {self.channels.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise InputError(
                f"clip sample rate {self.sample_rate} Hz is unsupported; inputs must "
                f"already be {SAMPLE_RATE} Hz (resampling is out of scope)"
            )
        if not np.all(np.isfinite(self.channels)):
            raise InputError("clip holds non-finite samples")

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def num_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate


@dataclass
class Spectrogram:
    """Log-magnitude STFT grid, shaped (channels, 257, frames)."""

    values: np.ndarray
    frame_hop_seconds: float = FRAME_HOP_SECONDS

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[2]


@dataclass
class SegmentTensor:
    """One model input: (channels, 257, 32) log-spectrum block."""

    data: np.ndarray
    start_time: float


def frame_count(num_samples: int) -> int:
    """Number of STFT frames for a clip of `num_samples` samples."""
    if num_samples < WINDOW:
        return 0
    return (num_samples - WINDOW) // HOP + 1


def segment_count(num_frames: int) -> int:
    """Number of 32-frame segments at stride 6 over `num_frames` frames."""
    if num_frames < FRAMES_PER_SEGMENT:
        return 0
    return (num_frames - FRAMES_PER_SEGMENT) // SEGMENT_STRIDE_FRAMES + 1


def stft_log_spectrum(clip: AudioClip) -> Spectrogram:
    """Per-channel log-magnitude STFT: log(|rfft(hann * frame)| + 1e-10)."""
    if clip.num_samples < WINDOW:
        raise InputError(
            f"clip of {clip.num_samples} samples is shorter than one {WINDOW}-sample window"
        )
    frames = sliding_window_view(clip.channels, WINDOW, axis=1)[:, ::HOP, :]
    spectrum = np.fft.rfft(frames * _HANN, axis=-1)
    values = np.log(np.abs(spectrum) + LOG_FLOOR)
    return Spectrogram(values=np.ascontiguousarray(values.transpose(0, 2, 1)))


def segmentize(spec: Spectrogram) -> list[SegmentTensor]:
    """Sliding 32-frame windows, stride 6 frames; trailing partials dropped.

    Fewer than 32 frames yields an empty list, not an error.
    """
    count = segment_count(spec.num_frames)
    segments = []
    for i in range(count):
        lo = i * SEGMENT_STRIDE_FRAMES
        segments.append(
            SegmentTensor(
                data=spec.values[:, :, lo:lo + FRAMES_PER_SEGMENT],
                start_time=i * STRIDE_SECONDS,
            )
        )
    return segments
