"""Deterministic multichannel scene synthesis for training and testing.

Stands in for licensed meeting corpora: "speakers" are amplitude-modulated
harmonic tones with distinct fundamentals, channels are fractionally
delayed, gain-scaled copies of the mix plus independent colored noise, and
the ground-truth transcript is returned alongside the audio.

The activity timeline is planned directly on the labeling grid so the
class-fraction targets are met exactly (up to rounding): the timeline is a
sequence of multi-slot runs, one slot per feature segment, and each slot's
speaker activity is confined to the part of its 0.1 s core that neighboring
cores do not share. Deriving labels from the returned transcript therefore
reproduces the planned classes slot for slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .features import SAMPLE_RATE, AudioClip, frame_count, segment_count
from .labels import CORE_SECONDS, TranscriptSegment, core_start_time

# Sliver of each core shared with its left neighbor (core length minus stride).
_CORE_GAP = CORE_SECONDS - 0.096

_MIN_RUN_SLOTS = 8
_MAX_RUN_SLOTS = 16
_HARMONICS = 6


def _default_f0_ranges() -> list[tuple[float, float]]:
    return [(105.0, 145.0), (155.0, 195.0), (210.0, 250.0), (260.0, 300.0)]


@dataclass
class SceneSpec:
    """Parameters of one synthetic scene; fully determined by `seed`."""

    num_channels: int = 2
    duration_seconds: float = 60.0
    noise_level: float = 0.03
    speaker_f0_ranges: list[tuple[float, float]] = field(default_factory=_default_f0_ranges)
    class_targets: tuple[float, float, float] = (0.2, 0.6, 0.2)
    delay_range: tuple[float, float] = (0.0, 3.0)
    gain_range: tuple[float, float] = (0.7, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.num_channels < 1:
            raise ConfigError(f"num_channels must be >= 1, got {self.num_channels}")
        targets = np.asarray(self.class_targets, dtype=np.float64)
        if targets.shape != (3,) or (targets < 0).any() or abs(targets.sum() - 1.0) > 1e-9:
            raise ConfigError(
                f"class targets must be 3 nonnegative fractions summing to 1, "
                f"got {self.class_targets}"
            )
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        if len(self.speaker_f0_ranges) < 2:
            raise ConfigError("need at least two speaker f0 ranges (one per voice line)")
        if _plan_slots(self) < 1:
            raise ConfigError(
                f"duration {self.duration_seconds}s is too short to label even one segment"
            )

    def to_dict(self) -> dict:
        return {
            "num_channels": self.num_channels,
            "duration_seconds": self.duration_seconds,
            "noise_level": self.noise_level,
            "speaker_f0_ranges": [list(r) for r in self.speaker_f0_ranges],
            "class_targets": list(self.class_targets),
            "delay_range": list(self.delay_range),
            "gain_range": list(self.gain_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if "speaker_f0_ranges" in d:
            d["speaker_f0_ranges"] = [tuple(r) for r in d["speaker_f0_ranges"]]
        for key in ("class_targets", "delay_range", "gain_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _plan_slots(spec: SceneSpec) -> int:
    samples = int(round(spec.duration_seconds * SAMPLE_RATE))
    return segment_count(frame_count(samples))


def _quotas(targets, slots: int) -> np.ndarray:
    """Largest-remainder allocation of `slots` among the three classes."""
    exact = np.asarray(targets, dtype=np.float64) * slots
    counts = np.floor(exact).astype(np.int64)
    remainder = exact - counts
    for i in np.argsort(-remainder)[: slots - counts.sum()]:
        counts[i] += 1
    return counts


def plan_timeline(spec: SceneSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-slot classes meeting the class-fraction quotas exactly.

    Slots are grouped into runs of 8-16 so segments mostly see homogeneous
    context. Reusing the rng that synth_scene passes keeps both on one
    deterministic stream; calling with no rng reproduces the same plan.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    slots = _plan_slots(spec)
    remaining = _quotas(spec.class_targets, slots)
    classes = np.empty(slots, dtype=np.int64)
    pos = 0
    while pos < slots:
        weights = remaining / remaining.sum()
        cls = int(rng.choice(3, p=weights))
        run = int(rng.integers(_MIN_RUN_SLOTS, _MAX_RUN_SLOTS + 1))
        run = min(run, int(remaining[cls]), slots - pos)
        classes[pos:pos + run] = cls
        remaining[cls] -= run
        pos += run
    return classes


def _runs(mask: np.ndarray):
    """(start, stop) slot index pairs of the True runs in a boolean mask."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def _slot_window(start_slot: int, stop_slot: int) -> tuple[float, float]:
    """Activity window covering cores start..stop-1 and no neighboring core."""
    return core_start_time(start_slot) + _CORE_GAP, core_start_time(stop_slot)


def _harmonic_burst(rng: np.random.Generator, t: np.ndarray, f0: float,
                    amp: float) -> np.ndarray:
    """Amplitude-modulated harmonic stack with a short fade at both ends."""
    wave = np.zeros_like(t)
    for k in range(1, _HARMONICS + 1):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave += np.sin(2.0 * np.pi * k * f0 * t + phase) / k
    wave /= sum(1.0 / k for k in range(1, _HARMONICS + 1))  # unit peak scale
    mod_rate = rng.uniform(3.0, 7.0)
    mod_phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.6 + 0.4 * np.sin(2.0 * np.pi * mod_rate * t + mod_phase)
    fade = min(len(t) // 4, int(0.01 * SAMPLE_RATE))
    if fade > 0:
        ramp = np.linspace(0.0, 1.0, fade)
        envelope[:fade] *= ramp
        envelope[-fade:] *= ramp[::-1]
    return amp * envelope * wave


def _fractional_delay(x: np.ndarray, delay: float) -> np.ndarray:
    idx = np.arange(len(x), dtype=np.float64) - delay
    return np.interp(idx, np.arange(len(x), dtype=np.float64), x, left=0.0, right=0.0)


def synth_scene(spec: SceneSpec) -> tuple[AudioClip, list[TranscriptSegment]]:
    """Generate one scene: (multichannel clip, ground-truth transcript)."""
    rng = np.random.default_rng(spec.seed)
    classes = plan_timeline(spec, rng)
    samples = int(round(spec.duration_seconds * SAMPLE_RATE))

    # Voice line 1 carries classes {1, 2}; line 2 joins for class 2. The two
    # lines draw from disjoint speaker pools so concurrency is always between
    # distinct speaker ids.
    pool = spec.speaker_f0_ranges
    half = max(1, len(pool) // 2)
    line_pools = [list(range(half)), list(range(half, len(pool)))]
    line_masks = [classes >= 1, classes == 2]

    mix = np.zeros(samples)
    transcript: list[TranscriptSegment] = []
    for line, (mask, speakers) in enumerate(zip(line_masks, line_pools)):
        for start_slot, stop_slot in _runs(mask):
            t0, t1 = _slot_window(int(start_slot), int(stop_slot))
            spk = int(speakers[int(rng.integers(len(speakers)))])
            lo, hi = pool[spk]
            f0 = float(rng.uniform(lo, hi))
            amp = float(rng.uniform(0.25, 0.4))
            i0 = int(round(t0 * SAMPLE_RATE))
            i1 = min(int(round(t1 * SAMPLE_RATE)), samples)
            if i1 <= i0:
                continue
            t = np.arange(i1 - i0, dtype=np.float64) / SAMPLE_RATE
            mix[i0:i1] += _harmonic_burst(rng, t, f0, amp)
            transcript.append(TranscriptSegment(f"spk{spk}", t0, t1))

    channels = np.zeros((spec.num_channels, samples))
    for c in range(spec.num_channels):
        delay = float(rng.uniform(*spec.delay_range)) if c else 0.0
        gain = float(rng.uniform(*spec.gain_range)) if c else 1.0
        channels[c] = gain * _fractional_delay(mix, delay)
    for c in range(spec.num_channels):
        colored = _ar1(rng.standard_normal(samples), 0.9)
        rms = np.sqrt(np.mean(colored ** 2))
        if rms > 0:
            colored *= spec.noise_level / rms
        channels[c] += colored

    peak = np.abs(channels).max()
    if peak > 0.98:
        channels *= 0.98 / peak

    transcript.sort(key=lambda s: (s.start, s.end, s.speaker_id))
    return AudioClip(sample_rate=SAMPLE_RATE, channels=channels), transcript


def _ar1(white: np.ndarray, a: float) -> np.ndarray:
    """Colored noise y[n] = a*y[n-1] + white[n] (one-pole lowpass)."""
    return lfilter([1.0], [1.0, -a], white)
