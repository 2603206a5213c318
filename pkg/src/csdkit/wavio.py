"""Minimal RIFF/WAVE reader and writer.

Reads PCM16 (format tag 1) and IEEE float32 (tag 3) files at any channel
count; PCM16 samples are scaled by 1/32768 so -32768 maps to -1.0. Writing
supports the same two encodings. Anything else is rejected up front.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .features import SAMPLE_RATE, AudioClip

_FMT_PCM = 1
_FMT_FLOAT = 3


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise InputError(f"WAV chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def read_wav(path) -> AudioClip:
    """Read a 16 kHz PCM16 or float32 WAV file into an AudioClip."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise InputError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    for cid, body in _chunks(raw):
        if cid == b"fmt ":
            if len(body) < 16:
                raise InputError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            payload = body
    if fmt is None or payload is None:
        raise InputError(f"{path}: missing fmt or data chunk")
    tag, n_channels, rate, _byte_rate, block_align, bits = fmt
    if n_channels < 1:
        raise InputError(f"{path}: invalid channel count {n_channels}")
    if rate != SAMPLE_RATE:
        raise InputError(
            f"{path}: sample rate {rate} Hz is unsupported; inputs must already be "
            f"{SAMPLE_RATE} Hz (resampling is out of scope)"
        )
    if tag == _FMT_PCM and bits == 16:
        flat = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        samples = flat.astype(np.float64) / 32768.0
    elif tag == _FMT_FLOAT and bits == 32:
        flat = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4")
        samples = flat.astype(np.float64)
    else:
        raise InputError(f"{path}: unsupported WAV encoding (tag {tag}, {bits}-bit)")
    usable = len(samples) // n_channels * n_channels
    channels = samples[:usable].reshape(-1, n_channels).T
    return AudioClip(sample_rate=rate, channels=np.ascontiguousarray(channels))


def write_wav(path, channels: np.ndarray, sample_rate: int = SAMPLE_RATE,
              encoding: str = "float32") -> None:
    """Write (channels, samples) float data as a WAV file."""
    channels = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    n, _ = channels.shape
    interleaved = channels.T.reshape(-1)
    if encoding == "float32":
        tag, bits = _FMT_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    elif encoding == "pcm16":
        tag, bits = _FMT_PCM, 16
        clipped = np.clip(interleaved, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
    else:
        raise InputError(f"unsupported WAV encoding {encoding!r}")

    block_align = n * bits // 8
    fmt_body = struct.pack("<HHIIHH", tag, n, sample_rate,
                           sample_rate * block_align, block_align, bits)
    chunks = b""
    if tag == _FMT_FLOAT:
        fmt_body += struct.pack("<H", 0)  # cbSize; non-PCM also wants a fact chunk
        chunks += b"fact" + struct.pack("<II", 4, channels.shape[1])
    chunks = b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body + chunks
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
