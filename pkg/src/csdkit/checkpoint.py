"""Bit-exact checkpoint persistence.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then the payload of little-endian float64 tensors concatenated in
directory order. The header records the format version, model and loss
configs, the optional calibration result, and the tensor directory of
name -> [shape, payload offset]; offsets are contiguous and ascending.
save(load(path)) reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .calibration import CalibrationResult
from .errors import InputError
from .losses import LossConfig
from .model import CsdModel, ModelConfig, build_model

MAGIC = b"CSDKIT01"
FORMAT_VERSION = 1


def save_checkpoint(path, model: CsdModel, loss_cfg: LossConfig,
                    calibration: CalibrationResult | None = None) -> None:
    named = model.named_parameters()
    directory = {}
    offset = 0
    chunks = []
    for name, p in named:
        raw = p.data.astype("<f8").tobytes()
        directory[name] = [list(p.shape), offset]
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "loss_config": loss_cfg.to_dict(),
        "calibration": None if calibration is None else calibration.to_dict(),
        "tensors": directory,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> tuple[CsdModel, LossConfig, CalibrationResult | None]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise InputError(f"{path}: bad checkpoint magic")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    payload_start = header_start + header_len
    if payload_start > len(raw):
        raise InputError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[header_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: unreadable checkpoint header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported format version {header.get('format_version')}")

    cfg = ModelConfig.from_dict(header["model_config"])
    loss_cfg = LossConfig.from_dict(header["loss_config"])
    calibration = (
        None if header["calibration"] is None
        else CalibrationResult.from_dict(header["calibration"])
    )
    model = build_model(cfg, seed=0)

    payload = raw[payload_start:]
    directory = header["tensors"]
    expected_offset = 0
    named = dict(model.named_parameters())
    if set(named) != set(directory):
        raise InputError(f"{path}: tensor directory does not match the model config")
    total = 0
    for name, p in model.named_parameters():
        shape, offset = directory[name]
        if tuple(shape) != p.shape:
            raise InputError(f"{path}: tensor {name} has shape {shape}, expected {p.shape}")
        if offset != expected_offset:
            raise InputError(f"{path}: tensor offsets are not contiguous at {name}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        values = np.frombuffer(payload, dtype="<f8", count=nbytes // 8, offset=offset)
        p.data[...] = values.reshape(tuple(shape))
        expected_offset += nbytes
        total += nbytes
    if total != len(payload):
        raise InputError(f"{path}: payload length {len(payload)} != directory total {total}")
    return model, loss_cfg, calibration
