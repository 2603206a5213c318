"""Dataset manifests: JSON arrays of {audio_path, transcript_path, split}."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: Path
    transcript_path: Path
    split: str


def load_manifest(path) -> list[ManifestEntry]:
    """Load and validate a manifest; relative paths resolve next to the file."""
    path = Path(path)
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: unreadable manifest: {e}") from e
    if not isinstance(rows, list):
        raise InputError(f"{path}: manifest must be a JSON array")
    base = path.parent
    entries = []
    for row in rows:
        try:
            audio = base / row["audio_path"]
            transcript = base / row["transcript_path"]
            split = row["split"]
        except (KeyError, TypeError) as e:
            raise InputError(f"{path}: bad manifest row {row!r}") from e
        if split not in SPLITS:
            raise InputError(f"{path}: split {split!r} not in {SPLITS}")
        for p in (audio, transcript):
            if not p.exists():
                raise InputError(f"{path}: referenced file does not exist: {p}")
        entries.append(ManifestEntry(audio, transcript, split))
    return entries


def save_manifest(path, rows: list[dict]) -> None:
    """Write manifest rows (already relative to the manifest's directory)."""
    Path(path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")


def split_entries(entries: list[ManifestEntry], split: str) -> list[ManifestEntry]:
    if split not in SPLITS:
        raise InputError(f"unknown split {split!r}; expected one of {SPLITS}")
    return [e for e in entries if e.split == split]
