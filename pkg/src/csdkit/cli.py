"""Command-line surface: synth, train, eval, calibrate, infer.

Exit codes: 0 success, 1 runtime/numeric failure, 2 input/contract error.
Every command is deterministic given its seed and inputs; primary outputs
(wavs, transcripts, manifests, checkpoints, logs, reports) are written so
reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import apply_policy_batch, fit_temperature, softmax_probs
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config_or_profile
from .dataset import load_split
from .errors import ConfigError, ContractError, InputError, NumericError
from .features import segmentize, stft_log_spectrum
from .labels import class_stats
from .losses import cost_matrix_from_confusion, with_cost_matrix
from .manifest import load_manifest, save_manifest
from .metrics import TASKS, build_report, confusion_matrix, format_report_csv, \
    format_report_text
from .model import build_model
from .synth import synth_scene
from .training import predict_logits, train
from .wavio import read_wav, write_wav


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_config_or_profile(args.config)
    out = Path(args.out)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)

    from .labels import save_transcript_json

    rows = []
    scene_index = 0
    for split in ("train", "val", "test"):
        for k in range(int(cfg.scene.scenes_per_split.get(split, 0))):
            spec = replace(cfg.scene.spec, seed=cfg.scene.spec.seed + scene_index)
            clip, transcript = synth_scene(spec)
            stem = f"{split}_{k:03d}"
            write_wav(out / "audio" / f"{stem}.wav", clip.channels)
            save_transcript_json(out / "transcripts" / f"{stem}.json", transcript)
            rows.append({
                "audio_path": f"audio/{stem}.wav",
                "transcript_path": f"transcripts/{stem}.json",
                "split": split,
            })
            scene_index += 1
    save_manifest(out / "manifest.json", rows)
    print(f"synth: wrote {scene_index} scenes and manifest to {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _val_confusion(model, data) -> np.ndarray:
    logits = predict_logits(model, data.features)
    preds = logits.argmax(axis=1)
    return confusion_matrix(preds, data.labels)


def _confusion_cost(confusion: np.ndarray, cost_matrix: np.ndarray) -> float:
    """Validation quantity the CS stage optimizes: sum confusion_ij * C_ij."""
    rates = np.nan_to_num(np.asarray(confusion), nan=0.0) / 100.0
    return float(np.sum(rates * cost_matrix))


def _confusion_json(confusion: np.ndarray) -> list:
    return [[None if np.isnan(v) else float(v) for v in row] for row in confusion]


def cmd_train(args) -> int:
    cfg = load_config_or_profile(args.config)
    manifest_path = Path(args.manifest) if args.manifest else cfg.manifest
    if manifest_path is None:
        raise ConfigError("no manifest: set 'manifest' in the config or pass --manifest")
    entries = load_manifest(manifest_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_data = load_split(entries, "train")
    val_data = load_split(entries, "val")
    if len(train_data) == 0:
        raise InputError("training split is empty")

    loss_cfg = cfg.loss
    if cfg.auto_class_weights:
        loss_cfg = replace(loss_cfg, class_weights=class_stats(train_data.labels).weights)

    model = build_model(cfg.model, seed=cfg.seed)
    written: list[Path] = []
    try:
        stage1_loss = replace(loss_cfg, cs_enabled=False)
        history1 = train(model, train_data.features, train_data.labels,
                         cfg.train, stage1_loss)
        confusion1 = _val_confusion(model, val_data) if len(val_data) else None

        ckpt1 = out / "stage1.ckpt"
        save_checkpoint(ckpt1, model, stage1_loss)
        written.append(ckpt1)

        log = {
            "stage1": {"epochs": history1, "val_confusion": None, "val_cost": None},
            "cost_matrix": None,
            "stage2": None,
        }
        if confusion1 is not None:
            log["stage1"]["val_confusion"] = _confusion_json(confusion1)

        if not args.stage1_only:
            if confusion1 is None:
                raise InputError("two-stage training needs a non-empty val split")
            cost = cost_matrix_from_confusion(confusion1)
            stage2_loss = with_cost_matrix(loss_cfg, cost)
            history2 = train(model, train_data.features, train_data.labels,
                             cfg.stage2_train, stage2_loss)
            confusion2 = _val_confusion(model, val_data)
            ckpt2 = out / "stage2.ckpt"
            save_checkpoint(ckpt2, model, stage2_loss)
            written.append(ckpt2)
            log["cost_matrix"] = cost.tolist()
            log["stage1"]["val_cost"] = _confusion_cost(confusion1, cost)
            log["stage2"] = {
                "epochs": history2,
                "val_confusion": _confusion_json(confusion2),
                "val_cost": _confusion_cost(confusion2, cost),
            }
        _write_json(out / "run_log.json", log)
        written.append(out / "run_log.json")
    except Exception:
        for p in written:  # no partial checkpoints on abort
            p.unlink(missing_ok=True)
        raise
    print(f"train: wrote {', '.join(p.name for p in written)} to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model, _loss_cfg, calibration = load_checkpoint(args.checkpoint)
    entries = load_manifest(args.manifest)
    data = load_split(entries, args.split)
    if len(data) == 0:
        raise InputError(f"split {args.split!r} has no segments")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    temperature = calibration.temperature if calibration else 1.0
    threshold = calibration.confidence_threshold if calibration else 0.0
    logits = predict_logits(model, data.features)
    probs = softmax_probs(logits, temperature)
    preds = apply_policy_batch(probs, threshold)

    report = build_report(args.task, probs, data.labels, preds)
    _write_json(out / "report.json", report.to_dict())
    text = format_report_text(report)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "metrics.csv").write_text(format_report_csv(report), encoding="utf-8")
    if not args.no_figures:
        from .plots import save_confusion_heatmap, save_pr_curves

        save_confusion_heatmap(report, out / "confusion.png")
        save_pr_curves(args.task, probs, data.labels, out / "pr_curves.png")
    sys.stdout.write(text)
    print(f"eval: wrote report to {out}")
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    model, loss_cfg, _old = load_checkpoint(args.checkpoint)
    entries = load_manifest(args.manifest)
    data = load_split(entries, args.split)
    if len(data) == 0:
        raise InputError(f"calibration split {args.split!r} is empty")
    logits = predict_logits(model, data.features)
    result = fit_temperature(logits, data.labels,
                             confidence_threshold=args.threshold)
    target = Path(args.out) if args.out else Path(args.checkpoint)
    save_checkpoint(target, model, loss_cfg, calibration=result)
    print(f"calibrate: T={result.temperature:.4f} "
          f"NLL {result.nll_before:.6f} -> {result.nll_after:.6f} "
          f"threshold={result.confidence_threshold} -> {target}")
    return 0


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------


def cmd_infer(args) -> int:
    model, _loss_cfg, calibration = load_checkpoint(args.checkpoint)
    clip = read_wav(args.wav)
    segments = segmentize(stft_log_spectrum(clip))
    temperature = calibration.temperature if calibration else 1.0
    threshold = calibration.confidence_threshold if calibration else 0.0

    lines = []
    if segments:
        logits = predict_logits(model, [s.data for s in segments])
        probs = softmax_probs(logits, temperature)
        policy = apply_policy_batch(probs, threshold)
        for seg, p, pol in zip(segments, probs, policy):
            lines.append(json.dumps({
                "start_time": seg.start_time,
                "class": int(p.argmax()),
                "probs": [float(v) for v in p],
                "policy_class": int(pol),
            }, sort_keys=True))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"infer: wrote {len(lines)} segments to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdkit",
        description="Concurrent speaker detection: synthesize data, train, "
                    "calibrate, evaluate, and run inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenes and a manifest")
    p.add_argument("--config", required=True, help="config file or profile name")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="two-stage training run")
    p.add_argument("--config", required=True, help="config file or profile name")
    p.add_argument("--manifest", help="override the config's manifest path")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--stage1-only", action="store_true",
                   help="stop after the first (no cost-sensitive loss) stage")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=TASKS, default="csd")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", help="fit temperature scaling on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float, default=0.0,
                   help="low-confidence fallback threshold stored with T")
    p.add_argument("--out", help="write the updated checkpoint here instead of in place")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("infer", help="per-segment JSON lines for one wav file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out", help="output .jsonl path (default: stdout)")
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContractError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NumericError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
