"""Command-line surface: dataset generation through evaluation.

Subcommands mirror the pipeline stages: gen-dataset writes a synthetic
corpus, build-bank averages per-class spectrograms, train fits either
classifier, synth renders a waveform for one clip, eval scores a trained
model, ablate compares variants. Every command exits 0 on success and 2
with a single-line stderr diagnostic on any domain error; --json swaps
the human line for one deterministic JSON object on stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, profile
from .dataset import (clips_by_class, generate_synthetic_corpus,
                      load_clip_audio, load_clip_frames, manifest_load)
from .dsp import MODE_SQRT_MAGNITUDE, spectrogram_of
from .errors import ConfigError, FoleyError, SplitError
from .evaluate import (ablation_run, accuracy_and_logloss, confusion_matrix,
                       default_ablation_grid, ncc_report, render_csv,
                       render_table, retrieval_experiment)
from .models import (FrameRelationClassifier, FrameSequenceClassifier,
                     load_classifier)
from .synthesis import (align_frames, bank_load, bank_save, build_bank,
                        compose_spectrogram, resample_frames,
                        synthesize_waveform)
from .wav import wav_write

_MODEL_KINDS = {"fslstm": FrameSequenceClassifier,
                "trn": FrameRelationClassifier}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FoleyError as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"foleygen: error: {message}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"foleygen: io error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foleygen",
        description="Synthesize class-conditioned sound for silent clips.")
    sub = parser.add_subparsers(required=True, metavar="command")

    p = sub.add_parser("gen-dataset", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--clips-per-class", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=8000)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--fps", type=float, default=16.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("build-bank", help="average per-class spectrograms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--frames", type=int, default=None,
                   help="bank frame count; default: first clip's frames")
    _config_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_build_bank)

    p = sub.add_parser("train", help="fit a classifier on the train split")
    p.add_argument("--model", required=True, choices=sorted(_MODEL_KINDS))
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bank", default=None,
                   help="class bank; enables the residual loss term")
    _config_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("synth", help="render sound for one clip")
    p.add_argument("--model", choices=sorted(_MODEL_KINDS), default=None)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="score a trained model")
    p.add_argument("--mode", required=True,
                   choices=("confusion", "ncc", "retrieval"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--bank", default=None)
    p.add_argument("--split", default="test")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="compare model variants across seeds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", default="default",
                   help="'default' or a JSON file with variant dicts")
    p.add_argument("--seeds", type=int, default=3)
    _config_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_ablate)
    return parser


def _config_flags(p):
    p.add_argument("--config", default=None, help="run config file")
    p.add_argument("--profile", default="desk", choices=("desk", "full"))


def _run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = profile(getattr(args, "profile", "desk"))
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        updates["epochs"] = args.epochs
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _emit(args, payload: dict, text: str) -> int:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)
    return 0


def _split_data(manifest, split):
    entries = manifest.split_entries(split)
    if not entries:
        raise SplitError(f"split {split!r} has no clips")
    X = [load_clip_frames(manifest, e) for e in entries]
    y = [e.label for e in entries]
    return entries, X, y


def _predict_spectrogram(est, bank, seq):
    """Predicted class and composed spectrogram for one clip."""
    label = str(est.predict([seq])[0])
    if isinstance(est, FrameSequenceClassifier):
        residual = est.predict_residuals([seq])[0]
        if residual.shape[1] != bank.num_bins:
            raise ConfigError(
                f"model residual width {residual.shape[1]} does not match "
                f"bank bins {bank.num_bins}")
        residual = align_frames(residual, bank.num_frames)
    else:
        residual = None
    return label, compose_spectrogram(residual, label, bank)


# ---------------------------------------------------------------------------
# commands


def _cmd_gen_dataset(args) -> int:
    manifest = generate_synthetic_corpus(
        args.out, clips_per_class=args.clips_per_class, seed=args.seed,
        sample_rate=args.sample_rate, duration=args.duration, fps=args.fps)
    payload = {"out": str(args.out), "clips": len(manifest.entries),
               "classes": list(manifest.classes),
               "train_clips": len(manifest.split_entries("train")),
               "test_clips": len(manifest.split_entries("test"))}
    return _emit(args, payload,
                 f"wrote {payload['clips']} clips over "
                 f"{len(payload['classes'])} classes to {args.out}")


def _cmd_build_bank(args) -> int:
    cfg = _run_config(args)
    manifest = manifest_load(args.manifest)
    grouped = clips_by_class(manifest, args.split)
    if not grouped:
        raise SplitError(f"split {args.split!r} has no clips")
    params = cfg.stft_params()
    frames = args.frames
    if frames is None:
        first = next(iter(sorted(grouped)))
        frames = spectrogram_of(grouped[first][0], params).frames.shape[0]
    bank = build_bank(grouped, params, frames,
                      class_names=manifest.classes)
    bank_save(bank, args.out)
    payload = {"out": str(args.out), "classes": list(bank.class_names),
               "frames": bank.num_frames, "bins": bank.num_bins,
               "clip_counts": list(bank.clip_counts)}
    return _emit(args, payload,
                 f"bank of {len(bank.class_names)} classes "
                 f"({bank.num_frames} frames x {bank.num_bins} bins) "
                 f"written to {args.out}")


def _cmd_train(args) -> int:
    cfg = _run_config(args)
    manifest = manifest_load(args.manifest)
    entries, X, y = _split_data(manifest, "train")
    if args.model == "fslstm":
        est = FrameSequenceClassifier.from_config(cfg)
        bank = targets = None
        if args.bank:
            bank = bank_load(args.bank)
            targets = []
            for entry in entries:
                spec = spectrogram_of(load_clip_audio(manifest, entry),
                                      bank.params, MODE_SQRT_MAGNITUDE)
                targets.append(resample_frames(spec.frames, bank.num_frames))
        est.fit(X, y, targets=targets, bank=bank)
    else:
        est = FrameRelationClassifier.from_config(cfg)
        est.fit(X, y)
    est.save(args.out)
    last = est.history_[-1]
    payload = {"model": args.model, "out": str(args.out),
               "epochs_run": est.n_epochs_,
               "train_accuracy": last["accuracy"],
               "final_loss": round(last["loss"], 12),
               "classes": [str(c) for c in est.classes_]}
    return _emit(args, payload,
                 f"{args.model} trained {est.n_epochs_} epochs in "
                 f"{est.fit_seconds_:.1f} s, final train accuracy "
                 f"{last['accuracy']:.3f}; checkpoint at {args.out}")


def _cmd_synth(args) -> int:
    est = load_classifier(args.ckpt)
    if args.model and _MODEL_KINDS[args.model] is not type(est):
        raise ConfigError(
            f"checkpoint {args.ckpt} holds a {est._kind!r} model, "
            f"--model says {args.model!r}")
    bank = bank_load(args.bank)
    manifest = manifest_load(args.manifest)
    entry = manifest.by_id(args.clip)
    seq = load_clip_frames(manifest, entry)
    label, spec = _predict_spectrogram(est, bank, seq)
    clip = synthesize_waveform(spec, bank.params)
    wav_write(clip, args.out)
    payload = {"clip": entry.clip_id, "predicted_class": label,
               "true_class": entry.label, "out": str(args.out),
               "samples": int(clip.samples.shape[0]),
               "sample_rate": clip.sample_rate}
    return _emit(args, payload,
                 f"{entry.clip_id}: predicted {label!r}, wrote "
                 f"{payload['samples']} samples to {args.out}")


def _cmd_eval(args) -> int:
    manifest = manifest_load(args.manifest)
    est = load_classifier(args.ckpt)
    entries, X, y = _split_data(manifest, args.split)
    if args.mode == "confusion":
        return _eval_confusion(args, manifest, est, entries, X, y)
    if args.bank is None:
        raise ConfigError(f"eval --mode {args.mode} needs --bank")
    bank = bank_load(args.bank)
    if args.mode == "ncc":
        return _eval_ncc(args, manifest, est, bank, entries, X)
    return _eval_retrieval(args, manifest, est, bank, entries, X, y)


def _eval_confusion(args, manifest, est, entries, X, y) -> int:
    probs = est.predict_proba(X)
    classes = [str(c) for c in est.classes_]
    index = {name: i for i, name in enumerate(classes)}
    missing = sorted(set(y) - set(classes))
    if missing:
        raise SplitError(f"labels {missing} unknown to the model")
    y_idx = np.array([index[label] for label in y])
    accuracy, logloss = accuracy_and_logloss(probs, y_idx)
    counts, normalized = confusion_matrix(y_idx, np.argmax(probs, axis=1),
                                          len(classes))
    payload = {"split": args.split, "accuracy": accuracy,
               "log_loss": logloss, "classes": classes,
               "confusion": counts.tolist()}
    if args.json:
        return _emit(args, payload, "")
    rows = [{"class": name,
             **{c: int(counts[i, j]) for j, c in enumerate(classes)}}
            for i, name in enumerate(classes)]
    table = render_csv(rows, ["class"] + classes) if args.csv else (
        render_table(rows, ["class"] + classes))
    print(f"accuracy {accuracy:.4f}  log-loss {logloss:.4f}")
    print(table, end="")
    return 0


def _eval_ncc(args, manifest, est, bank, entries, X) -> int:
    pairs = {}
    for entry, seq in zip(entries, X):
        reference = load_clip_audio(manifest, entry)
        _, spec = _predict_spectrogram(est, bank, seq)
        generated = synthesize_waveform(spec, bank.params)
        pairs.setdefault(entry.label, []).append((reference, generated))
    report = ncc_report(pairs)
    payload = {"split": args.split, **report}
    if args.json:
        return _emit(args, payload, "")
    rows = [{"class": name, "mean_ncc": value}
            for name, value in sorted(report["classes"].items())]
    rows.append({"class": "(average)", "mean_ncc": report["average"]})
    out = render_csv(rows, ["class", "mean_ncc"]) if args.csv else (
        render_table(rows, ["class", "mean_ncc"]))
    print(out, end="")
    return 0


def _eval_retrieval(args, manifest, est, bank, entries, X, y) -> int:
    train_entries = manifest.split_entries("train")
    if not train_entries:
        raise SplitError("split 'train' has no clips")
    params = bank.params

    def sqrt_spec(entry):
        clip = load_clip_audio(manifest, entry)
        return spectrogram_of(clip, params, MODE_SQRT_MAGNITUDE).frames

    train_specs = [sqrt_spec(e) for e in train_entries]
    train_labels = [e.label for e in train_entries]
    real_specs = [sqrt_spec(e) for e in entries]
    synth_specs = []
    for seq in X:
        _, spec = _predict_spectrogram(est, bank, seq)
        synth_specs.append(spec.frames)
    report = retrieval_experiment(
        train_specs, train_labels,
        {"real": (real_specs, y), "synthesized": (synth_specs, y)})
    payload = {"split": args.split, **report}
    text = "\n".join(f"{key} {value:.4f}"
                     for key, value in sorted(report.items()))
    return _emit(args, payload, text)


def _cmd_ablate(args) -> int:
    cfg = _run_config(args)
    manifest = manifest_load(args.manifest)
    _, train_X, train_y = _split_data(manifest, "train")
    _, test_X, test_y = _split_data(manifest, "test")
    if args.grid == "default":
        variants = default_ablation_grid()
    else:
        try:
            variants = json.loads(Path(args.grid).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad grid file {args.grid}: {exc}") from exc
        if not isinstance(variants, list):
            raise ConfigError(f"grid file {args.grid} must hold a JSON list")
    base = {"encoder_input": cfg.encoder_input,
            "stage_channels": tuple(cfg.stage_channels),
            "output_dim": cfg.output_dim,
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "early_stop_patience": cfg.early_stop_patience}
    seeds = [cfg.seed + i for i in range(args.seeds)]
    rows = ablation_run(train_X, train_y, test_X, test_y, variants, seeds,
                        base=base,
                        verbose=int(args.verbose and not args.json))
    if args.json:
        print(json.dumps({"seeds": seeds, "rows": rows}, sort_keys=True))
        return 0
    columns = ["name", "model", "mean_accuracy", "accuracies", "notice"]
    out = render_csv(rows, columns) if args.csv else render_table(rows,
                                                                  columns)
    print(out, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
