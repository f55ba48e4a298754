"""Evaluation harness: metrics, retrieval probe, ablations, report text.

Everything here consumes plain arrays or the package's own types and
returns numbers or strings; nothing writes files. The CLI layer decides
where output goes.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from . import tensor as T
from .dsp import normalized_cross_correlation
from .encoder import EncoderConfig, encode_images, init_encoder_params
from .errors import ConfigError, InvalidArgument, SplitError
from .models import FrameRelationClassifier, FrameSequenceClassifier
from .rng import stream
from .video import resize_bilinear

# ---------------------------------------------------------------------------
# classification metrics


def confusion_matrix(y_true, y_pred, num_classes: int):
    """Counts and row-normalized confusion matrices, true class per row."""
    t = np.asarray(y_true, dtype=np.int64).ravel()
    p = np.asarray(y_pred, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise InvalidArgument(
            f"{t.shape[0]} true labels vs {p.shape[0]} predictions")
    if t.size and (t.min() < 0 or t.max() >= num_classes
                   or p.min() < 0 or p.max() >= num_classes):
        raise InvalidArgument(f"labels outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    totals = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, totals, where=totals > 0,
                           out=np.zeros(counts.shape))
    return counts, normalized


def accuracy_and_logloss(probabilities, labels):
    """(accuracy, mean negative log-likelihood) from class distributions.

    Rows must sum to one within 1e-6. Probabilities are clamped to
    [1e-15, 1] inside the log only; argmax ties resolve to the lowest
    class index.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).ravel()
    if probs.ndim != 2 or probs.shape[0] != y.shape[0]:
        raise InvalidArgument(
            f"probabilities must be [n x classes] matching {y.shape[0]} "
            f"labels, got {probs.shape}")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise InvalidArgument(
            f"probability row {worst} sums to {row_sums[worst]:.8f}")
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise InvalidArgument(f"labels outside [0, {probs.shape[1]})")
    accuracy = float(np.mean(np.argmax(probs, axis=1) == y))
    picked = np.clip(probs[np.arange(y.shape[0]), y], 1e-15, 1.0)
    return accuracy, float(-np.mean(np.log(picked)))


def ncc_report(pairs_by_class: dict) -> dict:
    """Per-class mean waveform correlation plus the grand average.

    `pairs_by_class` maps a class name to a list of (reference, generated)
    AudioClip pairs. The grand average weights every class equally.
    """
    classes = {}
    for name in sorted(pairs_by_class):
        pairs = pairs_by_class[name]
        if not pairs:
            raise InvalidArgument(f"class {name!r} has no waveform pairs")
        values = [normalized_cross_correlation(ref, gen)
                  for ref, gen in pairs]
        classes[name] = float(np.mean(values))
    if not classes:
        raise InvalidArgument("no classes to report")
    average = float(np.mean(list(classes.values())))
    return {"classes": classes, "average": average}


# ---------------------------------------------------------------------------
# retrieval probe: can a spectrogram classifier tell synthesized output apart?


def _spec_image(spec, size) -> np.ndarray:
    arr = np.asarray(getattr(spec, "frames", spec), dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidArgument(f"spectrogram must be 2-D, got shape {arr.shape}")
    if arr.shape[0] > 2:
        # Overlap-add tapers the first and last analysis frames, so round
        # trips through synthesis attenuate them; drop both ends everywhere
        # to keep the comparison about content rather than border energy.
        arr = arr[1:-1]
    img = resize_bilinear(arr, size)
    peak = float(np.max(np.abs(img)))
    return img / peak if peak > 0 else img


def retrieval_experiment(train_specs, train_labels, eval_sets: dict,
                         seed: int = 0, epochs: int = 300,
                         learning_rate: float = 0.004, batch_size: int = 24,
                         image_size=(32, 32)) -> dict:
    """Train a small spectrogram classifier, score it on held-out sets.

    `eval_sets` maps a set name to (specs, labels); the result dict holds
    `train_accuracy` plus one `<name>_accuracy` per set. Labels are class
    names; any eval label missing from the training split is a split error
    because the probe could never retrieve it.
    """
    train_labels = [str(label) for label in train_labels]
    classes = sorted(set(train_labels))
    index = {name: i for i, name in enumerate(classes)}
    for set_name, (_, labels) in eval_sets.items():
        missing = sorted(set(str(l) for l in labels) - set(classes))
        if missing:
            raise SplitError(
                f"classes {missing} in set {set_name!r} are absent from the "
                f"training split")

    size = tuple(image_size)
    x_train = np.stack([_spec_image(s, size) for s in train_specs])[:, None]
    y_train = np.array([index[label] for label in train_labels])
    cfg = EncoderConfig(input_size=size, stage_channels=(16, 32),
                        output_dim=64, in_channels=1)
    weights = init_encoder_params(cfg, seed, "ret")
    gen = stream(seed, "retrieval", "head")
    weights["ret.head.w"] = T.Tensor(
        T.orthogonal(cfg.output_dim, len(classes), gen), requires_grad=True)
    weights["ret.head.b"] = T.Tensor(np.zeros(len(classes)),
                                     requires_grad=True)
    opt = T.Adam(list(weights.values()), lr=learning_rate)

    def scores_for(batch_images):
        feats = encode_images(weights, cfg, batch_images, "ret")
        return T.add(T.matmul(feats, weights["ret.head.w"]),
                     weights["ret.head.b"])

    n = x_train.shape[0]
    streak = 0
    for epoch in range(epochs):
        order = stream(seed, "retrieval", "shuffle", epoch).permutation(n)
        correct = 0
        for start in range(0, n, batch_size):
            ids = order[start:start + batch_size]
            scores = scores_for(x_train[ids])
            loss = T.cross_entropy(scores, y_train[ids])
            opt.zero_grad()
            T.backward(loss, free_graph=True)
            opt.step()
            correct += int(np.sum(np.argmax(scores.data, axis=1)
                                  == y_train[ids]))
        streak = streak + 1 if correct == n else 0
        if streak >= 3:
            break

    def evaluate(specs, labels):
        images = np.stack([_spec_image(s, size) for s in specs])[:, None]
        y = np.array([index[str(label)] for label in labels])
        preds = []
        for start in range(0, images.shape[0], batch_size):
            out = scores_for(images[start:start + batch_size])
            preds.append(np.argmax(out.data, axis=1))
        return float(np.mean(np.concatenate(preds) == y))

    report = {"train_accuracy": evaluate(train_specs, train_labels)}
    for set_name, (specs, labels) in eval_sets.items():
        report[f"{set_name}_accuracy"] = evaluate(specs, labels)
    return report


# ---------------------------------------------------------------------------
# ablations


def default_ablation_grid() -> list:
    """The standard comparison set, one dict per variant."""
    return [
        {"name": "sequence/space-time", "model": "sequence", "params": {}},
        {"name": "sequence/raw-frames", "model": "sequence",
         "params": {"input_mode": "raw"}},
        {"name": "sequence/single-cell", "model": "sequence",
         "params": {"arch": "simple"}},
        {"name": "sequence/interpolate-x2", "model": "sequence",
         "params": {"interpolation_factor": 2}},
        {"name": "sequence/replicate-x2", "model": "sequence",
         "params": {"interpolation_factor": 2,
                    "frame_expansion": "replicate"}},
        {"name": "relation/max-scale-4", "model": "relation",
         "params": {"max_scale": 4, "num_frames": 8}},
        {"name": "relation/max-scale-8", "model": "relation",
         "params": {"max_scale": 8, "num_frames": 8}},
        {"name": "relation/max-scale-16", "model": "relation",
         "params": {"max_scale": 16, "num_frames": 16}},
    ]


_MODEL_CLASSES = {"sequence": FrameSequenceClassifier,
                  "relation": FrameRelationClassifier}


def ablation_run(train_clips, train_labels, test_clips, test_labels,
                 variants, seeds, base: dict | None = None,
                 verbose: int = 0) -> list:
    """Train every variant under the same budget for each seed.

    Returns one row per variant with per-seed test accuracies and their
    mean, ranked best first. A variant whose configuration cannot run
    (for example a relation scale above the sampled frame count) is kept
    in the table with a notice instead of numbers.
    """
    if not seeds:
        raise InvalidArgument("need at least one seed")
    base = dict(base or {})
    rows = []
    for variant in variants:
        name = variant["name"]
        cls = _MODEL_CLASSES.get(variant.get("model"))
        if cls is None:
            raise InvalidArgument(
                f"variant {name!r} names unknown model "
                f"{variant.get('model')!r}")
        params = {**base, **variant.get("params", {})}
        accuracies = []
        notice = None
        for seed in seeds:
            try:
                est = cls(**{**params, "seed": int(seed)})
                est.fit(train_clips, train_labels)
                preds = est.predict(test_clips)
                accuracies.append(
                    float(np.mean(preds == np.asarray(test_labels))))
            except (ConfigError, InvalidArgument) as exc:
                notice = str(exc)
                accuracies = []
                break
            if verbose:
                print(f"{name} seed {seed}: accuracy {accuracies[-1]:.3f}")
        if notice is not None:
            rows.append({"name": name, "model": variant["model"],
                         "skipped": True, "notice": notice})
        else:
            rows.append({"name": name, "model": variant["model"],
                         "accuracies": accuracies,
                         "mean_accuracy": float(np.mean(accuracies))})
    rows.sort(key=lambda r: (r.get("skipped", False),
                             -r.get("mean_accuracy", 0.0), r["name"]))
    return rows


# ---------------------------------------------------------------------------
# report emitters


def render_csv(rows: list, columns=None) -> str:
    """Rows of dicts to CSV text; column order fixed by `columns` or the
    sorted union of keys."""
    if columns is None:
        keys = set()
        for row in rows:
            keys.update(row)
        columns = sorted(keys)
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(columns),
                            extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in columns})
    return out.getvalue()


def render_table(rows: list, columns=None) -> str:
    """Aligned fixed-width text table for terminal reading."""
    if not rows:
        return ""
    if columns is None:
        keys = set()
        for row in rows:
            keys.update(row)
        columns = sorted(keys)
    cells = [[_cell(row.get(k, "")) for k in columns] for row in rows]
    widths = [max(len(str(k)), *(len(c[i]) for c in cells))
              for i, k in enumerate(columns)]
    lines = ["  ".join(str(k).ljust(w) for k, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row_cells in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row_cells, widths)))
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return str(value)


def waveform_tsv(clip) -> str:
    """Sample index, time and amplitude columns, ready for gnuplot."""
    lines = ["# sample\ttime\tamplitude"]
    for i, value in enumerate(clip.samples):
        lines.append(f"{i}\t{i / clip.sample_rate:.8f}\t{value:.8f}")
    return "\n".join(lines) + "\n"


def spectrogram_tsv(spec) -> str:
    """Frame-major value grid with blank lines between frames, the layout
    gnuplot's splot expects for surface data."""
    frames = np.asarray(spec.frames, dtype=np.float64)
    lines = ["# frame\tbin\tvalue"]
    for t in range(frames.shape[0]):
        for f in range(frames.shape[1]):
            lines.append(f"{t}\t{f}\t{frames[t, f]:.8f}")
        lines.append("")
    return "\n".join(lines)
