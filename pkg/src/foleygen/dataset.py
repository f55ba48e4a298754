"""Clip inventory and the procedural stand-in corpus.

The manifest is a JSON file listing clips (frame directory, WAV path,
class label, split). The generator writes a fully synthetic corpus: every
class pairs a distinct visual motif (distinct motion statistics) with a
distinct audio signature (distinct fundamental frequency and rhythm), and
the audio envelope is driven by the same event times as the visuals, so
sound and motion stay synchronized. Everything is deterministic per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip
from .errors import CodecError, InvalidArgument
from .rng import stream
from .video import FrameSequence, load_frames
from .wav import wav_read, wav_write

CLASS_NAMES = (
    "break", "car", "clock", "cutting", "fire", "footstep",
    "gunshot", "horse", "rain", "thunder", "typing", "waterfall",
)

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    label: str
    frames_path: str
    wav_path: str
    fps: float
    duration: float
    split: str


@dataclass
class DatasetManifest:
    """Clip inventory plus the class vocabulary, rooted at a directory."""

    entries: list
    classes: tuple[str, ...] = CLASS_NAMES
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.root = Path(self.root)
        for e in self.entries:
            if e.label not in self.classes:
                raise InvalidArgument(
                    f"clip {e.clip_id!r} has unknown label {e.label!r}"
                )
            if e.split not in SPLITS:
                raise InvalidArgument(
                    f"clip {e.clip_id!r} has unknown split {e.split!r}"
                )
            if e.duration <= 0:
                raise InvalidArgument(f"clip {e.clip_id!r} has no duration")

    def split_entries(self, split: str):
        if split not in SPLITS:
            raise InvalidArgument(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def by_id(self, clip_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.clip_id == clip_id:
                return e
        raise InvalidArgument(f"unknown clip {clip_id!r}")

    def label_index(self, label: str) -> int:
        return self.classes.index(label)

    def frames_dir(self, entry: ManifestEntry) -> Path:
        return self.root / entry.frames_path

    def wav_file(self, entry: ManifestEntry) -> Path:
        return self.root / entry.wav_path


def manifest_save(manifest: DatasetManifest, path):
    path = Path(path)
    doc = {
        "version": 1,
        "classes": list(manifest.classes),
        "entries": [asdict(e) for e in manifest.entries],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def manifest_load(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CodecError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    except OSError as exc:
        raise CodecError(f"{path}: {exc}") from exc
    if doc.get("version") != 1:
        raise CodecError(f"{path}: unsupported manifest version")
    try:
        entries = [ManifestEntry(**e) for e in doc["entries"]]
        classes = tuple(doc.get("classes", CLASS_NAMES))
    except (KeyError, TypeError) as exc:
        raise CodecError(f"{path}: malformed entry: {exc}") from exc
    return DatasetManifest(entries, classes, path.parent)


def load_clip_frames(manifest: DatasetManifest, entry: ManifestEntry,
                     target_size=(64, 64)) -> FrameSequence:
    return load_frames(manifest.frames_dir(entry), target_size, entry.fps)


def load_clip_audio(manifest: DatasetManifest, entry: ManifestEntry) -> AudioClip:
    return wav_read(manifest.wav_file(entry))


def clips_by_class(manifest: DatasetManifest, split: str = "train") -> dict:
    """Audio clips of one split grouped under their labels."""
    grouped = {}
    for entry in manifest.split_entries(split):
        grouped.setdefault(entry.label, []).append(load_clip_audio(manifest,
                                                                   entry))
    return grouped


# ---------------------------------------------------------------------------
# synthetic corpus
#
# Fundamentals sit on exact STFT bin centers and advance a whole number
# of periods per hop (multiples of 62.5 Hz at 8 kHz / fft 256 / hop 128),
# so class spectra are maximally separated AND zero-phase frames are
# mutually consistent; noise stays weak so phase reconstruction keeps the
# waveforms correlated with the originals.

_SIGNATURES = {
    "break":     {"f0": 250.0, "kind": "events", "times": (0.5,),
                  "attack": 0.004, "decay": 0.5},
    "car":       {"f0": 125.0, "kind": "cont", "rate": 1.0,
                  "base": 0.65, "depth": 0.35},
    "clock":     {"f0": 1000.0, "kind": "events", "times": (0.5, 1.5),
                  "attack": 0.002, "decay": 0.08},
    "cutting":   {"f0": 375.0, "kind": "events",
                  "times": (0.25, 0.75, 1.25, 1.75),
                  "attack": 0.004, "decay": 0.12},
    "fire":      {"f0": 687.5, "kind": "cont", "rate": 6.0,
                  "base": 0.6, "depth": 0.4},
    "footstep":  {"f0": 187.5, "kind": "events",
                  "times": (0.3, 0.9667, 1.6333),
                  "attack": 0.01, "decay": 0.15},
    "gunshot":   {"f0": 312.5, "kind": "events", "times": (0.4, 1.2),
                  "attack": 0.001, "decay": 0.1},
    "horse":     {"f0": 437.5, "kind": "events",
                  "times": (0.2, 0.5333, 0.8667, 1.2, 1.5333, 1.8667),
                  "attack": 0.005, "decay": 0.1},
    "rain":      {"f0": 1500.0, "kind": "cont", "rate": 0.5,
                  "base": 0.8, "depth": 0.2},
    "thunder":   {"f0": 62.5, "kind": "events", "times": (0.35,),
                  "attack": 0.15, "decay": 0.9},
    "typing":    {"f0": 2000.0, "kind": "events",
                  "times": tuple(0.15 + 0.2 * k for k in range(10)),
                  "attack": 0.002, "decay": 0.05},
    "waterfall": {"f0": 750.0, "kind": "cont", "rate": 0.25,
                  "base": 0.85, "depth": 0.15},
}


def _event_envelope(t, times, attack, decay):
    env = np.zeros_like(t)
    for te in times:
        dt = t - te
        mask = dt >= 0
        env[mask] += np.exp(-dt[mask] / decay) * (1.0 - np.exp(-dt[mask] / attack))
    return env


def _jittered_signature(label: str, gen) -> dict:
    """Per-clip variation of a class signature; rhythm and shape wobble."""
    sig = dict(_SIGNATURES[label])
    if sig["kind"] == "events":
        times = np.asarray(sig["times"]) + gen.uniform(-0.04, 0.04,
                                                       len(sig["times"]))
        sig["times"] = tuple(np.clip(times, 0.05, 1.9))
        sig["decay"] = sig["decay"] * (1.0 + 0.15 * gen.uniform(-1, 1))
    else:
        sig["rate"] = sig["rate"] * (1.0 + 0.08 * gen.uniform(-1, 1))
        sig["depth"] = min(sig["depth"] * (1.0 + 0.1 * gen.uniform(-1, 1)),
                           sig["base"] * 0.95)
        sig["phase"] = gen.uniform(0, 2 * np.pi)
    sig["amp"] = 0.9 + 0.1 * gen.uniform(-1, 1)
    return sig


def _envelope(sig: dict, t: np.ndarray) -> np.ndarray:
    if sig["kind"] == "events":
        return _event_envelope(t, sig["times"], sig["attack"], sig["decay"])
    return sig["base"] + sig["depth"] * np.sin(
        2 * np.pi * sig["rate"] * t + sig.get("phase", 0.0)
    )


def _render_audio(sig: dict, gen, sample_rate: int, duration: float) -> np.ndarray:
    t = np.arange(int(round(sample_rate * duration))) / sample_rate
    env = _envelope(sig, t)
    tone = env * np.sin(2 * np.pi * sig["f0"] * t)
    noise = gen.normal(size=t.size) * (0.2 + env)
    tone_rms = float(np.sqrt(np.mean(tone**2)))
    noise_rms = float(np.sqrt(np.mean(noise**2)))
    if noise_rms > 0:
        noise *= 0.08 * tone_rms / noise_rms
    audio = sig["amp"] * (tone + noise)
    peak = float(np.max(np.abs(audio)))
    return 0.85 * audio / peak if peak > 0 else audio


# -- visual motifs; every renderer gets (canvas stack, frame times,
#    envelope at frame times, jittered signature, clip generator)


def _rect(img, y0, y1, x0, x1, val):
    h, w = img.shape
    y0, y1 = max(0, int(round(y0))), min(h, int(round(y1)))
    x0, x1 = max(0, int(round(x0))), min(w, int(round(x1)))
    if y1 > y0 and x1 > x0:
        img[y0:y1, x0:x1] = np.maximum(img[y0:y1, x0:x1], val)


def _disk(img, cy, cx, radius, val):
    h, w = img.shape
    yy, xx = np.ogrid[:h, :w]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    img[mask] = np.maximum(img[mask], val)


def _motif_break(frames, tf, env, sig, gen):
    te = sig["times"][0]
    cx = 32 + gen.integers(-3, 4)
    for i, t in enumerate(tf):
        if t < te:
            _rect(frames[i], 24, 40, cx - 8, cx + 8, 0.9)
        else:
            shift = 30.0 * (t - te)
            glow = 0.35 + 0.55 * min(env[i], 1.0)
            _rect(frames[i], 24, 40, cx - 8 - shift, cx - shift, glow)
            _rect(frames[i], 24, 40, cx + shift, cx + 8 + shift, glow)


def _motif_car(frames, tf, env, sig, gen):
    y = 38 + gen.integers(-3, 4)
    for i, t in enumerate(tf):
        phase = (0.5 * sig["rate"] * t) % 1.0
        x = 4 + phase * 48
        bob = 2.0 * np.sin(2 * np.pi * sig["rate"] * t + sig.get("phase", 0.0))
        _rect(frames[i], y + bob, y + bob + 7, x, x + 12, 0.85)
        _rect(frames[i], 50, 53, 0, 64, 0.3)


def _motif_clock(frames, tf, env, sig, gen):
    for i, t in enumerate(tf):
        angle = 2 * np.pi * 0.5 * t
        cy = 32 + 20 * np.sin(angle)
        cx = 32 + 20 * np.cos(angle)
        _disk(frames[i], 32, 32, 3, 0.4)
        _disk(frames[i], cy, cx, 4, 0.5 + 0.5 * min(env[i], 1.0))


def _motif_cutting(frames, tf, env, sig, gen):
    cx = 32 + gen.integers(-4, 5)
    for i, t in enumerate(tf):
        drop = min(env[i], 1.0)
        bottom = 16 + 32 * drop
        _rect(frames[i], 8, bottom, cx - 2, cx + 2, 0.9)
        _rect(frames[i], 50, 54, 12, 52, 0.45)


def _motif_fire(frames, tf, env, sig, gen):
    centers = gen.integers(8, 56, size=(8, 2))
    phases = gen.uniform(0, 2 * np.pi, 8)
    radii = gen.integers(3, 7, size=8)
    for i, t in enumerate(tf):
        for (cy, cx), phi, rad in zip(centers, phases, radii):
            flicker = 0.5 + 0.5 * np.sin(2 * np.pi * sig["rate"] * t + phi)
            _disk(frames[i], 32 + cy // 2, cx, rad, 0.3 + 0.6 * flicker * env[i])


def _motif_footstep(frames, tf, env, sig, gen):
    times = np.asarray(sig["times"])
    x0 = 8 + gen.integers(0, 4)
    for i, t in enumerate(tf):
        steps_taken = int((times <= t).sum())
        x = x0 + 14 * steps_taken
        y = 46 - 6 * min(env[i], 1.0)
        _rect(frames[i], 52, 55, 0, 64, 0.35)
        _disk(frames[i], y, min(x, 60), 4, 0.85)


def _motif_gunshot(frames, tf, env, sig, gen):
    y = 28 + gen.integers(-2, 3)
    for i, t in enumerate(tf):
        flash = min(env[i], 1.0)
        recoil = 4.0 * flash
        _rect(frames[i], y, y + 6, 4 - recoil, 22 - recoil, 0.6)
        if flash > 0.05:
            _disk(frames[i], y + 3, 26, 3 + 5 * flash, 0.4 + 0.6 * flash)
            frames[i] += 0.5 * flash
            np.clip(frames[i], 0.0, 1.0, out=frames[i])


def _motif_horse(frames, tf, env, sig, gen):
    x1 = 22 + gen.integers(-2, 3)
    for i, t in enumerate(tf):
        lift1 = max(0.0, np.sin(2 * np.pi * 1.5 * t))
        lift2 = max(0.0, -np.sin(2 * np.pi * 1.5 * t))
        _rect(frames[i], 52, 55, 0, 64, 0.3)
        _disk(frames[i], 42 - 8 * lift1, x1, 5, 0.8)
        _disk(frames[i], 42 - 8 * lift2, x1 + 18, 5, 0.8)


def _motif_rain(frames, tf, env, sig, gen):
    xs = gen.choice(np.arange(2, 62), size=12, replace=False)
    y0s = gen.uniform(0, 64, size=12)
    for i, t in enumerate(tf):
        bright = 0.45 + 0.3 * (env[i] - sig["base"] + sig["depth"]) / (
            2 * sig["depth"] + 1e-9
        )
        for x, y0 in zip(xs, y0s):
            y = (y0 + 55.0 * t) % 64
            _rect(frames[i], y, y + 6, x, x + 1, bright)


def _motif_thunder(frames, tf, env, sig, gen):
    bolt_x = 32 + np.cumsum(gen.integers(-4, 5, size=8))
    for i, t in enumerate(tf):
        flash = min(1.2 * env[i], 1.0)
        frames[i] += 0.85 * flash**1.5
        np.clip(frames[i], 0.0, 1.0, out=frames[i])
        if flash > 0.25:
            for seg, bx in enumerate(bolt_x):
                _rect(frames[i], seg * 8, seg * 8 + 8,
                      np.clip(bx, 1, 62), np.clip(bx, 1, 62) + 2, 1.0)


def _motif_typing(frames, tf, env, sig, gen):
    times = sig["times"]
    attack, decay = sig["attack"], sig["decay"]
    key_env = [
        _event_envelope(tf, times[k::10], attack, decay * 3) for k in range(10)
    ]
    for i, t in enumerate(tf):
        for k in range(10):
            glow = 0.25 + 0.75 * min(key_env[k][i], 1.0)
            x = 6 + int(5.6 * k)
            _rect(frames[i], 46, 51, x, x + 4, glow)
        _rect(frames[i], 20, 24, 6, 58, 0.2)


def _motif_waterfall(frames, tf, env, sig, gen):
    x0 = 24 + gen.integers(-3, 4)
    yy = np.arange(64, dtype=np.float64)
    for i, t in enumerate(tf):
        column = 0.45 + 0.35 * np.sin(2 * np.pi * (yy / 12.0 - 2.2 * t))
        frames[i][:, x0:x0 + 16] = np.maximum(
            frames[i][:, x0:x0 + 16], column[:, None]
        )
        _rect(frames[i], 56, 60, 8, 56, 0.3 + 0.15 * env[i])


_MOTIFS = {
    "break": _motif_break,
    "car": _motif_car,
    "clock": _motif_clock,
    "cutting": _motif_cutting,
    "fire": _motif_fire,
    "footstep": _motif_footstep,
    "gunshot": _motif_gunshot,
    "horse": _motif_horse,
    "rain": _motif_rain,
    "thunder": _motif_thunder,
    "typing": _motif_typing,
    "waterfall": _motif_waterfall,
}


def _render_frames(label: str, sig: dict, gen, fps: float, duration: float,
                   size: int) -> np.ndarray:
    n = int(round(fps * duration))
    tf = np.arange(n) / fps
    env = _envelope(sig, tf)
    frames = np.full((n, size, size), 0.08)
    _MOTIFS[label](frames, tf, env, sig, gen)
    return (np.clip(frames, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def _write_pgm(path: Path, image: np.ndarray):
    h, w = image.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + image.tobytes())


def render_clip(label: str, clip_index: int, seed: int,
                sample_rate: int = 8000, duration: float = 2.0,
                fps: float = 16.0, frame_size: int = 64):
    """Frames (uint8 stack) and waveform for one synthetic clip."""
    if label not in _SIGNATURES:
        raise InvalidArgument(f"no signature for class {label!r}")
    gen = stream(seed, "clip", label, str(clip_index))
    sig = _jittered_signature(label, gen)
    audio = _render_audio(sig, gen, sample_rate, duration)
    frames = _render_frames(label, sig, gen, fps, duration, frame_size)
    return frames, AudioClip(audio, sample_rate)


def generate_synthetic_corpus(out_dir, clips_per_class: int = 8, seed: int = 0,
                              classes=CLASS_NAMES, sample_rate: int = 8000,
                              duration: float = 2.0, fps: float = 16.0,
                              frame_size: int = 64) -> DatasetManifest:
    """Write a full corpus (frames, WAVs, manifest) under `out_dir`.

    Per class, roughly 80% of clips are marked train and the rest test;
    both splits are nonempty whenever clips_per_class >= 2. Rerunning
    with the same seed rewrites byte-identical files.
    """
    if clips_per_class < 2:
        raise InvalidArgument("need at least 2 clips per class")
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    train_count = min(clips_per_class - 1,
                      max(1, int(math.floor(0.8 * clips_per_class + 0.5))))
    entries = []
    for label in classes:
        for idx in range(clips_per_class):
            clip_id = f"{label}-{idx:03d}"
            frames, clip = render_clip(label, idx, seed, sample_rate,
                                       duration, fps, frame_size)
            frames_rel = f"frames/{clip_id}"
            wav_rel = f"wav/{clip_id}.wav"
            frame_dir = out_dir / frames_rel
            frame_dir.mkdir(exist_ok=True)
            for t in range(frames.shape[0]):
                _write_pgm(frame_dir / f"{t:04d}.pgm", frames[t])
            wav_write(clip, out_dir / wav_rel)
            entries.append(ManifestEntry(
                clip_id=clip_id,
                label=label,
                frames_path=frames_rel,
                wav_path=wav_rel,
                fps=fps,
                duration=duration,
                split="train" if idx < train_count else "test",
            ))
    manifest = DatasetManifest(entries, tuple(classes), out_dir)
    manifest_save(manifest, out_dir / "manifest.json")
    return manifest
