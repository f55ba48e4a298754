"""From predictions to audio.

Holds the class-average spectrogram bank, the residual-plus-base
composition rule, the robust spectral loss helpers, and the final
magnitude-to-waveform rendering. The working domain throughout is the
square root of the STFT magnitude; squaring restores magnitude right
before phase reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import containers
from .dsp import (
    MODE_MAGNITUDE,
    MODE_SQRT_MAGNITUDE,
    AudioClip,
    Spectrogram,
    StftParams,
    griffin_lim,
    spectrogram_of,
)
from .errors import AlignmentError, BankError, InvalidArgument, ShapeError


@dataclass(frozen=True)
class ClassSpectrogramBank:
    """Per-class average sqrt-magnitude spectrograms on a common time grid.

    ``bases`` is [num_classes x target_frames x num_bins]; row order follows
    ``class_names``. ``clip_counts`` records how many training clips each
    average saw.
    """

    class_names: tuple[str, ...]
    bases: np.ndarray
    clip_counts: tuple[int, ...]
    params: StftParams
    sample_rate: int

    def __post_init__(self):
        bases = np.asarray(self.bases, dtype=np.float64)
        names = tuple(self.class_names)
        if bases.ndim != 3 or bases.shape[0] != len(names):
            raise ShapeError("bank bases must be [classes x frames x bins]",
                             bases.shape, (len(names), -1, -1))
        if bases.shape[2] != self.params.num_bins:
            raise ShapeError("bank bin count mismatch", bases.shape,
                             (len(names), bases.shape[1], self.params.num_bins))
        if bases.size and bases.min() < 0:
            raise InvalidArgument("bank bases must be nonnegative")
        if len(self.clip_counts) != len(names):
            raise InvalidArgument("clip_counts length mismatch")
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "clip_counts", tuple(int(c) for c in self.clip_counts))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def num_frames(self) -> int:
        return self.bases.shape[1]

    @property
    def num_bins(self) -> int:
        return self.bases.shape[2]

    def base_for(self, class_name: str) -> np.ndarray:
        """The [frames x bins] average for one class."""
        try:
            index = self.class_names.index(class_name)
        except ValueError:
            raise BankError(
                f"class {class_name!r} not in bank ({', '.join(self.class_names)})"
            ) from None
        return self.bases[index]


def alignment_matrix(source_frames: int, target_frames: int) -> np.ndarray:
    """[target x source] linear-interpolation matrix (corners aligned).

    Left-multiplying a [source x bins] matrix re-times it to target rows;
    each output row is a convex combination of at most two input rows, so
    constants are preserved exactly.
    """
    if source_frames < 1:
        raise InvalidArgument("source must have at least 1 frame")
    if target_frames < 1:
        raise InvalidArgument("target must have at least 1 frame")
    matrix = np.zeros((target_frames, source_frames))
    if source_frames == 1:
        matrix[:, 0] = 1.0
        return matrix
    positions = np.linspace(0.0, source_frames - 1, target_frames)
    lo = np.floor(positions).astype(np.intp)
    hi = np.minimum(lo + 1, source_frames - 1)
    frac = positions - lo
    rows = np.arange(target_frames)
    matrix[rows, lo] += 1.0 - frac
    matrix[rows, hi] += frac
    return matrix


def align_frames(residuals: np.ndarray, target_frames: int) -> np.ndarray:
    """Linearly re-time [T_r x bins] rows to target_frames rows."""
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.ndim != 2 or residuals.shape[0] < 1:
        raise InvalidArgument("residuals must be [T_r x bins] with T_r >= 1")
    if residuals.shape[0] == target_frames:
        return residuals.copy()
    return alignment_matrix(residuals.shape[0], target_frames) @ residuals


def resample_frames(matrix: np.ndarray, target_frames: int) -> np.ndarray:
    """Alias of align_frames for spectrogram time resampling."""
    return align_frames(matrix, target_frames)


def build_bank(
    clips_by_class,
    params: StftParams,
    target_frames: int,
    class_names=None,
    sample_rate: int | None = None,
) -> ClassSpectrogramBank:
    """Average the sqrt-magnitude spectrograms of each class's clips.

    Every clip is transformed, re-timed to `target_frames` rows, and
    averaged elementwise within its class. Class order follows
    `class_names` when given, else sorted label order.
    """
    if target_frames < 1:
        raise InvalidArgument("target_frames must be >= 1")
    names = tuple(class_names) if class_names is not None else tuple(
        sorted(clips_by_class)
    )
    bases = []
    counts = []
    rate = sample_rate
    for name in names:
        clips = list(clips_by_class.get(name, ()))
        if not clips:
            raise BankError(f"class {name!r} has no training clips")
        acc = np.zeros((target_frames, params.num_bins))
        for clip in clips:
            if rate is None:
                rate = clip.sample_rate
            spec = spectrogram_of(clip, params, MODE_SQRT_MAGNITUDE)
            acc += resample_frames(spec.frames, target_frames)
        bases.append(acc / len(clips))
        counts.append(len(clips))
    return ClassSpectrogramBank(names, np.stack(bases), tuple(counts), params,
                                rate if rate is not None else 44100)


def extract_residual(spectrogram, class_name: str,
                     bank: ClassSpectrogramBank) -> np.ndarray:
    """Target residual s_c = S - A_K for a sqrt-magnitude spectrogram."""
    values = spectrogram.frames if isinstance(spectrogram, Spectrogram) else (
        np.asarray(spectrogram, dtype=np.float64)
    )
    base = bank.base_for(class_name)
    if values.shape != base.shape:
        raise AlignmentError(
            f"spectrogram shape {values.shape} does not match bank {base.shape}"
        )
    return values - base


def compose_spectrogram(residual, class_name: str,
                        bank: ClassSpectrogramBank) -> Spectrogram:
    """Predicted spectrogram s' = max(s_c + A_K, 0) in sqrt-magnitude mode.

    With residual None (the class-scores-only model), s' is the class
    average itself.
    """
    base = bank.base_for(class_name)
    if residual is None:
        values = base.copy()
    else:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != base.shape:
            raise AlignmentError(
                f"residual shape {residual.shape} does not match bank "
                f"{base.shape}; align_frames first"
            )
        values = np.maximum(residual + base, 0.0)
    return Spectrogram(values, MODE_SQRT_MAGNITUDE, bank.params,
                       bank.sample_rate)


def robust_loss_scalar(gamma: float, alpha: float = 1.0) -> float:
    """log(alpha + gamma^2), the per-frame robust penalty at norm gamma."""
    if alpha <= 0:
        raise InvalidArgument("alpha must be positive")
    return float(np.log(alpha + float(gamma) ** 2))


def robust_energy(pred: np.ndarray, target: np.ndarray,
                  alpha: float = 1.0) -> float:
    """Sum over frames of log(alpha + ||pred_t - target_t||^2)."""
    if alpha <= 0:
        raise InvalidArgument("alpha must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("robust_energy operands differ", pred.shape,
                         target.shape)
    sq = ((pred - target) ** 2).sum(axis=1)
    return float(np.log(alpha + sq).sum())


def synthesize_waveform(spectrogram: Spectrogram,
                        params: StftParams | None = None,
                        gl_iterations: int = 16) -> AudioClip:
    """Render a waveform from a sqrt-magnitude spectrogram.

    The compression is squared back to magnitude, phase is recovered by
    Griffin-Lim (zero-phase start, deterministic), and the result is
    peak-normalized to 0.9 full scale unless silent.
    """
    if spectrogram.mode != MODE_SQRT_MAGNITUDE:
        spectrogram = spectrogram.as_mode(MODE_SQRT_MAGNITUDE)
    mag = spectrogram.as_mode(MODE_MAGNITUDE)
    clip, _ = griffin_lim(mag, params, gl_iterations)
    peak = float(np.max(np.abs(clip.samples))) if clip.samples.size else 0.0
    if peak > 0:
        return AudioClip(clip.samples * (0.9 / peak), clip.sample_rate)
    return clip


# ---------------------------------------------------------------------------
# bank container round trip


def bank_save(bank: ClassSpectrogramBank, path):
    tensors = {
        f"base.{i:02d}.{name}": bank.bases[i]
        for i, name in enumerate(bank.class_names)
    }
    lines = [
        "[bank]",
        "classes = " + ",".join(bank.class_names),
        "counts = " + ",".join(str(c) for c in bank.clip_counts),
        f"sample_rate = {bank.sample_rate}",
        "[stft]",
        f"fft_size = {bank.params.fft_size}",
        f"window_size = {bank.params.window_size}",
        f"hop_size = {bank.params.hop_size}",
        f"window_kind = {bank.params.window_kind}",
    ]
    containers.checkpoint_save(Path(path), tensors, "\n".join(lines) + "\n",
                               seed=0, kind="bank")


def bank_load(path) -> ClassSpectrogramBank:
    import configparser

    state = containers.checkpoint_load(Path(path))
    if state["kind"] != "bank":
        raise InvalidArgument(f"not a bank checkpoint: kind={state['kind']!r}")
    parser = configparser.ConfigParser()
    parser.read_string(state["config_text"])
    names = tuple(parser["bank"]["classes"].split(","))
    counts = tuple(int(c) for c in parser["bank"]["counts"].split(","))
    rate = int(parser["bank"]["sample_rate"])
    params = StftParams(
        fft_size=int(parser["stft"]["fft_size"]),
        window_size=int(parser["stft"]["window_size"]),
        hop_size=int(parser["stft"]["hop_size"]),
        window_kind=parser["stft"]["window_kind"],
    )
    bases = np.stack([
        state["tensors"][f"base.{i:02d}.{name}"] for i, name in enumerate(names)
    ])
    return ClassSpectrogramBank(names, bases, counts, params, rate)
