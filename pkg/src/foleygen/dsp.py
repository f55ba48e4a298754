"""Short-time Fourier analysis and waveform reconstruction.

Everything here is a pure function over immutable inputs: windowing, STFT,
spectrograms in three compression modes, overlap-add inversion with
window-square normalization, Griffin-Lim phase recovery, and lag-searched
normalized cross-correlation. No learned state is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as _scipy_signal

from .errors import InvalidArgument, ShapeError, UndefinedCorrelationError

MODE_MAGNITUDE = "magnitude"
MODE_POWER = "power"
MODE_SQRT_MAGNITUDE = "sqrt_magnitude"
SPECTROGRAM_MODES = (MODE_MAGNITUDE, MODE_POWER, MODE_SQRT_MAGNITUDE)

#: Reconstruction is suppressed where the summed squared window falls below
#: this, which only happens outside the overlap-add coverage of any frame.
_OLA_EPS = 1e-12


@dataclass(frozen=True)
class AudioClip:
    """A mono waveform with amplitudes in [-1, 1] and its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidArgument("AudioClip requires a nonempty 1-D sample vector")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise InvalidArgument("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftParams:
    """Framing parameters for analysis and synthesis.

    Only Hann windows are supported. The overlap fraction
    ``1 - hop_size/window_size`` must stay within [25%, 75%]; the default is
    50% overlap at a 256-point window.
    """

    fft_size: int = 256
    window_size: int = 256
    hop_size: int = 128
    window_kind: str = "hanning"

    def __post_init__(self):
        if self.window_kind != "hanning":
            raise InvalidArgument(f"unsupported window kind: {self.window_kind!r}")
        if self.window_size < 1 or self.fft_size < 1:
            raise InvalidArgument("fft_size and window_size must be >= 1")
        if self.window_size > self.fft_size:
            raise InvalidArgument(
                f"window_size {self.window_size} exceeds fft_size {self.fft_size}"
            )
        if not (0 < self.hop_size <= self.window_size):
            raise InvalidArgument(
                f"hop_size must satisfy 0 < hop <= window, got {self.hop_size}"
            )
        overlap = 1.0 - self.hop_size / self.window_size
        if not (0.25 - 1e-12 <= overlap <= 0.75 + 1e-12):
            raise InvalidArgument(
                f"overlap {overlap:.2%} outside the supported [25%, 75%] range"
            )

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.window_size:
            raise InvalidArgument(
                f"clip of {num_samples} samples is shorter than one "
                f"{self.window_size}-sample window"
            )
        return (num_samples - self.window_size) // self.hop_size + 1

    def num_samples(self, num_frames: int) -> int:
        """Length of the waveform covered by `num_frames` frames."""
        return (num_frames - 1) * self.hop_size + self.window_size


@dataclass(frozen=True)
class Spectrogram:
    """Nonnegative time-frequency matrix, one row per frame.

    ``mode`` records the compression applied to the one-sided STFT magnitude:
    ``magnitude`` = |STFT|, ``power`` = |STFT|^2, ``sqrt_magnitude`` =
    |STFT|^(1/2). The last is the working domain of the synthesis models.
    """

    frames: np.ndarray
    mode: str
    params: StftParams = field(default_factory=StftParams)
    sample_rate: int = 44100

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise InvalidArgument("Spectrogram frames must be a 2-D matrix")
        if frames.shape[1] != self.params.num_bins:
            raise ShapeError(
                "spectrogram bin count does not match params",
                frames.shape,
                (frames.shape[0], self.params.num_bins),
            )
        if self.mode not in SPECTROGRAM_MODES:
            raise InvalidArgument(f"unknown spectrogram mode: {self.mode!r}")
        if not np.all(np.isfinite(frames)):
            raise InvalidArgument("spectrogram entries must be finite")
        if frames.size and frames.min() < 0:
            raise InvalidArgument("spectrogram entries must be nonnegative")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def as_mode(self, mode: str) -> "Spectrogram":
        """Reinterpret the matrix in another compression mode."""
        if mode not in SPECTROGRAM_MODES:
            raise InvalidArgument(f"unknown spectrogram mode: {mode!r}")
        if mode == self.mode:
            return self
        mag = self.magnitude()
        if mode == MODE_MAGNITUDE:
            frames = mag
        elif mode == MODE_POWER:
            frames = mag**2
        else:
            frames = np.sqrt(mag)
        return Spectrogram(frames, mode, self.params, self.sample_rate)

    def magnitude(self) -> np.ndarray:
        if self.mode == MODE_MAGNITUDE:
            return self.frames
        if self.mode == MODE_POWER:
            return np.sqrt(self.frames)
        return self.frames**2


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window w[k] = 0.5 * (1 - cos(2*pi*k/n)).

    The periodic form satisfies constant overlap-add at hop n/2, which the
    overlap-add inverse relies on.
    """
    if n < 1:
        raise InvalidArgument("window length must be >= 1")
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def _frame_signal(samples: np.ndarray, params: StftParams) -> np.ndarray:
    """[num_frames x window_size] view of hop-strided windows of `samples`."""
    num_frames = params.num_frames(samples.size)
    idx = (
        np.arange(params.window_size)[None, :]
        + params.hop_size * np.arange(num_frames)[:, None]
    )
    return samples[idx]


def stft(clip: AudioClip, params: StftParams) -> np.ndarray:
    """One-sided STFT, shape [num_frames x (fft_size/2 + 1)], complex.

    Frame t covers samples [t*hop, t*hop + window). Frames that would run
    past the end of the signal are dropped rather than zero-padded.
    """
    frames = _frame_signal(clip.samples, params) * hann_window(params.window_size)
    return np.fft.rfft(frames, n=params.fft_size, axis=1)


def spectrogram_of(
    clip: AudioClip, params: StftParams, mode: str = MODE_POWER
) -> Spectrogram:
    """Spectrogram of `clip` in the requested compression mode."""
    if mode not in SPECTROGRAM_MODES:
        raise InvalidArgument(f"unknown spectrogram mode: {mode!r}")
    mag = np.abs(stft(clip, params))
    if mode == MODE_POWER:
        frames = mag**2
    elif mode == MODE_SQRT_MAGNITUDE:
        frames = np.sqrt(mag)
    else:
        frames = mag
    return Spectrogram(frames, mode, params, clip.sample_rate)


def istft_ola(spec: np.ndarray, params: StftParams, sample_rate: int = 44100) -> AudioClip:
    """Invert a one-sided STFT by windowed overlap-add.

    Each frame is inverted, windowed again, and accumulated; the result is
    divided by the summed squared window. For any window and hop this is the
    least-squares inverse of `stft`, so a round trip reconstructs the signal
    exactly wherever frames fully overlap (the interior).
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != params.num_bins:
        raise ShapeError(
            "STFT matrix shape inconsistent with params",
            spec.shape,
            (spec.shape[0] if spec.ndim == 2 else -1, params.num_bins),
        )
    num_frames = spec.shape[0]
    window = hann_window(params.window_size)
    frames = np.fft.irfft(spec, n=params.fft_size, axis=1)[:, : params.window_size]
    frames *= window

    total = params.num_samples(num_frames)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window**2
    for t in range(num_frames):
        start = t * params.hop_size
        out[start : start + params.window_size] += frames[t]
        norm[start : start + params.window_size] += wsq
    covered = norm > _OLA_EPS
    out[covered] /= norm[covered]
    out[~covered] = 0.0
    return AudioClip(out, sample_rate)


def griffin_lim(
    mag: Spectrogram,
    params: StftParams | None = None,
    iterations: int = 16,
) -> tuple[AudioClip, np.ndarray]:
    """Recover a waveform whose STFT magnitude approximates `mag`.

    Starts from all-zero phase (deterministic) and alternates between the
    magnitude constraint and STFT consistency. Returns the waveform and the
    per-iteration consistency errors e_i = ||abs(STFT(x_i)) - mag||_F; the
    sequence is non-increasing because both steps are projections.
    """
    if params is None:
        params = mag.params
    if iterations < 1:
        raise InvalidArgument("iterations must be >= 1")
    if mag.mode != MODE_MAGNITUDE:
        raise InvalidArgument(
            f"griffin_lim expects a magnitude-mode spectrogram, got {mag.mode!r}"
        )
    target = mag.frames
    if target.size and target.min() < 0:
        raise InvalidArgument("magnitude entries must be nonnegative")

    spec = target.astype(np.complex128)  # zero initial phase
    errors = np.empty(iterations)
    for i in range(iterations):
        clip = istft_ola(spec, params, mag.sample_rate)
        analysis = stft(clip, params)
        observed = np.abs(analysis)
        errors[i] = np.linalg.norm(observed - target)
        phase = analysis / np.maximum(observed, _OLA_EPS)
        spec = target * phase
    out = istft_ola(spec, params, mag.sample_rate).samples
    # The first and last window-minus-hop samples are covered by a single
    # frame; dividing inconsistent frame content by the vanishing window
    # there produces edge spikes, so those zones are silenced.
    edge = params.window_size - params.hop_size
    if edge > 0 and out.shape[0] > 2 * edge:
        out[:edge] = 0.0
        out[-edge:] = 0.0
    return AudioClip(out, mag.sample_rate), errors


def normalized_cross_correlation(
    a: AudioClip, b: AudioClip, max_lag_seconds: float = 0.5
) -> float:
    """Best zero-mean normalized cross-correlation over lags in +-0.5 s.

    Both signals are truncated to the shorter length and mean-removed; the
    correlation at each lag is normalized by the full-signal energies, so the
    value lies in [-1, 1] and equals 1.0 at lag 0 for identical signals.
    """
    if a.sample_rate != b.sample_rate:
        raise InvalidArgument(
            f"sample rates differ: {a.sample_rate} vs {b.sample_rate}"
        )
    n = min(a.samples.size, b.samples.size)
    x = a.samples[:n] - a.samples[:n].mean()
    y = b.samples[:n] - b.samples[:n].mean()
    ex = float(np.dot(x, x))
    ey = float(np.dot(y, y))
    if ex <= 0.0 or ey <= 0.0:
        raise UndefinedCorrelationError("zero-energy input after mean removal")
    max_lag = min(n - 1, int(round(max_lag_seconds * a.sample_rate)))
    corr = _scipy_signal.correlate(x, y, mode="full", method="fft")
    center = n - 1
    window = corr[center - max_lag : center + max_lag + 1]
    best = float(window.max() / np.sqrt(ex * ey))
    return float(np.clip(best, -1.0, 1.0))
