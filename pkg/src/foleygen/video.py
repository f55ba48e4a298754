"""Frame ingestion and temporal preprocessing.

Covers decoding frame directories (PGM/PNG) or raw-plane binaries into
normalized grayscale stacks, linear frame interpolation (with the frame
replication baseline), space-time image assembly, and uniform representative
frame sampling for the relation network path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import containers
from .errors import IngestError, InvalidArgument

LUMA = np.array([0.299, 0.587, 0.114])

IMAGE_SUFFIXES = (".pgm", ".png")


@dataclass(frozen=True)
class FrameSequence:
    """Grayscale frame stack [N x H x W] in [0, 1] plus clip metadata.

    ``first_rgb`` keeps the color content of the first frame [H x W x 3] for
    the per-clip appearance branch of the feature extractor.
    """

    frames: np.ndarray
    fps: float
    first_rgb: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise InvalidArgument("FrameSequence requires a nonempty [N x H x W] stack")
        if self.fps <= 0:
            raise InvalidArgument("fps must be positive")
        first_rgb = np.asarray(self.first_rgb, dtype=np.float64)
        if first_rgb.shape != frames.shape[1:] + (3,):
            raise InvalidArgument(
                f"first_rgb shape {first_rgb.shape} does not match frames "
                f"{frames.shape[1:]}"
            )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "first_rgb", first_rgb)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]

    @property
    def duration(self) -> float:
        return (len(self) - 1) / self.fps


@dataclass(frozen=True)
class SpaceTimeImage:
    """Three grayscale planes [3 x H x W]: previous, current, next frame."""

    channels: np.ndarray

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=np.float64)
        if channels.ndim != 3 or channels.shape[0] != 3:
            raise InvalidArgument("SpaceTimeImage requires exactly 3 planes")
        object.__setattr__(self, "channels", channels)


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """Luma conversion, 0.299 R + 0.587 G + 0.114 B."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image @ LUMA


def resize_bilinear(image: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a [H x W] or [H x W x C] image (corners aligned)."""
    image = np.asarray(image, dtype=np.float64)
    out_h, out_w = target_size
    if out_h < 1 or out_w < 1:
        raise InvalidArgument("target size must be positive")
    in_h, in_w = image.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()

    def _grid(n_in, n_out):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.linspace(0.0, n_in - 1, n_out)

    ys = _grid(in_h, out_h)
    xs = _grid(in_w, out_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if image.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise IngestError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestError(f"{path}: malformed PGM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval > 255:
        raise IngestError(f"{path}: 16-bit PGM is not supported")
    expected = width * height
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise IngestError(f"{path}: PGM payload shorter than header promises")
    gray = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return gray.astype(np.float64) / maxval


def _read_image(path: Path) -> np.ndarray:
    """Decode one image to [H x W] gray or [H x W x 3] RGB floats in [0, 1]."""
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    from PIL import Image

    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I;16", "I"):
                arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    return arr


def load_frames(
    path,
    target_size: tuple[int, int] = (64, 64),
    fps: float = 16.0,
) -> FrameSequence:
    """Load a clip's frames from a directory or a raw-plane binary.

    Directories must contain lexicographically ordered .pgm/.png files of
    identical dimensions; a regular file is read as the FGFRAM01 container.
    Frames are converted to grayscale and bilinearly resized to
    ``target_size``; the first frame is also retained in RGB.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise IngestError(f"{path}: no .pgm/.png frames found")
        raw = []
        shape = None
        for f in files:
            img = _read_image(f)
            if shape is None:
                shape = img.shape[:2]
            elif img.shape[:2] != shape:
                raise IngestError(
                    f"{f}: frame dimensions {img.shape[:2]} differ from "
                    f"first frame {shape}"
                )
            raw.append(img)
    elif path.is_file():
        stack = containers.read_frames_raw(path).astype(np.float64) / 255.0
        raw = list(stack)
    else:
        raise IngestError(f"{path}: no such file or directory")

    first = raw[0]
    first_rgb = first if first.ndim == 3 else np.repeat(first[:, :, None], 3, axis=2)
    frames = np.stack([resize_bilinear(rgb_to_gray(img), target_size) for img in raw])
    return FrameSequence(frames, fps, resize_bilinear(first_rgb, target_size))


def interpolate_frames(seq: FrameSequence, factor: int) -> FrameSequence:
    """Insert factor-1 evenly weighted linear blends between frame pairs.

    Frame count n becomes factor*(n-1)+1 and fps scales by factor, so the
    clip duration is preserved.
    """
    if factor < 1:
        raise InvalidArgument("interpolation factor must be >= 1")
    if len(seq) < 2:
        raise InvalidArgument("interpolation needs at least 2 source frames")
    if factor == 1:
        return FrameSequence(seq.frames.copy(), seq.fps, seq.first_rgb)
    a = seq.frames[:-1]
    b = seq.frames[1:]
    weights = np.arange(factor, dtype=np.float64) / factor
    # [n-1, factor, H, W]: blends between each pair, excluding the right end
    blends = a[:, None] * (1.0 - weights[None, :, None, None]) + b[:, None] * (
        weights[None, :, None, None]
    )
    frames = np.concatenate(
        [blends.reshape(-1, *seq.frame_shape), seq.frames[-1:][:]], axis=0
    )
    return FrameSequence(frames, seq.fps * factor, seq.first_rgb)


def replicate_frames(seq: FrameSequence, factor: int) -> FrameSequence:
    """Duplicate each frame `factor` times (the interpolation baseline)."""
    if factor < 1:
        raise InvalidArgument("replication factor must be >= 1")
    if factor == 1:
        return FrameSequence(seq.frames.copy(), seq.fps, seq.first_rgb)
    frames = np.repeat(seq.frames, factor, axis=0)
    return FrameSequence(frames, seq.fps * factor, seq.first_rgb)


def interpolation_factor_for(fps: float, target_fps: float = 190.0) -> int:
    """Smallest integer factor lifting `fps` to at least `target_fps`."""
    if fps <= 0:
        raise InvalidArgument("fps must be positive")
    return max(1, int(np.ceil(target_fps / fps)))


def space_time_image(seq: FrameSequence, t: int) -> SpaceTimeImage:
    """Stack frames (t-1, t, t+1) as three planes; boundaries clamp."""
    n = len(seq)
    if not (0 <= t < n):
        raise InvalidArgument(f"frame index {t} out of range for {n} frames")
    prev_i = max(t - 1, 0)
    next_i = min(t + 1, n - 1)
    return SpaceTimeImage(seq.frames[[prev_i, t, next_i]])


def representative_indices(n: int, q: int, segment_mode: str = "full") -> np.ndarray:
    """Strictly increasing indices of q uniformly spread frames.

    In ``early`` mode only the first 25% of the clip is sampled, which is the
    early-recognition evaluation regime.
    """
    if segment_mode not in ("full", "early"):
        raise InvalidArgument(f"unknown segment mode: {segment_mode!r}")
    if q < 1:
        raise InvalidArgument("sample count must be >= 1")
    limit = n if segment_mode == "full" else max(1, n // 4)
    if q > limit:
        raise InvalidArgument(
            f"cannot sample {q} frames from {limit} available ({segment_mode} mode)"
        )
    if q == 1:
        return np.array([0])
    positions = np.linspace(0.0, limit - 1, q)
    indices = np.floor(positions + 0.5).astype(np.intp)
    # uniform spacing >= 1 whenever q <= limit, so indices strictly increase
    assert np.all(np.diff(indices) >= 1)
    return indices


def sample_representative_frames(
    seq: FrameSequence, q: int, segment_mode: str = "full"
) -> np.ndarray:
    """The q representative frames of `seq` as a [q x H x W] stack."""
    return seq.frames[representative_indices(len(seq), q, segment_mode)]
