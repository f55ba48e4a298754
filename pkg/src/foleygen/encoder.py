"""Convolutional feature extraction for video frames.

A small trainable stack of {3x3 conv, relu, 2x average pool} stages, global
average pooling, and an affine projection to a fixed-width vector stands in
for a large pretrained backbone. Per-frame features concatenate the encoding
of the frame's space-time image with the encoding of the clip's first RGB
frame; the RGB branch is computed once per clip. Users with a real backbone
can bypass all of this through the precomputed-feature container.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import containers, tensor as T
from .errors import ConfigError, InvalidArgument, ShapeError
from .rng import stream
from .video import FrameSequence, SpaceTimeImage


@dataclass(frozen=True)
class EncoderConfig:
    """Shapes of the frame encoder.

    Both branches (space-time and first-RGB) share one config; weights are
    separate. ``input_size`` must be divisible by 2 ** len(stage_channels).
    """

    input_size: tuple[int, int] = (32, 32)
    stage_channels: tuple[int, ...] = (16, 32)
    output_dim: int = 64
    in_channels: int = 3

    def __post_init__(self):
        if self.output_dim < 1:
            raise ConfigError("output_dim must be positive")
        if not self.stage_channels or any(c < 1 for c in self.stage_channels):
            raise ConfigError("stage_channels must be positive")
        h, w = self.input_size
        factor = 2 ** len(self.stage_channels)
        if h % factor or w % factor:
            raise ConfigError(
                f"input size {self.input_size} not divisible by {factor} "
                f"(one 2x pool per stage)"
            )
        object.__setattr__(self, "input_size", (int(h), int(w)))
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))

    @property
    def feature_dim(self) -> int:
        """Length of a concatenated two-branch frame feature."""
        return 2 * self.output_dim


def init_encoder_params(config: EncoderConfig, seed: int, prefix: str) -> dict:
    """Fresh trainable weights for one encoder branch, keyed by name."""
    params = {}
    chans = config.in_channels
    for i, out_chans in enumerate(config.stage_channels):
        gen = stream(seed, "encoder", prefix, f"conv{i}")
        fan_in = chans * 9
        w = gen.normal(size=(out_chans, fan_in)) * np.sqrt(2.0 / fan_in)
        params[f"{prefix}.conv{i}.w"] = T.Tensor(w, requires_grad=True)
        params[f"{prefix}.conv{i}.b"] = T.Tensor(np.zeros(out_chans),
                                                 requires_grad=True)
        chans = out_chans
    gen = stream(seed, "encoder", prefix, "proj")
    params[f"{prefix}.proj.w"] = T.Tensor(
        T.orthogonal(chans, config.output_dim, gen), requires_grad=True
    )
    params[f"{prefix}.proj.b"] = T.Tensor(np.zeros(config.output_dim),
                                          requires_grad=True)
    return params


def encode_images(params: dict, config: EncoderConfig, images, prefix: str) -> T.Tensor:
    """Encode a batch of images [B x C x H x W] to features [B x D]."""
    if not isinstance(images, T.Tensor):
        images = T.Tensor(images)
    if images.ndim == 3:
        images = T.reshape(images, (1,) + images.shape)
    if images.ndim != 4 or images.shape[1] != config.in_channels:
        raise ShapeError(
            "encoder input must be [B x C x H x W] with configured channels",
            images.shape,
            (images.shape[0] if images.ndim == 4 else -1, config.in_channels)
            + config.input_size,
        )
    if images.shape[2:] != config.input_size:
        raise ShapeError("encoder input size mismatch",
                         images.shape[2:], config.input_size)
    h = images
    for i in range(len(config.stage_channels)):
        h = T.conv3x3(h, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"])
        h = T.relu(h)
        h = T.avg_pool2x2(h)
    pooled = T.tensor_mean(h, axis=(2, 3))
    return T.add(T.matmul(pooled, params[f"{prefix}.proj.w"]),
                 params[f"{prefix}.proj.b"])


def encode_image(params: dict, config: EncoderConfig, image, prefix: str) -> T.Tensor:
    """Single-image convenience wrapper; returns a feature of length D."""
    out = encode_images(params, config, image, prefix)
    return T.reshape(out, (config.output_dim,))


def init_frame_encoder(config: EncoderConfig, seed: int) -> dict:
    """Weights for both branches of the per-frame feature."""
    params = init_encoder_params(config, seed, "sp")
    params.update(init_encoder_params(config, seed, "rgb"))
    return params


def build_frame_feature(
    params: dict,
    config: EncoderConfig,
    sp: SpaceTimeImage,
    first_rgb: np.ndarray,
) -> T.Tensor:
    """Concatenated feature [f(space-time); f(first RGB)], length 2D."""
    sp_feat = encode_image(params, config, sp.channels, "sp")
    rgb = np.asarray(first_rgb, dtype=np.float64)
    if rgb.ndim == 3 and rgb.shape[2] == 3:
        rgb = rgb.transpose(2, 0, 1)
    rgb_feat = encode_image(params, config, rgb, "rgb")
    return T.concat([sp_feat, rgb_feat], axis=0)


def _resize_stack(frames: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    from .video import resize_bilinear

    if frames.shape[-2:] == tuple(size):
        return frames
    flat = frames.reshape(-1, *frames.shape[-2:])
    out = np.stack([resize_bilinear(f, size) for f in flat])
    return out.reshape(frames.shape[:-2] + tuple(size))


def clip_planes(seq: FrameSequence, config: EncoderConfig,
                input_mode: str = "spacetime") -> tuple[np.ndarray, np.ndarray]:
    """Constant encoder inputs for a clip.

    Returns (planes [T x 3 x H x W], rgb [3 x H x W]), already resized to the
    configured input size. ``input_mode`` picks between space-time images
    (previous/current/next planes) and the raw current frame tripled, which
    is the motion-blind ablation variant.
    """
    if input_mode not in ("spacetime", "raw"):
        raise InvalidArgument(f"unknown input mode: {input_mode!r}")
    frames = _resize_stack(seq.frames, config.input_size)
    n = frames.shape[0]
    if input_mode == "spacetime":
        prev_i = np.maximum(np.arange(n) - 1, 0)
        next_i = np.minimum(np.arange(n) + 1, n - 1)
        planes = np.stack([frames[prev_i], frames, frames[next_i]], axis=1)
    else:
        planes = np.repeat(frames[:, None], 3, axis=1)
    rgb = _resize_stack(seq.first_rgb.transpose(2, 0, 1), config.input_size)
    # center [0,1] intensities so convolutions start zero-mean
    return planes * 2.0 - 1.0, rgb * 2.0 - 1.0


def clip_features(params: dict, config: EncoderConfig, seq: FrameSequence,
                  input_mode: str = "spacetime") -> T.Tensor:
    """Per-frame features of one clip, [T x 2D], RGB branch encoded once."""
    planes, rgb = clip_planes(seq, config, input_mode)
    sp_feats = encode_images(params, config, planes, "sp")
    rgb_feat = encode_images(params, config, rgb[None], "rgb")
    tiled = T.take_rows(rgb_feat, np.zeros(planes.shape[0], dtype=np.intp))
    return T.concat([sp_feats, tiled], axis=1)


def save_features(path, features: np.ndarray):
    """Persist [count x dim] features in the binary feature container."""
    containers.write_features(path, np.asarray(features, dtype=np.float64))


def load_precomputed_features(path, expected_dim: int | None = None) -> np.ndarray:
    """Read features from the container; [count x dim] float64.

    When `expected_dim` is given (the model's 2D feature width), a mismatch
    raises a config error before any model code sees the data.
    """
    feats = containers.read_features(Path(path))
    if expected_dim is not None and feats.shape[1] != expected_dim:
        raise ConfigError(
            f"precomputed features have dim {feats.shape[1]}, "
            f"model expects {expected_dim}"
        )
    return feats
