"""Run configuration: one flat dataclass, INI text on disk.

A RunConfig aggregates every knob the pipeline needs (audio analysis,
video ingestion, encoder, both classifier heads, training schedule) and
hands out the per-component config objects on demand. The file format is
plain `key = value` lines grouped into sections so a run can be diffed
and edited by hand.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

from .dsp import StftParams
from .encoder import EncoderConfig
from .errors import ConfigError
from .fslstm import FsLstmConfig
from .trn import TrnConfig

# section -> field names, also the serialization order
_SECTIONS = {
    "audio": ("sample_rate", "clip_duration", "fft_size", "window_size",
              "hop_size"),
    "video": ("fps", "frame_size", "interpolation_factor", "frame_expansion",
              "input_mode"),
    "encoder": ("encoder_input", "stage_channels", "output_dim"),
    "sequence_model": ("num_fast_cells", "hidden_dim", "zoneout_prob",
                       "dropout_prob", "forget_bias_init", "arch"),
    "relation_model": ("max_scale", "relation_frames", "hidden_units",
                       "subsets_per_scale", "segment_mode"),
    "train": ("num_classes", "learning_rate", "batch_size", "epochs",
              "lambda_residual", "alpha", "grad_clip", "seed",
              "early_stop_patience"),
}


@dataclass(frozen=True)
class RunConfig:
    # audio analysis
    sample_rate: int = 8000
    clip_duration: float = 2.0
    fft_size: int = 256
    window_size: int = 256
    hop_size: int = 128
    # video ingestion
    fps: float = 16.0
    frame_size: int = 64
    interpolation_factor: int = 1
    frame_expansion: str = "interpolate"  # or "replicate"
    input_mode: str = "spacetime"         # or "raw"
    # shared frame encoder
    encoder_input: int = 16
    stage_channels: tuple = (16, 32)
    output_dim: int = 64
    # frame-sequence classifier
    num_fast_cells: int = 2
    hidden_dim: int = 64
    zoneout_prob: float = 0.0
    dropout_prob: float = 0.0
    forget_bias_init: float = 1.0
    arch: str = "fslstm"                  # or "simple"
    # frame-relation classifier
    max_scale: int = 8
    relation_frames: int = 8
    hidden_units: int = 256
    subsets_per_scale: int = 8
    segment_mode: str = "full"            # or "early"
    # training schedule
    num_classes: int = 12
    learning_rate: float = 0.002
    batch_size: int = 12
    epochs: int = 200
    lambda_residual: float = 1.0
    alpha: float = 1.0
    grad_clip: float = 5.0
    seed: int = 0
    early_stop_patience: int = 3

    def __post_init__(self):
        if self.frame_expansion not in ("interpolate", "replicate"):
            raise ConfigError(
                f"frame_expansion must be 'interpolate' or 'replicate', "
                f"got {self.frame_expansion!r}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.lambda_residual < 0:
            raise ConfigError("lambda_residual must be non-negative")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate, epochs and batch_size must be "
                              "positive")
        # building the sub-configs surfaces their own range errors early
        self.stft_params()
        self.encoder_config()
        self.fslstm_config()
        self.trn_config()

    # component views -----------------------------------------------------

    def stft_params(self) -> StftParams:
        return StftParams(fft_size=self.fft_size,
                          window_size=self.window_size,
                          hop_size=self.hop_size)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(input_size=(self.encoder_input,
                                         self.encoder_input),
                             stage_channels=tuple(self.stage_channels),
                             output_dim=self.output_dim)

    def fslstm_config(self) -> FsLstmConfig:
        return FsLstmConfig(num_fast_cells=self.num_fast_cells,
                            hidden_dim=self.hidden_dim,
                            num_classes=self.num_classes,
                            residual_dim=self.num_bins,
                            zoneout_prob=self.zoneout_prob,
                            dropout_prob=self.dropout_prob,
                            forget_bias_init=self.forget_bias_init)

    def trn_config(self) -> TrnConfig:
        return TrnConfig(max_scale=self.max_scale,
                         num_frames=self.relation_frames,
                         hidden_units=self.hidden_units,
                         num_classes=self.num_classes,
                         subsets_per_scale=self.subsets_per_scale,
                         subset_seed=self.seed)

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    # INI round trip -------------------------------------------------------

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        for section, names in _SECTIONS.items():
            parser[section] = {}
            for name in names:
                value = getattr(self, name)
                if isinstance(value, tuple):
                    text = ",".join(str(v) for v in value)
                else:
                    text = str(value)
                parser[section][name] = text
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"bad config syntax: {exc}") from exc
        known = {name: section for section, names in _SECTIONS.items()
                 for name in names}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for name, raw in parser[section].items():
                if known.get(name) != section:
                    raise ConfigError(
                        f"unknown key {name!r} in section [{section}]")
                values[name] = _coerce(name, types[name], raw)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="ascii"))

    # profiles ------------------------------------------------------------

    @classmethod
    def desk(cls) -> "RunConfig":
        """Defaults sized for a laptop-scale synthetic corpus."""
        return cls()

    @classmethod
    def full(cls) -> "RunConfig":
        """Publication-scale settings: 44.1 kHz audio, frame streams
        interpolated toward 190 fps, wide stacked recurrence."""
        return cls(sample_rate=44100, clip_duration=5.0, fft_size=1024,
                   window_size=1024, hop_size=512, fps=30.0,
                   interpolation_factor=7, encoder_input=64,
                   stage_channels=(32, 64, 128), output_dim=512,
                   num_fast_cells=4, hidden_dim=512, zoneout_prob=0.1,
                   dropout_prob=0.1, batch_size=128, hidden_units=256,
                   learning_rate=0.0005)


_PROFILES = {"desk": RunConfig.desk, "full": RunConfig.full}


def profile(name: str) -> RunConfig:
    try:
        return _PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from "
                          f"{sorted(_PROFILES)}") from None


def _coerce(name: str, annotation: str, raw: str):
    raw = raw.strip()
    try:
        if annotation == "int":
            return int(raw)
        if annotation == "float":
            return float(raw)
        if annotation == "tuple":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from None
