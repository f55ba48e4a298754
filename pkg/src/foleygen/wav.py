"""Minimal RIFF/WAVE codec for 16-bit PCM.

Reads mono or stereo PCM16 (stereo is downmixed by averaging the channels)
and writes mono PCM16 little-endian. Decoding failures raise
:class:`~foleygen.errors.CodecError` carrying the byte offset at which the
file stopped making sense.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import AudioClip
from .errors import CodecError

_PCM_SCALE = 32767.0


def wav_read(path) -> AudioClip:
    """Read a PCM16 WAV file into an AudioClip with samples in [-1, 1]."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise CodecError(f"{path}: file too short for a RIFF header", offset=0)
    if data[0:4] != b"RIFF":
        raise CodecError(f"{path}: missing RIFF magic", offset=0)
    if data[8:12] != b"WAVE":
        raise CodecError(f"{path}: missing WAVE form type", offset=8)

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + chunk_size > len(data):
            raise CodecError(f"{path}: chunk overruns file end", offset=pos)
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise CodecError(f"{path}: fmt chunk too small", offset=body)
            audio_format, channels, sample_rate, _, _, bits = struct.unpack_from(
                "<HHIIHH", data, body
            )
            if audio_format != 1:
                raise CodecError(
                    f"{path}: unsupported codec (format tag {audio_format}, "
                    "only PCM is supported)",
                    offset=body,
                )
            if bits != 16:
                raise CodecError(
                    f"{path}: unsupported sample width ({bits} bits, expected 16)",
                    offset=body + 14,
                )
            if channels not in (1, 2):
                raise CodecError(
                    f"{path}: unsupported channel count {channels}", offset=body + 2
                )
            fmt = (channels, sample_rate)
        elif chunk_id == b"data":
            pcm = (body, chunk_size)
        # other chunks (LIST, fact, ...) are skipped
        pos = body + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise CodecError(f"{path}: no fmt chunk found", offset=len(data))
    if pcm is None:
        raise CodecError(f"{path}: no data chunk found", offset=len(data))

    channels, sample_rate = fmt
    body, chunk_size = pcm
    frame_bytes = 2 * channels
    if chunk_size % frame_bytes:
        raise CodecError(
            f"{path}: data chunk is not a whole number of frames", offset=body
        )
    raw = np.frombuffer(data, dtype="<i2", count=chunk_size // 2, offset=body)
    samples = raw.astype(np.float64) / _PCM_SCALE
    if channels == 2:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    if samples.size == 0:
        raise CodecError(f"{path}: data chunk holds no samples", offset=body)
    return AudioClip(np.clip(samples, -1.0, 1.0), sample_rate)


def wav_write(clip: AudioClip, path) -> None:
    """Write an AudioClip as mono PCM16. Samples are clamped to [-1, 1]."""
    samples = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(samples * _PCM_SCALE).astype("<i2")
    data_size = pcm.nbytes
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + data_size,
        b"WAVE",
        b"fmt ",
        16,
        1,                      # PCM
        1,                      # mono
        clip.sample_rate,
        clip.sample_rate * 2,   # byte rate
        2,                      # block align
        16,                     # bits per sample
        b"data",
        data_size,
    )
    Path(path).write_bytes(header + pcm.tobytes())
