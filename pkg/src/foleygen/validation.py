"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .video import FrameSequence


def check_clips(X) -> list:
    """Validate that X is a non-empty sequence of FrameSequence clips."""
    if isinstance(X, FrameSequence):
        X = [X]
    try:
        clips = list(X)
    except TypeError:
        raise InvalidArgument("X must be a sequence of frame clips") from None
    if not clips:
        raise InvalidArgument("X must contain at least one clip")
    for i, clip in enumerate(clips):
        if not isinstance(clip, FrameSequence):
            raise InvalidArgument(
                f"X[{i}] is {type(clip).__name__}, expected FrameSequence")
    return clips


def check_labels(y, n_clips: int):
    """Return (class name tuple, per-clip integer indices).

    Accepts string labels or already-encoded integers; classes come out in
    sorted order either way so the mapping is reproducible.
    """
    labels = np.asarray(y).ravel()
    if labels.shape[0] != n_clips:
        raise InvalidArgument(
            f"got {labels.shape[0]} labels for {n_clips} clips")
    classes, indices = np.unique(labels, return_inverse=True)
    if classes.shape[0] < 2:
        raise InvalidArgument("training needs at least two distinct classes")
    return tuple(str(c) for c in classes), indices.astype(np.int64)


def check_targets(targets, n_clips: int, num_bins: int) -> list:
    """Validate per-clip target spectrograms ([T x bins] float arrays)."""
    items = list(targets)
    if len(items) != n_clips:
        raise InvalidArgument(
            f"got {len(items)} target spectrograms for {n_clips} clips")
    out = []
    for i, item in enumerate(items):
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != num_bins:
            raise InvalidArgument(
                f"target[{i}] must be [frames x {num_bins}], "
                f"got shape {arr.shape}")
        out.append(arr)
    return out


def check_is_fitted(estimator, attribute: str = "weights_") -> None:
    if not hasattr(estimator, attribute):
        raise InvalidArgument(
            f"{type(estimator).__name__} is not fitted yet; call fit first")


def check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise InvalidArgument(f"seed must be an integer, got {seed!r}")
    return int(seed)
