"""Multi-scale temporal relation network over sampled frame features.

For each scale q in 2..Q, ordered q-frame subsets of the sampled features
are concatenated, passed through that scale's two-layer perceptron g,
summed, and mapped to class scores by the scale's single-layer head h.
The multi-scale score is the sum over scales. All subset choices are
deterministic functions of (frame count, scale, cap, seed), so identical
configurations give bitwise-identical scores.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, InvalidArgument
from .rng import stream


@dataclass(frozen=True)
class TrnConfig:
    max_scale: int = 8
    num_frames: int = 8
    hidden_units: int = 256
    num_classes: int = 12
    subsets_per_scale: int = 8
    subset_seed: int = 0

    def __post_init__(self):
        if self.max_scale < 2:
            raise ConfigError("max_scale must be >= 2")
        if self.num_frames < self.max_scale:
            raise ConfigError(
                f"max_scale {self.max_scale} exceeds the {self.num_frames} "
                f"sampled frames; lower max_scale or sample more frames"
            )
        if self.subsets_per_scale < 1:
            raise ConfigError("subsets_per_scale must be >= 1")
        if min(self.hidden_units, self.num_classes) < 1:
            raise ConfigError("dims must be positive")


def select_ordered_subsets(r: int, q: int, cap: int, seed: int):
    """Strictly increasing q-tuples over range(r), at most `cap` of them.

    Exhaustive when C(r, q) fits under the cap; otherwise `cap` distinct
    tuples drawn by seeded sampling. Output is sorted, so equal arguments
    always produce the identical list.
    """
    if q < 1:
        raise InvalidArgument("scale must be >= 1")
    if q > r:
        raise InvalidArgument(f"cannot pick {q} of {r} frames")
    if cap < 1:
        raise InvalidArgument("cap must be >= 1")
    total = math.comb(r, q)
    if total <= cap:
        return list(itertools.combinations(range(r), q))
    gen = stream(seed, "subsets", str(r), str(q))
    chosen = set()
    while len(chosen) < cap:
        pick = tuple(sorted(int(i) for i in gen.choice(r, size=q, replace=False)))
        chosen.add(pick)
    return sorted(chosen)


def init_trn_params(config: TrnConfig, feature_dim: int, seed: int) -> dict:
    """Per-scale g/h weights; every scale gets its own matrices."""
    params = {}
    units = config.hidden_units
    for q in range(2, config.max_scale + 1):
        gen = stream(seed, "trn", f"scale{q}")
        params[f"scale{q}.g1.w"] = T.Tensor(
            T.orthogonal(q * feature_dim, units, gen), requires_grad=True
        )
        params[f"scale{q}.g1.b"] = T.Tensor(np.zeros(units), requires_grad=True)
        params[f"scale{q}.g2.w"] = T.Tensor(
            T.orthogonal(units, units, gen), requires_grad=True
        )
        params[f"scale{q}.g2.b"] = T.Tensor(np.zeros(units), requires_grad=True)
        params[f"scale{q}.h.w"] = T.Tensor(
            T.orthogonal(units, config.num_classes, gen), requires_grad=True
        )
        params[f"scale{q}.h.b"] = T.Tensor(np.zeros(config.num_classes),
                                           requires_grad=True)
    return params


def _scale_scores(weights, config, features, batch, r, q, subsets):
    """[B x C] scores of one scale from flat features [B*r x D]."""
    n_sub = len(subsets)
    flat_subsets = np.array(subsets, dtype=np.intp).reshape(-1)
    offsets = (np.arange(batch, dtype=np.intp) * r).repeat(n_sub * q)
    indices = np.tile(flat_subsets, batch) + offsets
    gathered = T.take_rows(features, indices)
    grouped = T.reshape(gathered, (batch * n_sub, q * features.shape[1]))
    a = T.relu(T.add(T.matmul(grouped, weights[f"scale{q}.g1.w"]),
                     weights[f"scale{q}.g1.b"]))
    a = T.relu(T.add(T.matmul(a, weights[f"scale{q}.g2.w"]),
                     weights[f"scale{q}.g2.b"]))
    summed = T.tensor_sum(
        T.reshape(a, (batch, n_sub, a.shape[1])), axis=1
    )
    return T.add(T.matmul(summed, weights[f"scale{q}.h.w"]),
                 weights[f"scale{q}.h.b"])


def trn_scores_batch(weights, config: TrnConfig, features: T.Tensor,
                     batch: int, num_frames: int) -> T.Tensor:
    """Multi-scale class scores [B x C] from flat features [B*r x D]."""
    if features.ndim != 2 or features.shape[0] != batch * num_frames:
        raise InvalidArgument(
            f"features must be [batch*frames x D] = "
            f"[{batch * num_frames} x D], got {features.shape}"
        )
    if num_frames < config.max_scale:
        raise InvalidArgument(
            f"only {num_frames} frames sampled but max_scale is "
            f"{config.max_scale}; lower the scale"
        )
    scores = None
    for q in range(2, config.max_scale + 1):
        subsets = select_ordered_subsets(num_frames, q,
                                         config.subsets_per_scale,
                                         config.subset_seed)
        term = _scale_scores(weights, config, features, batch, num_frames, q,
                             subsets)
        scores = term if scores is None else T.add(scores, term)
    return scores


def relation_scale_forward(features, q: int, weights,
                           config: TrnConfig) -> T.Tensor:
    """Single-scale scores for one clip's features [r x D]; length C."""
    if not isinstance(features, T.Tensor):
        features = T.Tensor(features)
    r = features.shape[0]
    subsets = select_ordered_subsets(r, q, config.subsets_per_scale,
                                     config.subset_seed)
    scores = _scale_scores(weights, config, features, 1, r, q, subsets)
    return T.reshape(scores, (config.num_classes,))


def trn_multiscale_forward(features, config: TrnConfig, weights) -> T.Tensor:
    """Class scores s_c2 (length C) for one clip's features [r x D]."""
    if not isinstance(features, T.Tensor):
        features = T.Tensor(features)
    scores = trn_scores_batch(weights, config, features, 1, features.shape[0])
    return T.reshape(scores, (config.num_classes,))


def trn_loss(scores, true_class: int) -> T.Tensor:
    """Softmax cross-entropy of one clip's class scores."""
    if not isinstance(scores, T.Tensor):
        scores = T.Tensor(scores)
    if scores.ndim == 1:
        scores = T.reshape(scores, (1, scores.shape[0]))
    return T.cross_entropy(scores, [int(true_class)])
