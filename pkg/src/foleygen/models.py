"""Trainable classifiers with a scikit-learn estimator surface.

Two models share the same two-branch frame encoder and differ in how they
aggregate time: FrameSequenceClassifier runs a stacked fast/slow recurrence
over every frame and can also emit per-frame spectrogram residuals, while
FrameRelationClassifier scores ordered frame subsets at multiple scales.
Both follow the usual fit/predict/predict_proba protocol, keep learned
state in trailing-underscore attributes, and round-trip through the binary
checkpoint container.
"""

from __future__ import annotations

import json
import time

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import tensor as T
from .containers import checkpoint_load, checkpoint_save
from .encoder import EncoderConfig, encode_images, init_frame_encoder
from .encoder import clip_planes
from .errors import AlignmentError, CodecError, ConfigError, InvalidArgument
from .fslstm import FsLstmConfig, fslstm_forward_batch, init_fslstm_params
from .rng import derive_key, stream
from .synthesis import alignment_matrix
from .trn import TrnConfig, init_trn_params, trn_scores_batch
from .validation import (check_clips, check_is_fitted, check_labels,
                         check_seed, check_targets)
from .video import interpolate_frames, replicate_frames, representative_indices


def _expand_clip(seq, factor: int, expansion: str):
    if factor <= 1:
        return seq
    if expansion == "interpolate":
        return interpolate_frames(seq, factor)
    if expansion == "replicate":
        return replicate_frames(seq, factor)
    raise InvalidArgument(f"unknown frame expansion {expansion!r}")


def _epoch_batches(groups: dict, batch_size: int, seed: int, epoch: int):
    """Deterministically shuffled batches, clips grouped by frame count."""
    batches = []
    for t_len in sorted(groups):
        ids = np.asarray(groups[t_len], dtype=np.intp)
        perm = stream(seed, "shuffle", epoch, t_len).permutation(ids.shape[0])
        ids = ids[perm]
        for start in range(0, ids.shape[0], batch_size):
            batches.append(ids[start:start + batch_size])
    order = stream(seed, "batchorder", epoch).permutation(len(batches))
    return [batches[i] for i in order]


def _group_by_length(prepared) -> dict:
    groups: dict[int, list] = {}
    for i, (planes, _) in enumerate(prepared):
        groups.setdefault(planes.shape[0], []).append(i)
    return groups


def _mask_seed(seed: int, epoch: int, batch_index: int) -> int:
    return derive_key(seed, "stepmask", epoch, batch_index)


def _jsonable_params(params: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in params.items()}


def _restore_params(params: dict) -> dict:
    out = dict(params)
    if "stage_channels" in out:
        out["stage_channels"] = tuple(out["stage_channels"])
    return out


class FrameSequenceClassifier(BaseEstimator, ClassifierMixin):
    """Recurrent clip classifier with an optional spectrogram-residual head.

    Every frame contributes a feature (motion planes plus the clip's first
    color frame); a stack of fast cells coupled to one slow cell turns the
    sequence into per-timestep class logits and residual rows. Class
    predictions pool the logits over time. When `fit` receives target
    spectrograms and a class bank, the robust spectral term joins the
    cross-entropy so the residual head learns to bend the class average
    toward each clip.
    """

    def __init__(self, num_fast_cells=2, hidden_dim=64, zoneout_prob=0.0,
                 dropout_prob=0.0, forget_bias_init=1.0, arch="fslstm",
                 encoder_input=16, stage_channels=(16, 32), output_dim=64,
                 input_mode="spacetime", interpolation_factor=1,
                 frame_expansion="interpolate", residual_dim=129,
                 learning_rate=0.002, batch_size=12, epochs=200,
                 lambda_residual=1.0, alpha=1.0, grad_clip=5.0,
                 early_stop_patience=3, seed=0, verbose=0):
        self.num_fast_cells = num_fast_cells
        self.hidden_dim = hidden_dim
        self.zoneout_prob = zoneout_prob
        self.dropout_prob = dropout_prob
        self.forget_bias_init = forget_bias_init
        self.arch = arch
        self.encoder_input = encoder_input
        self.stage_channels = stage_channels
        self.output_dim = output_dim
        self.input_mode = input_mode
        self.interpolation_factor = interpolation_factor
        self.frame_expansion = frame_expansion
        self.residual_dim = residual_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.lambda_residual = lambda_residual
        self.alpha = alpha
        self.grad_clip = grad_clip
        self.early_stop_patience = early_stop_patience
        self.seed = seed
        self.verbose = verbose

    @classmethod
    def from_config(cls, cfg, **overrides):
        params = dict(
            num_fast_cells=cfg.num_fast_cells, hidden_dim=cfg.hidden_dim,
            zoneout_prob=cfg.zoneout_prob, dropout_prob=cfg.dropout_prob,
            forget_bias_init=cfg.forget_bias_init, arch=cfg.arch,
            encoder_input=cfg.encoder_input,
            stage_channels=tuple(cfg.stage_channels),
            output_dim=cfg.output_dim, input_mode=cfg.input_mode,
            interpolation_factor=cfg.interpolation_factor,
            frame_expansion=cfg.frame_expansion, residual_dim=cfg.num_bins,
            learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
            epochs=cfg.epochs, lambda_residual=cfg.lambda_residual,
            alpha=cfg.alpha, grad_clip=cfg.grad_clip,
            early_stop_patience=cfg.early_stop_patience, seed=cfg.seed)
        params.update(overrides)
        return cls(**params)

    # internals -----------------------------------------------------------

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(input_size=(self.encoder_input,
                                         self.encoder_input),
                             stage_channels=tuple(self.stage_channels),
                             output_dim=self.output_dim)

    def _prepare(self, clips, enc_cfg):
        out = []
        for seq in clips:
            seq = _expand_clip(seq, self.interpolation_factor,
                               self.frame_expansion)
            out.append(clip_planes(seq, enc_cfg, self.input_mode))
        return out

    def _forward(self, weights, enc_cfg, fs_cfg, prepared, ids, mode, seed):
        planes = np.stack([prepared[i][0] for i in ids])
        rgbs = np.stack([prepared[i][1] for i in ids])
        batch, n_steps = planes.shape[0], planes.shape[1]
        # time-major flatten: one conv pass over all timesteps, then each
        # step is a contiguous row block
        flat = planes.transpose(1, 0, 2, 3, 4).reshape(
            (batch * n_steps,) + planes.shape[2:])
        sp_all = encode_images(weights, enc_cfg, flat, "sp")
        rgb_feats = encode_images(weights, enc_cfg, rgbs, "rgb")
        steps = []
        for t in range(n_steps):
            sp = T.narrow(sp_all, 0, t * batch, batch)
            steps.append(T.concat([sp, rgb_feats], axis=1))
        logits, residuals = fslstm_forward_batch(weights, fs_cfg, steps,
                                                 mode, seed, self.arch)
        total = logits[0]
        for item in logits[1:]:
            total = T.add(total, item)
        pooled = T.mul(total, 1.0 / n_steps)
        return pooled, residuals

    def _batch_loss(self, weights, enc_cfg, fs_cfg, prepared, y_idx,
                    targets, bases, ids, seed):
        pooled, residuals = self._forward(weights, enc_cfg, fs_cfg, prepared,
                                          ids, "train", seed)
        loss = T.cross_entropy(pooled, y_idx[ids])
        if targets is not None and self.lambda_residual > 0:
            batch = len(ids)
            n_steps = len(residuals)
            bins = residuals[0].shape[1]
            spec_frames = targets.shape[1]
            resid = T.reshape(T.stack(residuals), (n_steps, batch * bins))
            align = T.Tensor(alignment_matrix(n_steps, spec_frames))
            warped = T.reshape(T.matmul(align, resid),
                               (spec_frames, batch, bins))
            pred = T.add(warped, T.Tensor(bases[ids].transpose(1, 0, 2)))
            diff = T.sub(pred, T.Tensor(targets[ids].transpose(1, 0, 2)))
            row_sq = T.tensor_sum(T.square(diff), axis=2)
            robust = T.tensor_sum(T.log(T.add(row_sq, float(self.alpha))))
            loss = T.add(loss, T.mul(robust, self.lambda_residual / batch))
        preds = np.argmax(pooled.data, axis=1)
        return loss, preds

    # estimator API ---------------------------------------------------------

    def fit(self, X, y, targets=None, bank=None):
        """Train on clips X with labels y.

        `targets` (per-clip sqrt-magnitude spectrograms, [frames x bins])
        and `bank` (the class-average bank the residuals ride on) are
        required together and switch on the residual term.
        """
        started = time.monotonic()
        clips = check_clips(X)
        classes, y_idx = check_labels(y, len(clips))
        seed = check_seed(self.seed)
        if (targets is None) != (bank is None):
            raise InvalidArgument("targets and bank must be given together")
        enc_cfg = self._encoder_config()
        residual_dim = bank.num_bins if bank is not None else self.residual_dim
        fs_cfg = FsLstmConfig(num_fast_cells=self.num_fast_cells,
                              hidden_dim=self.hidden_dim,
                              num_classes=len(classes),
                              residual_dim=residual_dim,
                              zoneout_prob=self.zoneout_prob,
                              dropout_prob=self.dropout_prob,
                              forget_bias_init=self.forget_bias_init)

        target_arr = base_arr = None
        if targets is not None:
            rows = check_targets(targets, len(clips), residual_dim)
            for i, row in enumerate(rows):
                if row.shape[0] != bank.num_frames:
                    raise AlignmentError(
                        f"target[{i}] has {row.shape[0]} frames but the bank "
                        f"holds {bank.num_frames}")
            target_arr = np.stack(rows)
            base_arr = np.stack([bank.base_for(classes[k]) for k in y_idx])

        prepared = self._prepare(clips, enc_cfg)
        weights = init_frame_encoder(enc_cfg, seed)
        weights.update(init_fslstm_params(fs_cfg, enc_cfg.feature_dim, seed,
                                          arch=self.arch))
        opt = T.Adam(list(weights.values()), lr=self.learning_rate)
        groups = _group_by_length(prepared)

        history = []
        streak = 0
        for epoch in range(self.epochs):
            correct = 0
            loss_sum = 0.0
            for b, ids in enumerate(_epoch_batches(groups, self.batch_size,
                                                   seed, epoch)):
                loss, preds = self._batch_loss(
                    weights, enc_cfg, fs_cfg, prepared, y_idx, target_arr,
                    base_arr, ids, _mask_seed(seed, epoch, b))
                opt.zero_grad()
                T.backward(loss, free_graph=True)
                T.clip_gradients(opt.params, self.grad_clip)
                opt.step()
                loss_sum += loss.item() * len(ids)
                correct += int(np.sum(preds == y_idx[ids]))
            acc = correct / len(clips)
            history.append({"epoch": epoch,
                            "loss": loss_sum / len(clips),
                            "accuracy": acc})
            if self.verbose:
                print(f"epoch {epoch}: loss {loss_sum / len(clips):.4f} "
                      f"acc {acc:.3f}")
            streak = streak + 1 if correct == len(clips) else 0
            if streak >= self.early_stop_patience:
                break

        self.classes_ = np.asarray(classes)
        self.weights_ = weights
        self.encoder_config_ = enc_cfg
        self.model_config_ = fs_cfg
        self.history_ = history
        self.n_epochs_ = len(history)
        self.fit_seconds_ = time.monotonic() - started
        return self

    def _eval_pooled(self, X):
        check_is_fitted(self)
        clips = check_clips(X)
        prepared = self._prepare(clips, self.encoder_config_)
        groups = _group_by_length(prepared)
        pooled = np.zeros((len(clips), len(self.classes_)))
        for t_len in sorted(groups):
            ids = groups[t_len]
            for start in range(0, len(ids), self.batch_size):
                chunk = ids[start:start + self.batch_size]
                out, _ = self._forward(self.weights_, self.encoder_config_,
                                       self.model_config_, prepared, chunk,
                                       "eval", self.seed)
                pooled[chunk] = out.data
        return pooled

    def predict_proba(self, X):
        pooled = self._eval_pooled(X)
        shifted = pooled - pooled.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        pooled = self._eval_pooled(X)
        return self.classes_[np.argmax(pooled, axis=1)]

    def predict_residuals(self, X):
        """Per-clip residual matrices [frames x bins], eval mode."""
        check_is_fitted(self)
        clips = check_clips(X)
        prepared = self._prepare(clips, self.encoder_config_)
        out = [None] * len(clips)
        groups = _group_by_length(prepared)
        for t_len in sorted(groups):
            ids = groups[t_len]
            for start in range(0, len(ids), self.batch_size):
                chunk = ids[start:start + self.batch_size]
                _, residuals = self._forward(
                    self.weights_, self.encoder_config_, self.model_config_,
                    prepared, chunk, "eval", self.seed)
                stacked = np.stack([r.data for r in residuals])
                for j, clip_id in enumerate(chunk):
                    out[clip_id] = stacked[:, j, :]
        return out

    # persistence -----------------------------------------------------------

    _kind = "fslstm"

    def save(self, path):
        check_is_fitted(self)
        meta = {"estimator": type(self).__name__,
                "params": _jsonable_params(self.get_params()),
                "classes": [str(c) for c in self.classes_],
                "history": self.history_}
        tensors = {name: t.data for name, t in self.weights_.items()}
        checkpoint_save(path, tensors, json.dumps(meta, sort_keys=True),
                        seed=check_seed(self.seed), step=self.n_epochs_,
                        kind=self._kind)

    @classmethod
    def load(cls, path):
        blob = checkpoint_load(path)
        if blob["kind"] != cls._kind:
            raise ConfigError(
                f"checkpoint holds a {blob['kind']!r} model, expected "
                f"{cls._kind!r}")
        try:
            meta = json.loads(blob["config_text"])
        except json.JSONDecodeError as exc:
            raise CodecError(f"bad checkpoint metadata: {exc}") from exc
        est = cls(**_restore_params(meta["params"]))
        est.classes_ = np.asarray(meta["classes"])
        est.history_ = meta["history"]
        est.n_epochs_ = blob["step"]
        est.fit_seconds_ = 0.0
        est.encoder_config_ = est._encoder_config()
        est._rebuild_model_config(len(meta["classes"]))
        est.weights_ = {name: T.Tensor(arr, requires_grad=True)
                        for name, arr in blob["tensors"].items()}
        est._check_weights()
        return est

    def _rebuild_model_config(self, num_classes: int):
        self.model_config_ = FsLstmConfig(
            num_fast_cells=self.num_fast_cells, hidden_dim=self.hidden_dim,
            num_classes=num_classes, residual_dim=self.residual_dim,
            zoneout_prob=self.zoneout_prob, dropout_prob=self.dropout_prob,
            forget_bias_init=self.forget_bias_init)

    def _check_weights(self):
        for name in ("sp.conv0.w", "rgb.proj.w", "head.cls.w", "head.res.w"):
            if name not in self.weights_:
                raise ConfigError(f"checkpoint is missing tensor {name!r}")
        res = self.weights_["head.res.w"]
        if res.shape[1] != self.model_config_.residual_dim:
            raise ConfigError(
                f"checkpoint residual width {res.shape[1]} does not match "
                f"configured {self.model_config_.residual_dim}")


class FrameRelationClassifier(BaseEstimator, ClassifierMixin):
    """Clip classifier built from ordered multi-frame relations.

    A fixed number of representative frames is sampled from each clip;
    per-scale MLPs score ordered frame subsets and the scales sum into the
    class scores. Classification only; synthesis from this model falls back
    to the class-average spectrogram.
    """

    def __init__(self, max_scale=8, num_frames=8, hidden_units=256,
                 subsets_per_scale=8, segment_mode="full",
                 encoder_input=16, stage_channels=(16, 32), output_dim=64,
                 input_mode="spacetime", interpolation_factor=1,
                 frame_expansion="interpolate",
                 learning_rate=0.002, batch_size=12, epochs=200,
                 grad_clip=5.0, early_stop_patience=3, seed=0, verbose=0):
        self.max_scale = max_scale
        self.num_frames = num_frames
        self.hidden_units = hidden_units
        self.subsets_per_scale = subsets_per_scale
        self.segment_mode = segment_mode
        self.encoder_input = encoder_input
        self.stage_channels = stage_channels
        self.output_dim = output_dim
        self.input_mode = input_mode
        self.interpolation_factor = interpolation_factor
        self.frame_expansion = frame_expansion
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.grad_clip = grad_clip
        self.early_stop_patience = early_stop_patience
        self.seed = seed
        self.verbose = verbose

    @classmethod
    def from_config(cls, cfg, **overrides):
        params = dict(
            max_scale=cfg.max_scale, num_frames=cfg.relation_frames,
            hidden_units=cfg.hidden_units,
            subsets_per_scale=cfg.subsets_per_scale,
            segment_mode=cfg.segment_mode, encoder_input=cfg.encoder_input,
            stage_channels=tuple(cfg.stage_channels),
            output_dim=cfg.output_dim, input_mode=cfg.input_mode,
            interpolation_factor=cfg.interpolation_factor,
            frame_expansion=cfg.frame_expansion,
            learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
            epochs=cfg.epochs, grad_clip=cfg.grad_clip,
            early_stop_patience=cfg.early_stop_patience, seed=cfg.seed)
        params.update(overrides)
        return cls(**params)

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(input_size=(self.encoder_input,
                                         self.encoder_input),
                             stage_channels=tuple(self.stage_channels),
                             output_dim=self.output_dim)

    def _prepare(self, clips, enc_cfg):
        """Representative frame planes [r x 3 x H x W] plus RGB per clip."""
        out = []
        for seq in clips:
            seq = _expand_clip(seq, self.interpolation_factor,
                               self.frame_expansion)
            planes, rgb = clip_planes(seq, enc_cfg, self.input_mode)
            picks = representative_indices(planes.shape[0], self.num_frames,
                                           self.segment_mode)
            out.append((planes[picks], rgb))
        return out

    def _forward(self, weights, enc_cfg, t_cfg, prepared, ids):
        planes = np.stack([prepared[i][0] for i in ids])
        rgbs = np.stack([prepared[i][1] for i in ids])
        batch, r = planes.shape[0], planes.shape[1]
        flat = planes.reshape((batch * r,) + planes.shape[2:])
        sp_feats = encode_images(weights, enc_cfg, flat, "sp")
        rgb_feats = encode_images(weights, enc_cfg, rgbs, "rgb")
        tiled = T.take_rows(rgb_feats, np.repeat(np.arange(batch), r))
        feats = T.concat([sp_feats, tiled], axis=1)
        return trn_scores_batch(weights, t_cfg, feats, batch, r)

    def fit(self, X, y):
        started = time.monotonic()
        clips = check_clips(X)
        classes, y_idx = check_labels(y, len(clips))
        seed = check_seed(self.seed)
        enc_cfg = self._encoder_config()
        t_cfg = TrnConfig(max_scale=self.max_scale,
                          num_frames=self.num_frames,
                          hidden_units=self.hidden_units,
                          num_classes=len(classes),
                          subsets_per_scale=self.subsets_per_scale,
                          subset_seed=seed)
        prepared = self._prepare(clips, enc_cfg)
        weights = init_frame_encoder(enc_cfg, seed)
        weights.update(init_trn_params(t_cfg, enc_cfg.feature_dim, seed))
        opt = T.Adam(list(weights.values()), lr=self.learning_rate)
        groups = _group_by_length(prepared)

        history = []
        streak = 0
        for epoch in range(self.epochs):
            correct = 0
            loss_sum = 0.0
            for ids in _epoch_batches(groups, self.batch_size, seed, epoch):
                scores = self._forward(weights, enc_cfg, t_cfg, prepared, ids)
                loss = T.cross_entropy(scores, y_idx[ids])
                opt.zero_grad()
                T.backward(loss, free_graph=True)
                T.clip_gradients(opt.params, self.grad_clip)
                opt.step()
                loss_sum += loss.item() * len(ids)
                correct += int(np.sum(np.argmax(scores.data, axis=1)
                                      == y_idx[ids]))
            acc = correct / len(clips)
            history.append({"epoch": epoch,
                            "loss": loss_sum / len(clips),
                            "accuracy": acc})
            if self.verbose:
                print(f"epoch {epoch}: loss {loss_sum / len(clips):.4f} "
                      f"acc {acc:.3f}")
            streak = streak + 1 if correct == len(clips) else 0
            if streak >= self.early_stop_patience:
                break

        self.classes_ = np.asarray(classes)
        self.weights_ = weights
        self.encoder_config_ = enc_cfg
        self.model_config_ = t_cfg
        self.history_ = history
        self.n_epochs_ = len(history)
        self.fit_seconds_ = time.monotonic() - started
        return self

    def _eval_scores(self, X):
        check_is_fitted(self)
        clips = check_clips(X)
        prepared = self._prepare(clips, self.encoder_config_)
        scores = np.zeros((len(clips), len(self.classes_)))
        for start in range(0, len(clips), self.batch_size):
            chunk = list(range(start, min(start + self.batch_size,
                                          len(clips))))
            out = self._forward(self.weights_, self.encoder_config_,
                                self.model_config_, prepared, chunk)
            scores[chunk] = out.data
        return scores

    def predict_proba(self, X):
        scores = self._eval_scores(X)
        shifted = scores - scores.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self._eval_scores(X)
        return self.classes_[np.argmax(scores, axis=1)]

    # persistence -----------------------------------------------------------

    _kind = "trn"

    def save(self, path):
        check_is_fitted(self)
        meta = {"estimator": type(self).__name__,
                "params": _jsonable_params(self.get_params()),
                "classes": [str(c) for c in self.classes_],
                "history": self.history_}
        tensors = {name: t.data for name, t in self.weights_.items()}
        checkpoint_save(path, tensors, json.dumps(meta, sort_keys=True),
                        seed=check_seed(self.seed), step=self.n_epochs_,
                        kind=self._kind)

    @classmethod
    def load(cls, path):
        blob = checkpoint_load(path)
        if blob["kind"] != cls._kind:
            raise ConfigError(
                f"checkpoint holds a {blob['kind']!r} model, expected "
                f"{cls._kind!r}")
        try:
            meta = json.loads(blob["config_text"])
        except json.JSONDecodeError as exc:
            raise CodecError(f"bad checkpoint metadata: {exc}") from exc
        est = cls(**_restore_params(meta["params"]))
        est.classes_ = np.asarray(meta["classes"])
        est.history_ = meta["history"]
        est.n_epochs_ = blob["step"]
        est.fit_seconds_ = 0.0
        est.encoder_config_ = est._encoder_config()
        est.model_config_ = TrnConfig(
            max_scale=est.max_scale, num_frames=est.num_frames,
            hidden_units=est.hidden_units, num_classes=len(meta["classes"]),
            subsets_per_scale=est.subsets_per_scale, subset_seed=est.seed)
        est.weights_ = {name: T.Tensor(arr, requires_grad=True)
                        for name, arr in blob["tensors"].items()}
        return est


def load_classifier(path):
    """Open a checkpoint of either model kind."""
    kind = checkpoint_load(path)["kind"]
    for cls in (FrameSequenceClassifier, FrameRelationClassifier):
        if kind == cls._kind:
            return cls.load(path)
    raise ConfigError(f"unknown checkpoint kind {kind!r}")
