"""Fast-Slow LSTM sequence model with dual class/residual heads.

One shared "fast" hidden/cell pair is updated sequentially by cells
L_1..L_N inside each timestep; a "slow" cell U keeps its own state across
timesteps and exchanges hidden states with the fast chain:

    L_1 consumes (fast state from the previous timestep, frame feature V_t),
    U consumes (its own previous state, L_1's fresh hidden),
    L_2 consumes (the fast state after L_1, U's fresh hidden),
    L_3..L_N update the fast state with no external input.

Two affine heads on the final fast hidden emit per-timestep class logits
and a per-timestep spectrogram residual row. Gates are layer normalized
individually; zoneout stochastically carries state across timesteps during
training and blends by expectation at eval time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import AlignmentError, ConfigError, InvalidArgument, ShapeError
from .rng import stream

GATES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class FsLstmConfig:
    num_fast_cells: int = 4
    hidden_dim: int = 96
    num_classes: int = 12
    residual_dim: int = 129
    zoneout_prob: float = 0.0
    dropout_prob: float = 0.0
    forget_bias_init: float = 1.0

    def __post_init__(self):
        if self.num_fast_cells < 2:
            raise ConfigError("at least 2 fast cells are required")
        if min(self.hidden_dim, self.num_classes, self.residual_dim) < 1:
            raise ConfigError("dims must be positive")
        if not 0.0 <= self.zoneout_prob <= 1.0:
            raise ConfigError("zoneout_prob outside [0, 1]")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ConfigError("dropout_prob outside [0, 1)")

    @property
    def cell_names(self) -> tuple[str, ...]:
        fast = tuple(f"L{i}" for i in range(1, self.num_fast_cells + 1))
        return fast + ("U",)


def _cell_input_dim(cell: str, config: FsLstmConfig, input_dim: int):
    """External-input width of a cell, or None for the inputless fast cells."""
    if cell == "L1":
        return input_dim
    if cell in ("L2", "U"):
        return config.hidden_dim
    return None


def init_fslstm_params(config: FsLstmConfig, input_dim: int, seed: int,
                       arch: str = "fslstm") -> dict:
    """Orthogonally initialized weights keyed by name.

    ``arch="simple"`` builds the ablation baseline: a single standard LSTM
    cell (L1) with the same hidden width and the same two heads.
    """
    if arch not in ("fslstm", "simple"):
        raise ConfigError(f"unknown architecture {arch!r}")
    hidden = config.hidden_dim
    cells = ("L1",) if arch == "simple" else config.cell_names
    params = {}
    for cell in cells:
        gen = stream(seed, "fslstm", cell)
        in_dim = _cell_input_dim(cell, config, input_dim)
        if in_dim is not None:
            params[f"cell.{cell}.wx"] = T.Tensor(
                T.orthogonal(in_dim, 4 * hidden, gen), requires_grad=True
            )
        params[f"cell.{cell}.wh"] = T.Tensor(
            T.orthogonal(hidden, 4 * hidden, gen), requires_grad=True
        )
        for gate in GATES:
            bias = config.forget_bias_init if gate == "f" else 0.0
            params[f"cell.{cell}.ln.{gate}.g"] = T.Tensor(
                np.ones(hidden), requires_grad=True
            )
            params[f"cell.{cell}.ln.{gate}.b"] = T.Tensor(
                np.full(hidden, bias, dtype=np.float64), requires_grad=True
            )
    gen = stream(seed, "fslstm", "heads")
    params["head.cls.w"] = T.Tensor(
        T.orthogonal(hidden, config.num_classes, gen), requires_grad=True
    )
    params["head.cls.b"] = T.Tensor(np.zeros(config.num_classes),
                                    requires_grad=True)
    params["head.res.w"] = T.Tensor(
        0.1 * T.orthogonal(hidden, config.residual_dim, gen), requires_grad=True
    )
    params["head.res.b"] = T.Tensor(np.zeros(config.residual_dim),
                                    requires_grad=True)
    return params


def _zoneout(new, prev, prob, mode, seed, tags):
    if prob == 0.0:
        return new
    if mode == "train":
        mask = T.bernoulli_mask(new.shape, prob, seed, "zoneout", *tags)
        keep = T.mul(mask, prev)
        inv = T.mul(T.add(T.mul(mask, -1.0), 1.0), new)
        return T.add(keep, inv)
    return T.add(T.mul(prev, prob), T.mul(new, 1.0 - prob))


def lstm_cell_step(weights, cell, config, prev_hidden, prev_cell,
                   cell_input=None, mode="eval", seed=0, tags=()):
    """One gate update of the named cell; returns (hidden, cell) tensors.

    States are [B x hidden]. The external input is optional; inputless
    cells run on the recurrent path alone. Each gate's preactivation is
    layer normalized with its own gain/bias before the nonlinearity, and
    zoneout is applied to both carried states.
    """
    hidden = config.hidden_dim
    if prev_hidden.shape != prev_cell.shape or prev_hidden.shape[-1] != hidden:
        raise ShapeError("state shape mismatch", prev_hidden.shape,
                         prev_cell.shape)
    z = T.matmul(prev_hidden, weights[f"cell.{cell}.wh"])
    if cell_input is not None:
        wx = weights.get(f"cell.{cell}.wx")
        if wx is None:
            raise ShapeError(f"cell {cell} takes no external input",
                             cell_input.shape, (0,))
        if cell_input.shape[-1] != wx.shape[0]:
            raise ShapeError("cell input width mismatch", cell_input.shape,
                             (cell_input.shape[0], wx.shape[0]))
        z = T.add(z, T.matmul(cell_input, wx))
    gates = {}
    for k, gate in enumerate(GATES):
        pre = T.narrow(z, 1, k * hidden, hidden)
        normed = T.layer_norm(pre, weights[f"cell.{cell}.ln.{gate}.g"],
                              weights[f"cell.{cell}.ln.{gate}.b"])
        gates[gate] = T.tanh(normed) if gate == "g" else T.sigmoid(normed)
    c_new = T.add(T.mul(gates["f"], prev_cell), T.mul(gates["i"], gates["g"]))
    h_new = T.mul(gates["o"], T.tanh(c_new))
    zp = config.zoneout_prob
    c_out = _zoneout(c_new, prev_cell, zp, mode, seed, tags + (cell, "c"))
    h_out = _zoneout(h_new, prev_hidden, zp, mode, seed, tags + (cell, "h"))
    return h_out, c_out


def _zero_state(batch: int, hidden: int):
    z = T.Tensor(np.zeros((batch, hidden)))
    return z, T.Tensor(np.zeros((batch, hidden)))


def fslstm_forward_batch(weights, config: FsLstmConfig, step_inputs,
                         mode: str = "eval", seed: int = 0,
                         arch: str = "fslstm"):
    """Run the network over a batch; returns per-timestep logit/residual lists.

    `step_inputs` is a list of [B x input_dim] tensors, one per timestep.
    Output lists hold [B x num_classes] and [B x residual_dim] tensors.
    """
    if not step_inputs:
        raise ShapeError("empty feature sequence", (0,), (1,))
    batch = step_inputs[0].shape[0]
    hidden = config.hidden_dim
    h_fast, c_fast = _zero_state(batch, hidden)
    h_slow, c_slow = _zero_state(batch, hidden)
    drop = config.dropout_prob if mode == "train" else 0.0
    logits, residuals = [], []
    for t, x in enumerate(step_inputs):
        x = T.apply_dropout(x, drop, seed, "vin", t)
        h_fast, c_fast = lstm_cell_step(weights, "L1", config, h_fast, c_fast,
                                        x, mode, seed, (t,))
        if arch == "fslstm":
            u_in = T.apply_dropout(h_fast, drop, seed, "uin", t)
            h_slow, c_slow = lstm_cell_step(weights, "U", config, h_slow,
                                            c_slow, u_in, mode, seed, (t,))
            l2_in = T.apply_dropout(h_slow, drop, seed, "l2in", t)
            h_fast, c_fast = lstm_cell_step(weights, "L2", config, h_fast,
                                            c_fast, l2_in, mode, seed, (t,))
            for i in range(3, config.num_fast_cells + 1):
                h_fast, c_fast = lstm_cell_step(weights, f"L{i}", config,
                                                h_fast, c_fast, None, mode,
                                                seed, (t,))
        logits.append(T.add(T.matmul(h_fast, weights["head.cls.w"]),
                            weights["head.cls.b"]))
        residuals.append(T.add(T.matmul(h_fast, weights["head.res.w"]),
                               weights["head.res.b"]))
    return logits, residuals


def fslstm_forward(features, config: FsLstmConfig, weights,
                   mode: str = "eval", seed: int = 0, arch: str = "fslstm"):
    """Single-clip forward: features [T x input_dim] -> ([T x C], [T x R])."""
    if not isinstance(features, T.Tensor):
        features = T.Tensor(features)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeError("features must be [T x input_dim]", features.shape,
                         ("T", "input_dim"))
    steps = [T.narrow(features, 0, t, 1) for t in range(features.shape[0])]
    logits, residuals = fslstm_forward_batch(weights, config, steps, mode,
                                             seed, arch)
    return (
        T.concat(logits, axis=0),
        T.concat(residuals, axis=0),
    )


def pooled_logits(class_logits: T.Tensor) -> T.Tensor:
    """Mean over timesteps, reshaped to one [1 x C] row for the loss."""
    pooled = T.tensor_mean(class_logits, axis=0)
    return T.reshape(pooled, (1, pooled.shape[0]))


def fslstm_loss(class_logits, residuals, true_class, true_spectrogram_sqrt,
                bank, lambda_residual: float = 1.0, alpha: float = 1.0):
    """Cross-entropy of the pooled logits plus the robust spectral term.

    The per-timestep residual rows are linearly re-timed to the target's
    frame count, added to the class's average base spectrogram, and scored
    with sum_t log(alpha + ||s_t - s'_t||^2). Everything stays inside the
    differentiation graph. `true_class` indexes the bank's class list.
    """
    from .synthesis import alignment_matrix

    if alpha <= 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    target = np.asarray(true_spectrogram_sqrt, dtype=np.float64)
    if target.ndim != 2 or target.shape[0] < 1:
        raise AlignmentError("target spectrogram must be [T x bins] with T >= 1")
    label = bank.class_names[true_class] if isinstance(true_class, (int,
                             np.integer)) else true_class
    base = bank.base_for(label)
    if base.shape != target.shape:
        raise AlignmentError(
            f"bank base frames {base.shape} do not match target {target.shape}"
        )
    if residuals.shape[1] != target.shape[1]:
        raise ShapeError("residual bin count mismatch", residuals.shape,
                         target.shape)
    index = (bank.class_names.index(label)
             if not isinstance(true_class, (int, np.integer)) else int(true_class))
    ce = T.cross_entropy(pooled_logits(class_logits), [index])
    align = T.Tensor(alignment_matrix(residuals.shape[0], target.shape[0]))
    s_pred = T.add(T.matmul(align, residuals), T.Tensor(base))
    row_sq = T.tensor_sum(T.square(T.sub(s_pred, T.Tensor(target))), axis=1)
    robust = T.tensor_sum(T.log(T.add(row_sq, float(alpha))))
    return T.add(ce, T.mul(robust, float(lambda_residual)))
