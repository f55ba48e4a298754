"""Dense tensors with reverse-mode differentiation and the Adam optimizer.

All trainable modules build on this. Tensors carry float64 data, an optional
gradient buffer, and closure-based backward rules; calling
:func:`backward` on a scalar loss topologically sorts the graph and
accumulates gradients into every ancestor that requires them. The op
surface is intentionally small: broadcasting is limited to bias addition
on the last axis, and anything fancier (convolution, pooling, losses) is
a fused op with a hand-written derivative.

Every op verifies its output is finite and raises :class:`NumericFault`
otherwise, so NaN poisoning surfaces at the op that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericFault, ShapeError
from .rng import stream as _rng_stream


class Tensor:
    """A dense float64 array node in a reverse-mode differentiation graph.

    Args:
        data: array-like of real values.
        requires_grad: when True, :func:`backward` populates ``grad``.

    Tensors produced by ops record their parents and a backward closure;
    tensors whose ancestors all have ``requires_grad=False`` are constant
    folded (no graph is kept for them). Data is treated as immutable after
    creation.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents",
                 "_backward", "_freed")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NumericFault(f"non-finite values produced by op {op!r}")
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = ()
        self._backward = None
        self._freed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgument(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), op="detach")

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # arithmetic sugar; constants fold into the op, tensors go through
    # the module-level functions

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def narrow(self, axis, start, length):
        return narrow(self, axis, start, length)


def _result(data, op, parents, make_backward):
    """Wrap an op output, attaching the backward closure only if needed."""
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = make_backward(out)
    return out


def _unreduce(grad, shape, axis):
    """Spread a reduced gradient back over `shape` along `axis`."""
    if axis is None:
        return np.broadcast_to(grad, shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % len(shape) for a in axes)
    return np.broadcast_to(np.expand_dims(grad, axes), shape)


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, tuple):
        return tuple(a % ndim for a in axis)
    return axis % ndim


# ---------------------------------------------------------------------------
# linear algebra and elementwise ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul operands not conformable", a.shape, b.shape)
    data = a.data @ b.data

    def make(out):
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += g @ b.data.T
            if b.requires_grad:
                b.grad += a.data.T @ g

        return _bw

    return _result(data, "matmul", (a, b), make)


def add(a: Tensor, b) -> Tensor:
    """Elementwise add; also accepts a scalar or a last-axis bias vector."""
    if isinstance(b, (int, float)):
        def make(out):
            def _bw():
                a.grad += out.grad

            return _bw

        return _result(a.data + float(b), "add", (a,), make)

    if a.shape == b.shape:
        def make(out):
            def _bw():
                g = out.grad
                if a.requires_grad:
                    a.grad += g
                if b.requires_grad:
                    b.grad += g

            return _bw

        return _result(a.data + b.data, "add", (a, b), make)

    if b.ndim == 1 and a.ndim > 1 and a.shape[-1] == b.shape[0]:
        def make(out):
            def _bw():
                g = out.grad
                if a.requires_grad:
                    a.grad += g
                if b.requires_grad:
                    b.grad += g.reshape(-1, b.shape[0]).sum(axis=0)

            return _bw

        return _result(a.data + b.data, "bias_add", (a, b), make)

    raise ShapeError("add operands not compatible", a.shape, b.shape)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("sub operands differ", a.shape, b.shape)

    def make(out):
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad -= g

        return _bw

    return _result(a.data - b.data, "sub", (a, b), make)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product of same-shape tensors, or scaling by a constant."""
    if isinstance(b, (int, float)):
        c = float(b)

        def make(out):
            def _bw():
                a.grad += out.grad * c

            return _bw

        return _result(a.data * c, "scale", (a,), make)

    if a.shape != b.shape:
        raise ShapeError("mul operands differ", a.shape, b.shape)

    def make(out):
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += g * b.data
            if b.requires_grad:
                b.grad += g * a.data

        return _bw

    return _result(a.data * b.data, "mul", (a, b), make)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise InvalidArgument("concat of zero tensors")
    axis = _normalize_axis(axis, parts[0].ndim)
    base = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError("concat parts differ off-axis", parts[0].shape, p.shape)
    data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + [p.shape[axis] for p in parts])

    def make(out):
        def _bw():
            g = out.grad
            index = [slice(None)] * g.ndim
            for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    index[axis] = slice(start, stop)
                    p.grad += g[tuple(index)]

        return _bw

    return _result(data, "concat", tuple(parts), make)


def stack(parts) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    parts = list(parts)
    if not parts:
        raise InvalidArgument("stack of zero tensors")
    for p in parts[1:]:
        if p.shape != parts[0].shape:
            raise ShapeError("stack parts differ", parts[0].shape, p.shape)
    data = np.stack([p.data for p in parts])

    def make(out):
        def _bw():
            g = out.grad
            for i, p in enumerate(parts):
                if p.requires_grad:
                    p.grad += g[i]

        return _bw

    return _result(data, "stack", tuple(parts), make)


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis` (alias: slice)."""
    axis = _normalize_axis(axis, t.ndim)
    if length < 1 or start < 0 or start + length > t.shape[axis]:
        raise InvalidArgument(
            f"slice [{start}:{start + length}] out of range for axis {axis} "
            f"of shape {t.shape}"
        )
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def make(out):
        def _bw():
            t.grad[index] += out.grad

        return _bw

    return _result(t.data[index].copy(), "slice", (t,), make)


def take_rows(t: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; indices may repeat (grads accumulate)."""
    if t.ndim != 2:
        raise ShapeError("take_rows needs a 2-D tensor", t.shape, ("rows", "cols"))
    indices = np.asarray(indices, dtype=np.intp).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= t.shape[0]):
        raise InvalidArgument(f"row index out of range for {t.shape[0]} rows")

    def make(out):
        def _bw():
            np.add.at(t.grad, indices, out.grad)

        return _bw

    return _result(t.data[indices], "take_rows", (t,), make)


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != t.data.size:
        raise ShapeError("reshape changes element count", t.shape, shape)

    def make(out):
        def _bw():
            t.grad += out.grad.reshape(t.shape)

        return _bw

    return _result(t.data.reshape(shape), "reshape", (t,), make)


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def make(out):
        def _bw():
            t.grad += out.grad * data * (1.0 - data)

        return _bw

    return _result(data, "sigmoid", (t,), make)


def tanh(t: Tensor) -> Tensor:
    data = np.tanh(t.data)

    def make(out):
        def _bw():
            t.grad += out.grad * (1.0 - data * data)

        return _bw

    return _result(data, "tanh", (t,), make)


def relu(t: Tensor) -> Tensor:
    data = np.maximum(t.data, 0.0)

    def make(out):
        def _bw():
            t.grad += out.grad * (t.data > 0)

        return _bw

    return _result(data, "relu", (t,), make)


def softmax(t: Tensor) -> Tensor:
    """Softmax over the last axis (numerically stabilized)."""
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def make(out):
        def _bw():
            g = out.grad
            dot = (g * data).sum(axis=-1, keepdims=True)
            t.grad += data * (g - dot)

        return _bw

    return _result(data, "softmax", (t,), make)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then gain/bias."""
    n = t.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm gain/bias mismatch", t.shape, gain.shape)
    mu = t.data.mean(axis=-1, keepdims=True)
    var = t.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (t.data - mu) * inv
    data = xhat * gain.data + bias.data

    def make(out):
        def _bw():
            g = out.grad
            if gain.requires_grad:
                gain.grad += (g * xhat).reshape(-1, n).sum(axis=0)
            if bias.requires_grad:
                bias.grad += g.reshape(-1, n).sum(axis=0)
            if t.requires_grad:
                dxhat = g * gain.data
                m1 = dxhat.mean(axis=-1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
                t.grad += inv * (dxhat - m1 - xhat * m2)

        return _bw

    return _result(data, "layer_norm", (t, gain, bias), make)


def log(t: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(t.data)
    # the finite check in Tensor() rejects log of non-positive values

    def make(out):
        def _bw():
            t.grad += out.grad / t.data

        return _bw

    return _result(data, "log", (t,), make)


def sqrt(t: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        data = np.sqrt(t.data)

    def make(out):
        def _bw():
            t.grad += out.grad * 0.5 / data

        return _bw

    return _result(data, "sqrt", (t,), make)


def square(t: Tensor) -> Tensor:
    def make(out):
        def _bw():
            t.grad += out.grad * 2.0 * t.data

        return _bw

    return _result(t.data * t.data, "square", (t,), make)


def l2_norm_rows(t: Tensor) -> Tensor:
    """Euclidean norm of each row of a 2-D tensor."""
    if t.ndim != 2:
        raise ShapeError("l2_norm_rows needs a 2-D tensor", t.shape, ("rows", "cols"))
    norms = np.sqrt((t.data * t.data).sum(axis=1))

    def make(out):
        def _bw():
            t.grad += (out.grad / norms)[:, None] * t.data

        return _bw

    return _result(norms, "l2_norm_rows", (t,), make)


def tensor_sum(t: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, t.ndim)
    data = t.data.sum(axis=axis)

    def make(out):
        def _bw():
            t.grad += _unreduce(out.grad, t.shape, axis)

        return _bw

    return _result(data, "sum", (t,), make)


def tensor_mean(t: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, t.ndim)
    data = t.data.mean(axis=axis)
    count = t.data.size if axis is None else (
        int(np.prod([t.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]))
    )

    def make(out):
        def _bw():
            t.grad += _unreduce(out.grad, t.shape, axis) / count

        return _bw

    return _result(data, "mean", (t,), make)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer `labels` under row softmax."""
    if logits.ndim != 2:
        raise ShapeError("cross_entropy needs [batch x classes] logits",
                         logits.shape, ("batch", "classes"))
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    rows, classes = logits.shape
    if labels.shape[0] != rows:
        raise ShapeError("label count differs from logit rows",
                         logits.shape, labels.shape)
    if labels.min() < 0 or labels.max() >= classes:
        raise InvalidArgument(f"labels outside [0, {classes})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loglik = shifted[np.arange(rows), labels] - logz
    data = -loglik.mean()

    def make(out):
        def _bw():
            p = np.exp(shifted - logz[:, None])
            p[np.arange(rows), labels] -= 1.0
            logits.grad += out.grad * p / rows

        return _bw

    return _result(data, "cross_entropy", (logits,), make)


# ---------------------------------------------------------------------------
# fused image ops (the feature encoder is the only consumer)


def _im2col3x3(padded):
    # [B, C, H+2, W+2] -> [B*H*W, C*9] patch matrix
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(-1, padded.shape[1] * 9)


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 3x3 convolution of [B x C x H x W] with [F x C*9] weights."""
    if x.ndim != 4:
        raise ShapeError("conv3x3 input must be [B x C x H x W]", x.shape, (4,))
    batch, chans, height, width = x.shape
    if w.ndim != 2 or w.shape[1] != chans * 9:
        raise ShapeError("conv3x3 weight mismatch", w.shape, (w.shape[0], chans * 9))
    filters = w.shape[0]
    if b.shape != (filters,):
        raise ShapeError("conv3x3 bias mismatch", b.shape, (filters,))
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col3x3(padded)
    data = (cols @ w.data.T + b.data).reshape(
        batch, height, width, filters
    ).transpose(0, 3, 1, 2)

    def make(out):
        def _bw():
            g = out.grad.transpose(0, 2, 3, 1).reshape(-1, filters)
            if b.requires_grad:
                b.grad += g.sum(axis=0)
            if w.requires_grad:
                # patches are recomputed rather than stored; the padded
                # input is tiny compared to the column matrix
                w.grad += g.T @ _im2col3x3(padded)
            if x.requires_grad:
                dcols = (g @ w.data).reshape(batch, height, width, chans, 3, 3)
                dpad = np.zeros_like(padded)
                for di in range(3):
                    for dj in range(3):
                        dpad[:, :, di:di + height, dj:dj + width] += (
                            dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                        )
                x.grad += dpad[:, :, 1:-1, 1:-1]

        return _bw

    return _result(data, "conv3x3", (x, w, b), make)


def avg_pool2x2(x: Tensor) -> Tensor:
    """2x downsample of [B x C x H x W] by averaging 2x2 blocks."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError("avg_pool2x2 needs even [B x C x H x W]", x.shape, (4,))
    batch, chans, height, width = x.shape
    blocks = x.data.reshape(batch, chans, height // 2, 2, width // 2, 2)
    data = blocks.mean(axis=(3, 5))

    def make(out):
        def _bw():
            g = np.repeat(np.repeat(out.grad, 2, axis=2), 2, axis=3)
            x.grad += g * 0.25

        return _bw

    return _result(data, "avg_pool2x2", (x,), make)


# ---------------------------------------------------------------------------
# deterministic stochastic masks


def dropout_mask(shape, drop_prob: float, seed: int, *tags) -> Tensor:
    """Inverted-scale dropout mask; identical for identical (seed, tags).

    Entries are 0 with probability `drop_prob` and 1/(1-drop_prob)
    otherwise, so the masked product is unbiased.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise InvalidArgument(f"drop_prob {drop_prob} outside [0, 1)")
    if drop_prob == 0.0:
        return Tensor(np.ones(shape), op="dropout_mask")
    gen = _rng_stream(seed, "dropout", *map(str, tags))
    keep = gen.random(shape) >= drop_prob
    return Tensor(keep / (1.0 - drop_prob), op="dropout_mask")


def bernoulli_mask(shape, prob_one: float, seed: int, *tags) -> Tensor:
    """Unscaled 0/1 mask with P(1) = prob_one; used for zoneout carries."""
    if not 0.0 <= prob_one <= 1.0:
        raise InvalidArgument(f"prob_one {prob_one} outside [0, 1]")
    gen = _rng_stream(seed, "bernoulli", *map(str, tags))
    return Tensor((gen.random(shape) < prob_one).astype(np.float64),
                  op="bernoulli_mask")


def apply_dropout(t: Tensor, drop_prob: float, seed: int, *tags) -> Tensor:
    if drop_prob == 0.0:
        return t
    return mul(t, dropout_mask(t.shape, drop_prob, seed, *tags))


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor, free_graph: bool = False):
    """Populate grads of every requires_grad ancestor of a scalar loss.

    Gradients of reused tensors accumulate. Existing grad buffers of the
    reachable subgraph are reset at entry, so each backward call reports
    exactly the gradients of its own graph.

    Every op node participates in a reference cycle with its backward
    closure, so released graphs normally wait for the cycle collector;
    with ``free_graph=True`` the closures, parent links, and interior grad
    buffers are dropped after the pass, letting plain reference counting
    reclaim the graph immediately. The loss cannot be differentiated a
    second time afterwards. Training loops that build a fresh graph per
    step should pass True; the default keeps the graph reusable.
    """
    if loss.data.size != 1:
        raise InvalidArgument(f"backward needs a scalar loss, got {loss.shape}")
    if loss._freed:
        raise InvalidArgument("backward on a freed graph")
    topo = []
    seen = set()
    pending = [(loss, False)]
    while pending:
        node, expanded = pending.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        pending.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                pending.append((parent, False))
    for node in topo:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
    if free_graph:
        for node in topo:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node.grad = None
                node._freed = True


# ---------------------------------------------------------------------------
# Adam


def adam_step(params, grads, state, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on `params` data.

    `state` is a dict holding the step counter and first/second moment
    arrays; pass the same dict every step. An empty dict initializes.
    """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise InvalidArgument("params and grads differ in length")
    if not state:
        state["step"] = 0
        state["m"] = [np.zeros_like(p.data) for p in params]
        state["v"] = [np.zeros_like(p.data) for p in params]
    if len(state["m"]) != len(params):
        raise InvalidArgument("optimizer state does not match parameter count")
    state["step"] += 1
    step = state["step"]
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError("gradient shape mismatch", p.data.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NumericFault("non-finite gradient reached the optimizer")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_gradients(params, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most `max_norm`.

    Returns the pre-clip norm. Parameters without a gradient contribute
    nothing. A non-positive `max_norm` disables clipping.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Stateful wrapper around :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {}

    def step(self):
        grads = []
        for p in self.params:
            if p.grad is None:
                grads.append(np.zeros_like(p.data))
            else:
                grads.append(p.grad)
        adam_step(self.params, grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# gradient checking


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(fn, inputs, epsilon: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic grads of scalar fn(*inputs) to central differences.

    Relative error per element is |a - n| / max(1, |a|, |n|); the report
    carries the maximum over all elements of all inputs. `fn` must be a
    pure, deterministic function of the input tensors (stochastic masks
    must be keyed by fixed seeds).
    """
    inputs = list(inputs)
    for t in inputs:
        if not t.requires_grad:
            raise InvalidArgument("grad_check inputs must require gradients")
    out = fn(*inputs)
    if out.data.size != 1:
        raise InvalidArgument("grad_check needs a scalar-valued function")
    backward(out)
    analytic = [t.grad.copy() for t in inputs]

    worst = 0.0
    for t, a in zip(inputs, analytic):
        for idx in range(t.data.size):
            keep = t.data.flat[idx]
            t.data.flat[idx] = keep + epsilon
            f_plus = fn(*inputs).item()
            t.data.flat[idx] = keep - epsilon
            f_minus = fn(*inputs).item()
            t.data.flat[idx] = keep
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            ref = a.flat[idx]
            rel = abs(ref - numeric) / max(1.0, abs(ref), abs(numeric))
            worst = max(worst, rel)
    return GradCheckReport(worst, tol)


# ---------------------------------------------------------------------------
# op registry: one seedable grad-check case per registered op


def _rand(shape, gen, requires_grad=True):
    return Tensor(gen.normal(size=shape), requires_grad=requires_grad)


def _projected(expr_fn, out_shape, gen):
    """Wrap an op so the check sees a scalar with a random cotangent."""
    proj = Tensor(gen.normal(size=out_shape))

    def fn(*inputs):
        return mul(expr_fn(*inputs), proj).sum()

    return fn


def _case_matmul(gen):
    return _projected(matmul, (3, 5), gen), [_rand((3, 4), gen), _rand((4, 5), gen)]


def _case_add(gen):
    return _projected(add, (3, 4), gen), [_rand((3, 4), gen), _rand((3, 4), gen)]


def _case_bias_add(gen):
    return _projected(add, (3, 4), gen), [_rand((3, 4), gen), _rand((4,), gen)]


def _case_sub(gen):
    return _projected(sub, (3, 4), gen), [_rand((3, 4), gen), _rand((3, 4), gen)]


def _case_mul(gen):
    return _projected(mul, (3, 4), gen), [_rand((3, 4), gen), _rand((3, 4), gen)]


def _case_scale(gen):
    return _projected(lambda t: mul(t, 2.5), (3, 4), gen), [_rand((3, 4), gen)]


def _case_concat(gen):
    return (
        _projected(lambda a, b: concat([a, b], axis=1), (2, 7), gen),
        [_rand((2, 3), gen), _rand((2, 4), gen)],
    )


def _case_stack(gen):
    return (
        _projected(lambda a, b, c: stack([a, b, c]), (3, 2, 3), gen),
        [_rand((2, 3), gen) for _ in range(3)],
    )


def _case_slice(gen):
    return (
        _projected(lambda t: narrow(t, 1, 1, 3), (4, 3), gen),
        [_rand((4, 5), gen)],
    )


def _case_reshape(gen):
    return _projected(lambda t: reshape(t, (2, 6)), (2, 6), gen), [_rand((3, 4), gen)]


def _case_take_rows(gen):
    indices = gen.integers(0, 4, size=6)
    return (
        _projected(lambda t: take_rows(t, indices), (6, 3), gen),
        [_rand((4, 3), gen)],
    )


def _case_sigmoid(gen):
    return _projected(sigmoid, (3, 4), gen), [_rand((3, 4), gen)]


def _case_tanh(gen):
    return _projected(tanh, (3, 4), gen), [_rand((3, 4), gen)]


def _case_relu(gen):
    t = _rand((3, 4), gen)
    # keep inputs away from the kink at zero
    t.data += 0.25 * np.sign(t.data)
    return _projected(relu, (3, 4), gen), [t]


def _case_softmax(gen):
    return _projected(softmax, (3, 5), gen), [_rand((3, 5), gen)]


def _case_layer_norm(gen):
    x = _rand((4, 6), gen)
    gain = Tensor(1.0 + 0.1 * gen.normal(size=6), requires_grad=True)
    bias = Tensor(0.1 * gen.normal(size=6), requires_grad=True)
    return _projected(layer_norm, (4, 6), gen), [x, gain, bias]


def _case_dropout(gen):
    seed = int(gen.integers(1 << 30))
    return (
        _projected(lambda t: apply_dropout(t, 0.3, seed, "case"), (4, 6), gen),
        [_rand((4, 6), gen)],
    )


def _case_sum(gen):
    return lambda t: tensor_sum(t), [_rand((3, 4), gen)]


def _case_sum_rows(gen):
    return _projected(lambda t: tensor_sum(t, axis=1), (3,), gen), [_rand((3, 4), gen)]


def _case_mean(gen):
    return lambda t: tensor_mean(t), [_rand((3, 4), gen)]


def _case_mean_axes(gen):
    return (
        _projected(lambda t: tensor_mean(t, axis=(2, 3)), (2, 3), gen),
        [_rand((2, 3, 4, 4), gen)],
    )


def _case_log(gen):
    t = Tensor(0.5 + np.abs(gen.normal(size=(3, 4))), requires_grad=True)
    return _projected(log, (3, 4), gen), [t]


def _case_sqrt(gen):
    t = Tensor(0.5 + np.abs(gen.normal(size=(3, 4))), requires_grad=True)
    return _projected(sqrt, (3, 4), gen), [t]


def _case_square(gen):
    return _projected(square, (3, 4), gen), [_rand((3, 4), gen)]


def _case_l2_norm_rows(gen):
    t = Tensor(0.5 + np.abs(gen.normal(size=(3, 4))), requires_grad=True)
    return _projected(l2_norm_rows, (3,), gen), [t]


def _case_cross_entropy(gen):
    labels = gen.integers(0, 6, size=4)
    return lambda t: cross_entropy(t, labels), [_rand((4, 6), gen)]


def _case_conv3x3(gen):
    x = _rand((2, 3, 5, 5), gen)
    w = Tensor(0.3 * gen.normal(size=(4, 27)), requires_grad=True)
    b = _rand((4,), gen)
    return _projected(conv3x3, (2, 4, 5, 5), gen), [x, w, b]


def _case_avg_pool2x2(gen):
    return _projected(avg_pool2x2, (2, 3, 2, 2), gen), [_rand((2, 3, 4, 4), gen)]


OP_CASES = {
    "matmul": _case_matmul,
    "add": _case_add,
    "bias_add": _case_bias_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "scale": _case_scale,
    "concat": _case_concat,
    "stack": _case_stack,
    "slice": _case_slice,
    "reshape": _case_reshape,
    "take_rows": _case_take_rows,
    "sigmoid": _case_sigmoid,
    "tanh": _case_tanh,
    "relu": _case_relu,
    "softmax": _case_softmax,
    "layer_norm": _case_layer_norm,
    "dropout": _case_dropout,
    "sum": _case_sum,
    "sum_rows": _case_sum_rows,
    "mean": _case_mean,
    "mean_axes": _case_mean_axes,
    "log": _case_log,
    "sqrt": _case_sqrt,
    "square": _case_square,
    "l2_norm_rows": _case_l2_norm_rows,
    "cross_entropy": _case_cross_entropy,
    "conv3x3": _case_conv3x3,
    "avg_pool2x2": _case_avg_pool2x2,
}


def registered_ops():
    return sorted(OP_CASES)


def op_case(name: str, seed: int):
    """Build (fn, inputs) for one registered op under one seed."""
    if name not in OP_CASES:
        raise InvalidArgument(f"unknown op {name!r}")
    gen = _rng_stream(seed, "gradcheck", name)
    return OP_CASES[name](gen)


# ---------------------------------------------------------------------------
# weight initialization


def orthogonal(rows: int, cols: int, gen) -> np.ndarray:
    """Orthogonal [rows x cols] matrix drawn from a Generator (QR of normal)."""
    n = max(rows, cols)
    q, r = np.linalg.qr(gen.normal(size=(n, n)))
    q = q * np.sign(np.diag(r))[None, :]
    return q[:rows, :cols].copy()
