"""Reverse-mode autodiff over dense arrays, sized for the U-Net family.

A Tensor wraps a float32/float64 ndarray plus an optional gradient. Every
operation records its parents, a backward rule, and a forward replay rule,
so a finished graph can be differentiated once (`backward`) or re-executed
node by node (`replay_forward`) for verification.

Gradient semantics: `backward(loss)` clears the gradients of every tensor
reachable from `loss`, then accumulates contributions additively — a tensor
consumed by k operations receives the sum of k partials. Graphs are
single-use: a second backward through the same nodes raises GraphError.
"""

from __future__ import annotations

import numpy as np

from . import interp
from . import kernels
from .errors import GraphError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    __slots__ = (
        "data",
        "requires_grad",
        "grad",
        "_parents",
        "_backward_fn",
        "_replay_fn",
        "_op",
        "_consumed",
    )

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None and arr.dtype != np.dtype(dtype):
            arr = arr.astype(dtype)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._replay_fn = None
        self._op = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, severed from the graph, never requiring grad."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


def _result(op, data, parents, backward_fn, replay_fn):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    out._parents = tuple(parents)
    out._op = op
    out._backward_fn = backward_fn
    out._replay_fn = replay_fn
    return out


def _require_4d(name, t):
    if t.data.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (N,C,H,W), got shape {t.data.shape}")


def _toposort(root: Tensor):
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order  # parents precede consumers


# ---------------------------------------------------------------------------
# convolution family
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with exact output-size arithmetic.

    weight is (Cout, Cin, Kh, Kw). The output size along each spatial axis,
    (size + 2*padding - kernel) / stride + 1, must be a positive integer.
    """
    _require_4d("conv2d input", x)
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-D, got {weight.data.shape}")
    n, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d channel mismatch: input shape {x.data.shape} has {cin} channels, "
            f"weight shape {weight.data.shape} expects {cin_w}"
        )
    if stride < 1:
        raise ShapeError(f"conv2d stride must be positive, got {stride}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be non-negative, got {padding}")
    for size, k, axis in ((h, kh, "height"), (w, kw, "width")):
        num = size + 2 * padding - k
        if num < 0 or num % stride != 0:
            raise ShapeError(
                f"conv2d {axis}: ({size} + 2*{padding} - {k}) / {stride} + 1 "
                f"is not a positive integer"
            )
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(
            f"conv2d bias shape {bias.data.shape} does not match Cout={cout}"
        )

    y = kernels.conv2d_forward(x.data, weight.data, stride, padding)
    if bias is not None:
        y += bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(gy):
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.conv2d_input_grad(gy, weight.data, stride, padding, h, w)
        if weight.requires_grad:
            gw = kernels.conv2d_weight_grad(x.data, gy, stride, padding, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = gy.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    def replay_fn(*datas):
        out = kernels.conv2d_forward(datas[0], datas[1], stride, padding)
        if len(datas) == 3:
            out += datas[2][None, :, None, None]
        return out

    return _result("conv2d", y, parents, backward_fn, replay_fn)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution: the adjoint of conv2d with the same weight.

    weight is (Cin, Cout, Kh, Kw); output size is (in-1)*stride - 2*padding
    + kernel along each spatial axis.
    """
    _require_4d("conv_transpose2d input", x)
    if weight.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d weight must be 4-D, got {weight.data.shape}")
    n, cin, h, w = x.data.shape
    cin_w, cout, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input shape {x.data.shape} has {cin} "
            f"channels, weight shape {weight.data.shape} expects {cin_w}"
        )
    if stride < 1:
        raise ShapeError(f"conv_transpose2d stride must be positive, got {stride}")
    hout = (h - 1) * stride - 2 * padding + kh
    wout = (w - 1) * stride - 2 * padding + kw
    if hout < 1 or wout < 1:
        raise ShapeError(
            f"conv_transpose2d output ({h}-1)*{stride} - 2*{padding} + {kh} = {hout} "
            f"(and width {wout}) must be >= 1"
        )
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(
            f"conv_transpose2d bias shape {bias.data.shape} does not match Cout={cout}"
        )

    # forward of the transpose == input-gradient of the plain conv
    y = kernels.conv2d_input_grad(x.data, weight.data, stride, padding, hout, wout)
    if bias is not None:
        y += bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(gy):
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.conv2d_forward(gy, weight.data, stride, padding)
        if weight.requires_grad:
            gw = kernels.conv2d_weight_grad(gy, x.data, stride, padding, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = gy.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    def replay_fn(*datas):
        out = kernels.conv2d_input_grad(datas[0], datas[1], stride, padding, hout, wout)
        if len(datas) == 3:
            out += datas[2][None, :, None, None]
        return out

    return _result("conv_transpose2d", y, parents, backward_fn, replay_fn)


# ---------------------------------------------------------------------------
# batch norm
# ---------------------------------------------------------------------------

class RunningStats:
    """Per-channel running mean/variance for batch norm (eval mode)."""

    __slots__ = ("mean", "var", "initialized")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.initialized = False


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
                 train: bool, eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by biased batch statistics and folds them into the
    running averages; eval mode uses the stored statistics. The backward
    rule differentiates through the batch statistics.
    """
    _require_4d("batch_norm2d input", x)
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"batch_norm2d gamma/beta shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match {c} channels"
        )
    m = n * h * w
    if train and m == 1:
        raise ShapeError("batch_norm2d train mode needs N*H*W > 1 (variance undefined)")
    if not train and not stats.initialized:
        raise GraphError("batch_norm2d eval mode before running stats were initialized")

    axes = (0, 2, 3)
    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        stats.mean = ((1.0 - momentum) * stats.mean + momentum * mu).astype(stats.mean.dtype)
        stats.var = ((1.0 - momentum) * stats.var + momentum * var).astype(stats.var.dtype)
        stats.initialized = True
    else:
        mu = stats.mean.astype(x.data.dtype)
        var = stats.var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward_fn(gy):
        gxv = ggamma = gbeta = None
        if beta.requires_grad:
            gbeta = gy.sum(axis=axes)
        if gamma.requires_grad:
            ggamma = (gy * xhat).sum(axis=axes)
        if x.requires_grad:
            gxhat = gy * gamma.data[None, :, None, None]
            if train:
                mean_g = gxhat.mean(axis=axes, keepdims=True)
                mean_gx = (gxhat * xhat).mean(axis=axes, keepdims=True)
                gxv = inv_std[None, :, None, None] * (gxhat - mean_g - xhat * mean_gx)
            else:
                gxv = gxhat * inv_std[None, :, None, None]
        return gxv, ggamma, gbeta

    def replay_fn(xd, gd, bd):
        if train:
            mu_r = xd.mean(axis=axes)
            var_r = xd.var(axis=axes)
        else:
            mu_r, var_r = mu, var
        inv = 1.0 / np.sqrt(var_r + eps)
        return gd[None, :, None, None] * (xd - mu_r[None, :, None, None]) * inv[None, :, None, None] \
            + bd[None, :, None, None]

    return _result("batch_norm2d", y, (x, gamma, beta), backward_fn, replay_fn)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ShapeError(f"leaky_relu slope must be in (0, 1), got {slope}")
    pos = x.data > 0
    y = np.where(pos, x.data, x.data * x.data.dtype.type(slope))

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (np.where(pos, gy, gy * gy.dtype.type(slope)),)

    return _result("leaky_relu", y, (x,), backward_fn,
                   lambda d: np.where(d > 0, d, d * d.dtype.type(slope)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (gy * (1.0 - y * y),)

    return _result("tanh", y, (x,), backward_fn, lambda d: np.tanh(d))


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (gy * y * (1.0 - y),)

    return _result("sigmoid", y, (x,), backward_fn, lambda d: 1.0 / (1.0 + np.exp(-d)))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def backward_fn(gy):
        return (gy if a.requires_grad else None, gy if b.requires_grad else None)

    return _result("add", a.data + b.data, (a, b), backward_fn, lambda da, db: da + db)


def shift(x: Tensor, c: float) -> Tensor:
    """x + scalar constant."""
    cval = x.data.dtype.type(c)

    def backward_fn(gy):
        return (gy if x.requires_grad else None,)

    return _result("shift", x.data + cval, (x,), backward_fn, lambda d: d + cval)


def scale(x: Tensor, s: float) -> Tensor:
    """x * scalar constant."""
    sval = x.data.dtype.type(s)

    def backward_fn(gy):
        return (gy * sval if x.requires_grad else None,)

    return _result("scale", x.data * sval, (x,), backward_fn, lambda d: d * sval)


def square(x: Tensor) -> Tensor:
    def backward_fn(gy):
        return (gy * 2.0 * x.data if x.requires_grad else None,)

    return _result("square", x.data * x.data, (x,), backward_fn, lambda d: d * d)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_4d("concat_channels a", a)
    _require_4d("concat_channels b", b)
    na, ca, ha, wa = a.data.shape
    nb, cb, hb, wb = b.data.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(
            f"concat_channels batch/spatial mismatch: {a.data.shape} vs {b.data.shape}"
        )
    y = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(gy):
        ga = gy[:, :ca] if a.requires_grad else None
        gb = gy[:, ca:] if b.requires_grad else None
        return ga, gb

    return _result("concat_channels", y, (a, b), backward_fn,
                   lambda da, db: np.concatenate([da, db], axis=1))


def resize(x: Tensor, target_h: int, target_w: int, method: str = "bilinear") -> Tensor:
    """Spatial resample to (target_h, target_w).

    bilinear is differentiable (half-pixel centers); nearest is not and is
    rejected on inputs that require grad.
    """
    _require_4d("resize input", x)
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"resize target must be >= 1, got ({target_h}, {target_w})")
    if method == "nearest":
        if x.requires_grad:
            raise GraphError("nearest resize is not differentiable; input requires grad")
        y = interp.nearest_resize(x.data, target_h, target_w)
        return _result("resize_nearest", y, (x,), lambda gy: (None,),
                       lambda d: interp.nearest_resize(d, target_h, target_w))
    if method != "bilinear":
        raise ShapeError(f"resize method must be 'bilinear' or 'nearest', got {method!r}")
    h, w = x.data.shape[2], x.data.shape[3]
    y = interp.bilinear_resize(x.data, target_h, target_w)

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (interp.bilinear_resize_grad(gy, h, w),)

    return _result("resize_bilinear", y, (x,), backward_fn,
                   lambda d: interp.bilinear_resize(d, target_h, target_w))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def mean(x: Tensor) -> Tensor:
    numel = x.data.size
    y = x.data.mean()

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (np.full_like(x.data, gy / numel),)

    return _result("mean", y, (x,), backward_fn, lambda d: d.mean())


def tensor_sum(x: Tensor) -> Tensor:
    y = x.data.sum()

    def backward_fn(gy):
        if not x.requires_grad:
            return (None,)
        return (np.full_like(x.data, gy),)

    return _result("sum", y, (x,), backward_fn, lambda d: d.sum())


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_distance shape mismatch: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    numel = diff.size
    y = np.abs(diff).mean()

    def backward_fn(gy):
        s = np.sign(diff) * (gy / numel)
        ga = s if a.requires_grad else None
        gb = -s if b.requires_grad else None
        return ga, gb

    return _result("l1_distance", y, (a, b), backward_fn,
                   lambda da, db: np.abs(da - db).mean())


# ---------------------------------------------------------------------------
# graph execution
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    Clears .grad on the reachable subgraph first, then accumulates; marks
    interior nodes consumed so a stale graph cannot be reused.
    """
    if loss.data.shape != ():
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphError("backward on a graph with no tensors requiring grad")
    order = _toposort(loss)
    for t in order:
        if t._consumed:
            raise GraphError("backward called twice on the same graph; re-run forward first")
    for t in order:
        t.grad = None
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for t in reversed(order):
        if not t._parents:
            continue
        t._consumed = True
        if t.grad is None or t._backward_fn is None:
            continue
        grads = t._backward_fn(t.grad)
        for p, g in zip(t._parents, grads):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g


def graph_records(root: Tensor):
    """Ordered (op, input_ids, output_id) records of root's graph.

    Node ids are assigned in topological order, so every record's inputs
    carry smaller ids than its output.
    """
    order = _toposort(root)
    ids = {id(t): k for k, t in enumerate(order)}
    records = []
    for t in order:
        if t._parents:
            records.append((t._op, tuple(ids[id(p)] for p in t._parents), ids[id(t)]))
    return records


def replay_forward(root: Tensor) -> np.ndarray:
    """Re-execute the recorded forward of root's graph from its leaves."""
    order = _toposort(root)
    values = {}
    for t in order:
        if not t._parents:
            values[id(t)] = t.data
        else:
            values[id(t)] = t._replay_fn(*(values[id(p)] for p in t._parents))
    return values[id(root)]
