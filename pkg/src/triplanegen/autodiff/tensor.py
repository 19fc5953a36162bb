"""Minimal reverse-mode autodiff over dense numpy arrays.

The operator set is deliberately small: elementwise arithmetic and
transcendentals, matmul, softmax, layer norm, strided 2D (transposed)
convolution, shape ops, gathers, and reductions. Every op records a
backward closure; `backward` walks the graph in reverse topological
order. Non-finite values fail fast with the producing op's name.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class NonFiniteError(ArithmeticError):
    """A forward or backward computation produced NaN or infinity."""


class GraphError(RuntimeError):
    """The autodiff graph was used incorrectly (e.g. non-scalar loss)."""


# Global flags. `_grad_enabled` suppresses graph construction inside
# sampling/eval loops. `_nan_mode` is the fail-fast policy: "risky"
# (default) checks ops that can create non-finite values from finite
# inputs plus the loss and parameter gradients; "all" checks every op
# output and every backward edge; "off" checks nothing.
_grad_enabled = True
_nan_mode = "risky"

# ops able to produce nan/inf from finite inputs; always checked unless "off"
_RISKY_OPS = frozenset({"exp", "log", "sqrt", "div", "pow"})


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def nan_guard(mode):
    """Override the non-finite checking mode: "off"/False, "risky", "all"/True."""
    global _nan_mode
    if mode is True:
        mode = "all"
    elif mode is False:
        mode = "off"
    if mode not in ("off", "risky", "all"):
        raise ValueError(f"unknown nan mode {mode!r}")
    prev = _nan_mode
    _nan_mode = mode
    try:
        yield
    finally:
        _nan_mode = prev


def _assert_finite(arr: np.ndarray, op: str) -> None:
    if arr.size == 0:
        return
    if _nan_mode == "off" or (_nan_mode == "risky" and op not in _RISKY_OPS):
        return
    # single-pass f64 sum: any nan/inf makes it non-finite
    if not math.isfinite(float(np.sum(arr, dtype=np.float64))):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A dense real array plus the graph edges needed for backward."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, op: str = "leaf"):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return _unary(self, self.data.astype(dtype), "astype", lambda g: g.astype(self.dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op!r}, grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _result(data: np.ndarray, parents, backward, op: str) -> Tensor:
    """Wrap an op output, wiring graph edges only when needed."""
    _assert_finite(data, op)
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _unary(x: Tensor, data: np.ndarray, op: str, grad_fn) -> Tensor:
    return _result(data, (x,), lambda g: (grad_fn(g),), op)


# -- elementwise arithmetic --------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _result(a.data / b.data, (a, b), backward, "div")


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, -x.data, "neg", lambda g: -g)


def power(x, exponent: float) -> Tensor:
    x = as_tensor(x)
    e = float(exponent)
    data = x.data**e
    return _unary(x, data, "pow", lambda g: g * e * x.data ** (e - 1.0))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.abs(x.data), "abs", lambda g: g * np.sign(x.data))


# -- transcendentals and activations -----------------------------------


def exp(x) -> Tensor:
    x = as_tensor(x)
    data = np.exp(x.data)
    return _unary(x, data, "exp", lambda g: g * data)


def log(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.log(x.data), "log", lambda g: g / x.data)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    data = np.sqrt(x.data)
    return _unary(x, data, "sqrt", lambda g: g * (0.5 / data))


def sin(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.sin(x.data), "sin", lambda g: g * np.cos(x.data))


def cos(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.cos(x.data), "cos", lambda g: -g * np.sin(x.data))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)
    return _unary(x, data, "tanh", lambda g: g * (1.0 - data * data))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    data = np.empty_like(xd)
    pos = xd >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    data[~pos] = ex / (1.0 + ex)
    return _unary(x, data, "sigmoid", lambda g: g * data * (1.0 - data))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    data = np.logaddexp(np.zeros((), dtype=x.dtype), x.data)

    def grad_fn(g):
        xd = x.data
        s = np.empty_like(xd)
        pos = xd >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
        ex = np.exp(xd[~pos])
        s[~pos] = ex / (1.0 + ex)
        return g * s

    return _unary(x, data, "softplus", grad_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)
    return _unary(x, data, "relu", lambda g: g * (x.data > 0))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """tanh-approximated gaussian error linear unit."""
    x = as_tensor(x)
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(inner)
    data = 0.5 * xd * (1.0 + th)

    def grad_fn(g):
        sech2 = 1.0 - th * th
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return g * (0.5 * (1.0 + th) + 0.5 * xd * sech2 * dinner)

    return _unary(x, data, "gelu", grad_fn)


# -- matmul -------------------------------------------------------------


def _swap_last(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner-dim mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(np.matmul(g, _swap_last(b.data)), a.shape)
        gb = _unbroadcast(np.matmul(_swap_last(a.data), g), b.shape)
        return ga, gb

    return _result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


# -- reductions ---------------------------------------------------------


def _reduced_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _reduced_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)

    return _result(data, (x,), backward, "sum")


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _reduced_axes(axis, x.ndim)
    count = int(np.prod([x.shape[ax] for ax in axes]))
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype, copy=False),)

    return _result(data, (x,), backward, "mean")


def tmax(x, axis: int, keepdims=False) -> Tensor:
    """Max along one axis; gradient flows to the first argmax."""
    x = as_tensor(x)
    ax = axis % x.ndim
    data = x.data.max(axis=ax, keepdims=keepdims)
    idx = x.data.argmax(axis=ax)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, ax), g, axis=ax)
        return (gx,)

    return _result(data, (x,), backward, "max")


def cumsum(x, axis: int) -> Tensor:
    x = as_tensor(x)
    ax = axis % x.ndim
    data = np.cumsum(x.data, axis=ax)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, ax), axis=ax), ax),)

    return _result(data, (x,), backward, "cumsum")


# -- shape ops ----------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    data = x.data.reshape(shape)
    return _unary(x, data, "reshape", lambda g: g.reshape(old))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = x.data.transpose(axes)
    return _unary(x, data, "transpose", lambda g: g.transpose(inv))


def getitem(x, key) -> Tensor:
    """Basic (slice/int) indexing. Integer-array gathers go through `take`."""
    x = as_tensor(x)
    data = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _result(data, (x,), backward, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    sizes = [t.shape[ax] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=ax)
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slices = []
        for k in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(offsets[k], offsets[k + 1])
            slices.append(g[tuple(sl)])
        return tuple(slices)

    return _result(data, tensors, backward, "concat")


def pad2d(x, ph: int, pw: int) -> Tensor:
    """Zero-pad the last two axes symmetrically."""
    x = as_tensor(x)
    width = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    data = np.pad(x.data, width)

    def backward(g):
        sl = (Ellipsis, slice(ph, g.shape[-2] - ph), slice(pw, g.shape[-1] - pw))
        return (g[sl],)

    return _result(data, (x,), backward, "pad2d")


def take(x, indices, axis: int = 0) -> Tensor:
    """Gather along one axis with an integer index array."""
    x = as_tensor(x)
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise ShapeError(f"take expects 1D indices, got shape {idx.shape}")
    ax = axis % x.ndim
    data = np.take(x.data, idx, axis=ax)

    def backward(g):
        # bincount-based scatter-add: much faster than np.add.at.
        moved = np.moveaxis(g, ax, 0).reshape(len(idx), -1)
        cols = moved.shape[1]
        flat_idx = (idx[:, None] * cols + np.arange(cols)[None, :]).ravel()
        acc = np.bincount(flat_idx, weights=moved.ravel().astype(np.float64),
                          minlength=x.shape[ax] * cols)
        gx = acc.reshape(x.shape[ax], cols).astype(x.dtype)
        gx = gx.reshape((x.shape[ax],) + tuple(np.delete(x.shape, ax)))
        return (np.moveaxis(gx, 0, ax),)

    return _result(data, (x,), backward, "take")


def put_rows(values, indices, length: int) -> Tensor:
    """Scatter rows of `values` into a zero tensor of `length` rows.

    Indices must be unique; used to re-expand a compacted subset (e.g.
    rays that hit the volume) back to full batch size.
    """
    values = as_tensor(values)
    idx = np.asarray(indices)
    if len(idx) != values.shape[0]:
        raise ShapeError("put_rows index count must match value rows")
    data = np.zeros((length,) + values.shape[1:], dtype=values.dtype)
    data[idx] = values.data

    def backward(g):
        return (g[idx],)

    return _result(data, (values,), backward, "put_rows")


# -- normalization ------------------------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _result(s, (x,), backward, "softmax")


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    n = x.shape[-1]

    def backward(g):
        gxc = g * inv
        dvar = (g * xc).sum(axis=-1, keepdims=True) * (-0.5) * inv**3
        gxc = gxc + xc * (2.0 / n) * dvar
        gmu = -gxc.sum(axis=-1, keepdims=True)
        return ((gxc + gmu / n).astype(x.dtype, copy=False),)

    return _result(y, (x,), backward, "layer_norm")


# -- 2D convolution -----------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int):
    b, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (b, c, kh, kw, oh, ow), (s0, s1, s2, s3, s2 * sh, s3 * sw)
    )
    return view.reshape(b, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, b, c, hp, wp, kh, kw, sh, sw, oh, ow, dtype):
    out = np.zeros((b, c, hp, wp), dtype=dtype)
    cols6 = cols.reshape(b, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += cols6[:, :, i, j]
    return out


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """x: (B, C, H, W); w: (O, C, kh, kw); b: (O,) optional."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4D input/weight, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: {x.shape} vs {w.shape}")
    bt = as_tensor(b) if b is not None else None
    bs, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh = sw = int(stride)
    p = int(padding)
    hp, wp = h + 2 * p, wd + 2 * p
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d output would be empty for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = _im2col(xp, kh, kw, sh, sw, oh, ow)
    w2 = w.data.reshape(o, c * kh * kw)
    out = np.matmul(w2, cols).reshape(bs, o, oh, ow)
    if bt is not None:
        out = out + bt.data.reshape(1, o, 1, 1)

    def backward(g):
        gflat = g.reshape(bs, o, oh * ow)
        gw = np.einsum("bop,bkp->ok", gflat, cols).reshape(w.shape).astype(w.dtype, copy=False)
        gcols = np.matmul(w2.T, gflat)
        gx = _col2im(gcols, bs, c, hp, wp, kh, kw, sh, sw, oh, ow, x.dtype)
        if p:
            gx = gx[:, :, p : hp - p, p : wp - p]
        if bt is not None:
            gb = g.sum(axis=(0, 2, 3)).astype(bt.dtype, copy=False)
            return gx, gw, gb
        return gx, gw

    parents = (x, w) if bt is None else (x, w, bt)
    return _result(out, parents, backward, "conv2d")


def conv2d_transpose(x, w, b=None, stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """x: (B, C, H, W); w: (C, O, kh, kw); output (B, O, OH, OW).

    OH = (H-1)*stride - 2*padding + kh + output_padding.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d_transpose expects 4D input/weight, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv2d_transpose channel mismatch: {x.shape} vs {w.shape}")
    bt = as_tensor(b) if b is not None else None
    bs, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    s = int(stride)
    p = int(padding)
    op = int(output_padding)
    if op >= s:
        raise ShapeError(f"output_padding {op} must be < stride {s}")
    oh = (h - 1) * s - 2 * p + kh + op
    ow = (wd - 1) * s - 2 * p + kw + op
    hp, wp = oh + 2 * p, ow + 2 * p
    w2 = w.data.reshape(c, o * kh * kw)
    cols = np.matmul(w2.T, x.data.reshape(bs, c, h * wd))
    out_p = _col2im(cols, bs, o, hp, wp, kh, kw, s, s, h, wd, x.dtype)
    out = out_p[:, :, p : hp - p, p : wp - p] if p else out_p
    if bt is not None:
        out = out + bt.data.reshape(1, o, 1, 1)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = _im2col(gp, kh, kw, s, s, h, wd)
        gx = np.matmul(w2, gcols).reshape(x.shape).astype(x.dtype, copy=False)
        gw = np.einsum("bcp,bkp->ck", x.data.reshape(bs, c, h * wd), gcols)
        gw = gw.reshape(w.shape).astype(w.dtype, copy=False)
        if bt is not None:
            gb = g.sum(axis=(0, 2, 3)).astype(bt.dtype, copy=False)
            return gx, gw, gb
        return gx, gw

    parents = (x, w) if bt is None else (x, w, bt)
    return _result(out, parents, backward, "conv2d_transpose")


# -- backward driver ----------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params=None) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss.

    Returns a map keyed by Parameter identifier for every reachable
    Parameter. If `params` is given, every listed parameter appears in
    the map; unreachable ones get zero gradients. Every visited tensor
    with requires_grad also gets its `.grad` attribute set.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not math.isfinite(float(loss.data)):
        raise NonFiniteError(f"loss is non-finite (op '{loss.op}')")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    order = _toposort(loss)
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if _nan_mode == "all":
                _assert_finite_grad(pg, node.op)
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg

    out: dict[str, np.ndarray] = {}
    for node in order:
        name = getattr(node, "name", None)
        if name is not None and node.grad is not None:
            if _nan_mode != "off" and node.grad.size \
                    and not math.isfinite(float(np.sum(node.grad, dtype=np.float64))):
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
            out[name] = node.grad
    if params is not None:
        for p in params:
            if p.name not in out:
                out[p.name] = np.zeros_like(p.data)
    return out


def _assert_finite_grad(arr: np.ndarray, op: str) -> None:
    if arr.size == 0:
        return
    if not math.isfinite(float(np.sum(arr, dtype=np.float64))):
        raise NonFiniteError(f"non-finite gradient flowing through op '{op}'")
