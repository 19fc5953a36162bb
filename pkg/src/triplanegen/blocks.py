"""Reusable network blocks: linear/conv layers, multi-head attention,
patchify/integration, learnable positional embeddings, adaptive-norm
conditioning, and per-plane convolutional resampling.

Attention follows the per-head form Softmax(Q Wq (K Wk)^T / sqrt(d)) V Wv
with heads concatenated and projected by a square output matrix.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, RandomSource, Tensor
from .triplane import PLANE_ORDER


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: RandomSource,
                 zero_init: bool = False, bias: bool = True, dtype=np.float32):
        super().__init__()
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal((n_in, n_out)) / math.sqrt(n_in)
        self.w = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(n_out), dtype=dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w)
        if self.bias is not None:
            y = y + self.bias
        return y


class Mlp(Module):
    """Linear -> GELU -> Linear; the residual-branch closer is zero-initable."""

    def __init__(self, dim: int, hidden: int, rng: RandomSource,
                 out_dim: int | None = None, zero_init_last: bool = False,
                 dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng.child("fc1"), dtype=dtype)
        self.fc2 = Linear(hidden, out_dim or dim, rng.child("fc2"),
                          zero_init=zero_init_last, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ad.gelu(self.fc1(x)))


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: RandomSource,
                 stride: int = 1, padding: int = 0, zero_init: bool = False,
                 dtype=np.float32):
        super().__init__()
        fan_in = c_in * kernel * kernel
        if zero_init:
            w = np.zeros((c_out, c_in, kernel, kernel))
        else:
            w = rng.normal((c_out, c_in, kernel, kernel)) / math.sqrt(fan_in)
        self.w = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(c_out), dtype=dtype)
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: RandomSource,
                 stride: int = 1, padding: int = 0, output_padding: int = 0,
                 dtype=np.float32):
        super().__init__()
        fan_in = c_in * kernel * kernel
        self.w = Parameter(rng.normal((c_in, c_out, kernel, kernel)) / math.sqrt(fan_in),
                           dtype=dtype)
        self.bias = Parameter(np.zeros(c_out), dtype=dtype)
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d_transpose(x, self.w, self.bias, stride=self.stride,
                                   padding=self.padding,
                                   output_padding=self.output_padding)


# -- attention ------------------------------------------------------------


class AttentionWeights(Module):
    """Per-head projection stacks (N_h, C_i, C_h) plus a C_i x C_i output map."""

    def __init__(self, dim: int, heads: int, rng: RandomSource,
                 zero_init_out: bool = True, dtype=np.float32):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"heads {heads} must divide dim {dim}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        scale = 1.0 / math.sqrt(dim)
        self.wq = Parameter(rng.child("q").normal((heads, dim, self.head_dim)) * scale, dtype=dtype)
        self.wk = Parameter(rng.child("k").normal((heads, dim, self.head_dim)) * scale, dtype=dtype)
        self.wv = Parameter(rng.child("v").normal((heads, dim, self.head_dim)) * scale, dtype=dtype)
        if zero_init_out:
            w_out = np.zeros((dim, dim))
        else:
            w_out = rng.child("o").normal((dim, dim)) * scale
        self.w_out = Parameter(w_out, dtype=dtype)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, w: AttentionWeights) -> Tensor:
    """(B, N, C) x (B, M, C) x (B, M, C) -> (B, N, C); 2D inputs also accepted."""
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = (t.reshape(1, *t.shape) for t in (q, k, v))
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise ad.ShapeError(f"attention wants 3D tokens, got {q.shape}/{k.shape}/{v.shape}")
    if k.shape[1] != v.shape[1]:
        raise ad.ShapeError(f"key/value length mismatch: {k.shape} vs {v.shape}")
    if q.shape[2] != w.dim or k.shape[2] != w.dim:
        raise ad.ShapeError(f"token dim {q.shape[2]} does not match weights dim {w.dim}")
    b, n, c = q.shape
    m = k.shape[1]
    # (B, 1, N, C) @ (H, C, d) -> (B, H, N, d)
    qh = ad.matmul(q.reshape(b, 1, n, c), w.wq)
    kh = ad.matmul(k.reshape(b, 1, m, c), w.wk)
    vh = ad.matmul(v.reshape(b, 1, m, c), w.wv)
    logits = ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(w.head_dim))
    attn = ad.softmax(logits, axis=-1)
    heads = ad.matmul(attn, vh)  # (B, H, N, d)
    merged = ad.transpose(heads, (0, 2, 1, 3)).reshape(b, n, c)
    out = ad.matmul(merged, w.w_out)
    return out.reshape(n, c) if squeeze else out


# -- patch tokens -----------------------------------------------------------


def patchify(x: Tensor, ps: int) -> Tensor:
    """(B, C, W, H) -> (B, M, C*ps*ps) with non-overlapping row-major patches."""
    if x.ndim != 4:
        raise ad.ShapeError(f"patchify wants (B, C, W, H), got {x.shape}")
    b, c, w, h = x.shape
    if w % ps or h % ps:
        raise ad.ShapeError(f"patch size {ps} must divide spatial dims {w}x{h}")
    gw, gh = w // ps, h // ps
    t = x.reshape(b, c, gw, ps, gh, ps)
    t = ad.transpose(t, (0, 2, 4, 1, 3, 5))
    return t.reshape(b, gw * gh, c * ps * ps)


def unpatchify(tokens: Tensor, ps: int, c: int, w: int, h: int) -> Tensor:
    """Exact inverse of patchify for the stated geometry."""
    b, m, d = tokens.shape
    gw, gh = w // ps, h // ps
    if m != gw * gh or d != c * ps * ps:
        raise ad.ShapeError(f"tokens {tokens.shape} do not match {c}x{w}x{h} ps={ps}")
    t = tokens.reshape(b, gw, gh, c, ps, ps)
    t = ad.transpose(t, (0, 3, 1, 4, 2, 5))
    return t.reshape(b, c, w, h)


class PlanePositionalEmbedding(Module):
    """Distinct learnable per-position tables for the three planes plus a
    learned per-plane identity vector."""

    def __init__(self, tokens: int, dim: int, rng: RandomSource, dtype=np.float32):
        super().__init__()
        self.tables = Parameter(rng.child("tables").normal((3, tokens, dim)) * 0.02, dtype=dtype)
        self.plane_id = Parameter(rng.child("ids").normal((3, 1, dim)) * 0.02, dtype=dtype)
        self.tokens = tokens

    def forward(self, plane_tokens: list[Tensor]) -> list[Tensor]:
        """plane_tokens: three (B, M, D) tensors in (xy, yz, xz) order."""
        if len(plane_tokens) != 3:
            raise ValueError(f"expected 3 planes, got {len(plane_tokens)}")
        m = plane_tokens[0].shape[1]
        if m > self.tokens:
            raise ad.ShapeError(f"positional table holds {self.tokens} positions, need {m}")
        out = []
        for i, t in enumerate(plane_tokens):
            out.append(t + (self.tables[i, :m, :] + self.plane_id[i]))
        return out


# -- conditioning ------------------------------------------------------------


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic sin/cos timestep features: (B,) int -> (B, dim) float32."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb.astype(np.float32)


class ConditionEmbedding(Module):
    """Timestep sinusoid fused with a learned class table, then a 2-layer MLP."""

    def __init__(self, dim: int, num_classes: int, total_steps: int,
                 rng: RandomSource, dtype=np.float32):
        super().__init__()
        self.dim = dim
        self.num_classes = num_classes
        self.total_steps = total_steps
        self.class_table = Parameter(rng.child("cls").normal((num_classes, dim)) * 0.02,
                                     dtype=dtype)
        self.mlp = Mlp(dim, dim * 2, rng.child("mlp"), out_dim=dim, dtype=dtype)

    def forward(self, t: np.ndarray, labels: np.ndarray) -> Tensor:
        t = np.atleast_1d(np.asarray(t))
        labels = np.atleast_1d(np.asarray(labels))
        if (t < 0).any() or (t >= self.total_steps).any():
            raise ValueError(f"timestep out of range [0, {self.total_steps})")
        if (labels < 0).any() or (labels >= self.num_classes).any():
            raise ValueError(f"class label out of range [0, {self.num_classes})")
        base = Tensor(sinusoidal_embedding(t, self.dim))
        cls = ad.take(self.class_table, labels.astype(np.int64), axis=0)
        return self.mlp(base + cls)


class AdaptiveNorm(Module):
    """Layer norm whose scale (1+gamma) and shift beta come from the condition.

    The regressor is zero-initialized so the block starts as plain layer norm.
    """

    def __init__(self, dim: int, cond_dim: int, rng: RandomSource, dtype=np.float32):
        super().__init__()
        self.dim = dim
        self.regress = Linear(cond_dim, 2 * dim, rng, zero_init=True, dtype=dtype)

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        """x: (B, M, D); cond: (B, cond_dim)."""
        h = ad.layer_norm(x)
        gb = self.regress(cond)  # (B, 2D)
        gamma = gb[:, : self.dim].reshape(gb.shape[0], 1, self.dim)
        beta = gb[:, self.dim :].reshape(gb.shape[0], 1, self.dim)
        return h * (1.0 + gamma) + beta


# -- per-plane resampling -----------------------------------------------------


class PlaneResample(Module):
    """One shared conv applied to each plane independently (no cross-plane mixing)."""

    def __init__(self, c_in: int, c_out: int, factor: int, direction: str,
                 rng: RandomSource, dtype=np.float32):
        super().__init__()
        if factor not in (1, 2, 4):
            raise ValueError(f"resample factor must be 1, 2 or 4, got {factor}")
        if direction not in ("down", "up"):
            raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")
        self.factor = factor
        self.direction = direction
        if direction == "down" or factor == 1:
            self.conv = Conv2d(c_in, c_out, 3, rng, stride=factor, padding=1, dtype=dtype)
        else:
            self.conv = ConvTranspose2d(c_in, c_out, 3, rng, stride=factor,
                                        padding=1, output_padding=factor - 1, dtype=dtype)

    def forward(self, planes: list[Tensor]) -> list[Tensor]:
        out = []
        for p in planes:
            if self.direction == "down" and (p.shape[2] % self.factor or p.shape[3] % self.factor):
                raise ad.ShapeError(
                    f"factor {self.factor} must divide plane size {p.shape[2]}x{p.shape[3]}")
            out.append(self.conv(p))
        return out


def split_planes(x: Tensor) -> list[Tensor]:
    """(B, C, W, 3H) concatenated layout -> three (B, C, W, H) planes."""
    if x.ndim != 4 or x.shape[3] % 3:
        raise ad.ShapeError(f"expected (B, C, W, 3H), got {x.shape}")
    h = x.shape[3] // 3
    return [x[:, :, :, i * h : (i + 1) * h] for i in range(3)]


def merge_planes(planes: list[Tensor]) -> Tensor:
    """Inverse of split_planes, preserving (xy, yz, xz) order."""
    if len(planes) != len(PLANE_ORDER):
        raise ad.ShapeError(f"expected {len(PLANE_ORDER)} planes, got {len(planes)}")
    return ad.concat(planes, axis=3)
