"""Triplane representation: three axis-aligned feature planes spanning a box.

A 3D point is projected onto each plane by dropping the orthogonal
axis; per-plane features are bilinearly interpolated and concatenated
in the fixed (xy, yz, xz) order. The same order constant is used by
fitting, diffusion, refinement, and rendering.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PLANE_ORDER = ("xy", "yz", "xz")
# world axes kept by each plane: first index maps to the W dimension,
# second to the H dimension of the C x W x H plane array
PLANE_AXES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}

DEFAULT_BOUNDS = (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))

TRIPLANE_MAGIC = b"TRI1"
TRIPLANE_VERSION = 1


class TriplaneFormatError(ValueError):
    """Bad magic/version, truncation, or shape disagreement in a triplane file."""


class OutOfBoundsError(ValueError):
    """A query point lies outside the triplane bounds."""


@dataclass
class TriplaneMeta:
    channels: int
    width: int
    height: int
    offsets: np.ndarray  # (C,) per-channel centering
    scales: np.ndarray  # (C,) per-channel scale, strictly positive
    object_id: str = ""
    class_label: int = 0

    def validate(self) -> None:
        if self.offsets.shape != (self.channels,) or self.scales.shape != (self.channels,):
            raise ValueError(
                f"meta stats must be per-channel ({self.channels},), got "
                f"{self.offsets.shape}/{self.scales.shape}"
            )
        if not (self.scales > 0).all():
            raise ValueError("normalization scale must be strictly positive")

    @classmethod
    def identity(cls, channels: int, width: int, height: int, **kw) -> "TriplaneMeta":
        return cls(channels, width, height,
                   np.zeros(channels, dtype=np.float32),
                   np.ones(channels, dtype=np.float32), **kw)


class Triplane:
    """Three feature planes, each C x W x H, over an axis-aligned box."""

    def __init__(self, planes, bounds=DEFAULT_BOUNDS):
        planes = tuple(ad.as_tensor(p) for p in planes)
        if len(planes) != 3:
            raise ValueError(f"expected 3 planes, got {len(planes)}")
        shape = planes[0].shape
        if len(shape) != 3 or any(p.shape != shape for p in planes):
            raise ValueError(f"planes must share one C x W x H shape, got {[p.shape for p in planes]}")
        self.planes = planes
        self.bounds = (np.asarray(bounds[0], dtype=np.float64),
                       np.asarray(bounds[1], dtype=np.float64))
        if not (self.bounds[1] > self.bounds[0]).all():
            raise ValueError("bounds upper corner must exceed lower corner")

    @property
    def channels(self) -> int:
        return self.planes[0].shape[0]

    @property
    def width(self) -> int:
        return self.planes[0].shape[1]

    @property
    def height(self) -> int:
        return self.planes[0].shape[2]

    @classmethod
    def zeros(cls, channels: int, width: int, height: int, bounds=DEFAULT_BOUNDS,
              dtype=np.float32) -> "Triplane":
        return cls([Tensor(np.zeros((channels, width, height), dtype=dtype))
                    for _ in range(3)], bounds)

    def as_array(self) -> np.ndarray:
        """Planes concatenated along the last axis: (C, W, 3H), plane order fixed."""
        return np.concatenate([p.data for p in self.planes], axis=2)

    @classmethod
    def from_array(cls, arr: np.ndarray, bounds=DEFAULT_BOUNDS) -> "Triplane":
        if arr.ndim != 3 or arr.shape[2] % 3 != 0:
            raise ValueError(f"expected (C, W, 3H) array, got {arr.shape}")
        h = arr.shape[2] // 3
        return cls([Tensor(np.ascontiguousarray(arr[:, :, i * h : (i + 1) * h]))
                    for i in range(3)], bounds)

    def detach(self) -> "Triplane":
        return Triplane([p.detach() for p in self.planes], self.bounds)


def _plane_coords(pts: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                  axes: tuple[int, int], width: int, height: int):
    u = (pts[:, axes[0]] - lo[axes[0]]) / (hi[axes[0]] - lo[axes[0]]) * (width - 1)
    v = (pts[:, axes[1]] - lo[axes[1]]) / (hi[axes[1]] - lo[axes[1]]) * (height - 1)
    return u, v


def sample_features(tp: Triplane, pts) -> Tensor:
    """Bilinear triplane features at points inside bounds: (N, 3) -> (N, 3C).

    Differentiable w.r.t. plane values, and w.r.t. the points when they
    are passed as a Tensor (cell indices are treated as constants).
    """
    pts_t = pts if isinstance(pts, Tensor) else None
    raw = pts_t.data if pts_t is not None else np.asarray(pts, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != 3:
        raise ad.ShapeError(f"expected (N, 3) points, got {raw.shape}")
    lo, hi = tp.bounds
    eps = 1e-9 * float((hi - lo).max())
    if (raw < lo - eps).any() or (raw > hi + eps).any():
        bad = raw[((raw < lo - eps) | (raw > hi + eps)).any(axis=1)][0]
        raise OutOfBoundsError(f"point {bad} outside bounds {lo}..{hi}")

    c, w, h = tp.channels, tp.width, tp.height
    per_plane = []
    for name, plane in zip(PLANE_ORDER, tp.planes):
        axes = PLANE_AXES[name]
        u_raw, v_raw = _plane_coords(raw, lo, hi, axes, w, h)
        i0 = np.clip(np.floor(u_raw), 0, w - 2).astype(np.int64)
        j0 = np.clip(np.floor(v_raw), 0, h - 2).astype(np.int64)
        if pts_t is not None:
            span_u = (w - 1) / (hi[axes[0]] - lo[axes[0]])
            span_v = (h - 1) / (hi[axes[1]] - lo[axes[1]])
            fu = (pts_t[:, axes[0]] - float(lo[axes[0]])) * span_u - i0
            fv = (pts_t[:, axes[1]] - float(lo[axes[1]])) * span_v - j0
        else:
            dt = plane.dtype
            fu = Tensor(np.clip(u_raw - i0, 0.0, 1.0).astype(dt))
            fv = Tensor(np.clip(v_raw - j0, 0.0, 1.0).astype(dt))
        flat = plane.reshape(c, w * h)
        f00 = ad.take(flat, i0 * h + j0, axis=1)
        f01 = ad.take(flat, i0 * h + (j0 + 1), axis=1)
        f10 = ad.take(flat, (i0 + 1) * h + j0, axis=1)
        f11 = ad.take(flat, (i0 + 1) * h + (j0 + 1), axis=1)
        one = 1.0
        feat = (f00 * ((one - fu) * (one - fv)) + f01 * ((one - fu) * fv)
                + f10 * (fu * (one - fv)) + f11 * (fu * fv))
        per_plane.append(ad.transpose(feat, (1, 0)))
    return ad.concat(per_plane, axis=1)


def tv_regularizer(tp: Triplane) -> Tensor:
    """Total variation: sum of |neighbor differences| along both plane axes."""
    if tp.width < 2 or tp.height < 2:
        raise ValueError(f"TV needs W, H >= 2, got {tp.width}x{tp.height}")
    total = None
    for plane in tp.planes:
        du = ad.tsum(ad.absolute(plane[:, 1:, :] - plane[:, :-1, :]))
        dv = ad.tsum(ad.absolute(plane[:, :, 1:] - plane[:, :, :-1]))
        term = du + dv
        total = term if total is None else total + term
    return total


def l2_regularizer(tp: Triplane) -> Tensor:
    total = None
    for plane in tp.planes:
        term = ad.tsum(plane * plane)
        total = term if total is None else total + term
    return total


def compute_normalization(corpus: list[Triplane], sigma_mult: float = 3.0,
                          eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (offset, scale) over a corpus: offset = mean, scale = 3*std.

    Scale is floored at eps so a constant channel normalizes to zeros
    instead of dividing by zero.
    """
    if not corpus:
        raise ValueError("empty corpus")
    c = corpus[0].channels
    stacked = np.concatenate(
        [p.data.reshape(c, -1) for tp in corpus for p in tp.planes], axis=1
    ).astype(np.float64)
    offsets = stacked.mean(axis=1)
    scales = np.maximum(sigma_mult * stacked.std(axis=1), eps)
    return offsets.astype(np.float32), scales.astype(np.float32)


def normalize(tp: Triplane, meta: TriplaneMeta, clip: bool = True):
    """Map plane values to roughly [-1, 1]: (x - offset) / scale, then clip.

    Returns (normalized Triplane, clipped fraction). Operates on raw
    arrays; the inverse (`denormalize`) is the differentiable direction.
    """
    meta.validate()
    off = meta.offsets.astype(np.float64)[:, None, None]
    sc = meta.scales.astype(np.float64)[:, None, None]
    planes = []
    clipped = 0
    total = 0
    for plane in tp.planes:
        y = (plane.data - off) / sc
        if clip:
            clipped += int((np.abs(y) > 1.0).sum())
            y = np.clip(y, -1.0, 1.0)
        total += y.size
        planes.append(Tensor(y.astype(plane.dtype)))
    return Triplane(planes, tp.bounds), clipped / total


def denormalize(tp: Triplane, meta: TriplaneMeta) -> Triplane:
    """Inverse affine map, differentiable through plane values."""
    meta.validate()
    planes = []
    for plane in tp.planes:
        sc = plane.data.dtype.type(1)  # keep dtype: scalars stay weak in numpy 2
        y = plane * meta.scales.astype(np.float64)[:, None, None] * sc \
            + meta.offsets.astype(np.float64)[:, None, None]
        planes.append(y)
    return Triplane(planes, tp.bounds)


def denormalize_array(x: Tensor, meta: TriplaneMeta) -> Tensor:
    """Denormalize a (..., C, W, 3H) tensor channelwise (diffusion layout)."""
    meta.validate()
    nd = x.ndim
    shape = [1] * nd
    shape[-3] = meta.channels
    sc = meta.scales.astype(np.float32).reshape(shape)
    off = meta.offsets.astype(np.float32).reshape(shape)
    return x * sc + off


# -- serialization -------------------------------------------------------


def save_triplane(path, tp: Triplane, meta: TriplaneMeta) -> None:
    meta.validate()
    c, w, h = tp.channels, tp.width, tp.height
    if (c, w, h) != (meta.channels, meta.width, meta.height):
        raise ValueError(f"meta {meta.channels}x{meta.width}x{meta.height} "
                         f"disagrees with planes {c}x{w}x{h}")
    buf = io.BytesIO()
    buf.write(TRIPLANE_MAGIC)
    buf.write(struct.pack("<H", TRIPLANE_VERSION))
    buf.write(struct.pack("<IIII", c, w, h, meta.class_label))
    for k in range(c):
        buf.write(struct.pack("<ff", float(meta.offsets[k]), float(meta.scales[k])))
    for plane in tp.planes:
        buf.write(np.ascontiguousarray(plane.data, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read(f, n: int, what: str) -> bytes:
    chunk = f.read(n)
    if len(chunk) != n:
        raise TriplaneFormatError(f"truncated triplane file while reading {what}")
    return chunk


def load_triplane(path, bounds=DEFAULT_BOUNDS) -> tuple[Triplane, TriplaneMeta]:
    path = Path(path)
    f = io.BytesIO(path.read_bytes())
    magic = f.read(4)
    if magic != TRIPLANE_MAGIC:
        raise TriplaneFormatError(f"bad magic {magic!r}, expected {TRIPLANE_MAGIC!r}")
    (version,) = struct.unpack("<H", _read(f, 2, "version"))
    if version != TRIPLANE_VERSION:
        raise TriplaneFormatError(f"unsupported triplane version {version}")
    c, w, h, label = struct.unpack("<IIII", _read(f, 16, "dimensions"))
    if c == 0 or w < 2 or h < 2:
        raise TriplaneFormatError(f"implausible dimensions C={c} W={w} H={h}")
    stats = np.frombuffer(_read(f, 8 * c, "normalization stats"), dtype="<f4")
    offsets = stats[0::2].copy()
    scales = stats[1::2].copy()
    planes = []
    for name in PLANE_ORDER:
        raw = _read(f, 4 * c * w * h, f"plane {name}")
        planes.append(Tensor(np.frombuffer(raw, dtype="<f4").reshape(c, w, h).copy()))
    if f.read(1):
        raise TriplaneFormatError("trailing bytes after final plane")
    meta = TriplaneMeta(c, w, h, offsets, scales, object_id=path.stem, class_label=label)
    return Triplane(planes, bounds), meta
