"""Ray batches and transmittance-based volume rendering of triplanes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import RandomSource, Tensor
from ..triplane import Triplane, sample_features
from .camera import Camera
from .decoder import DecoderMLP, positional_encode


def intersect_aabb(origins: np.ndarray, dirs: np.ndarray,
                   lo: np.ndarray, hi: np.ndarray):
    """Slab test: per-ray (t_near, t_far, hit) against an axis-aligned box.

    t_near is clamped to 0 so origins inside the box start at the origin.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo[None, :] - origins) * inv
        t2 = (hi[None, :] - origins) * inv
    # parallel-to-slab rays: replace nan from 0*inf with +-inf by the slab test
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    parallel_outside = (np.abs(dirs) < 1e-12) & ((origins < lo) | (origins > hi))
    tmin = np.where(parallel_outside, np.inf, tmin)
    t_near = np.maximum(tmin.max(axis=1), 0.0)
    t_far = tmax.min(axis=1)
    hit = t_far > t_near + 1e-12
    return t_near, t_far, hit


@dataclass
class PosedView:
    camera: Camera
    rgb: np.ndarray  # (H, W, 3) float in [0,1], premultiplied on black
    mask: np.ndarray | None  # (H, W) float in [0,1], alpha


@dataclass
class RayBatch:
    origins: np.ndarray  # (N, 3)
    dirs: np.ndarray  # (N, 3) unit
    near: np.ndarray  # (N,)
    far: np.ndarray  # (N,)
    hit: np.ndarray  # (N,) bool: ray intersects the bounds
    gt_rgb: np.ndarray | None = None  # (N, 3) in [0,1], background black
    gt_mask: np.ndarray | None = None  # (N,) in [0,1]
    foreground: np.ndarray | None = None  # (N,) bool
    fell_back_to_full_image: bool = False

    def __post_init__(self):
        norms = np.linalg.norm(self.dirs, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("ray directions must be unit length")
        if (self.far[self.hit] <= self.near[self.hit]).any():
            raise ValueError("near must be < far for intersecting rays")

    def __len__(self):
        return len(self.origins)

    @classmethod
    def from_camera_pixels(cls, cam: Camera, px, py, bounds, rgb=None, mask=None,
                           **kw) -> "RayBatch":
        origins, dirs = cam.rays_for_pixels(np.asarray(px), np.asarray(py))
        near, far, hit = intersect_aabb(origins, dirs, bounds[0], bounds[1])
        gt_rgb = gt_mask = fg = None
        if rgb is not None:
            gt_rgb = rgb[np.asarray(py), np.asarray(px)].astype(np.float64)
        if mask is not None:
            gt_mask = mask[np.asarray(py), np.asarray(px)].astype(np.float64)
            fg = gt_mask >= 0.5
        return cls(origins, dirs, near, far, hit, gt_rgb, gt_mask, fg, **kw)


def _sample_depths(near: np.ndarray, far: np.ndarray, n: int,
                   rng: RandomSource | None):
    """Stratified (rng given) or bin-center depths: (R, n) plus deltas (R, n)."""
    r = len(near)
    if rng is not None:
        offsets = rng.uniform((r, n))
    else:
        offsets = np.full((r, n), 0.5)
    span = (far - near)[:, None]
    t = near[:, None] + span * (np.arange(n)[None, :] + offsets) / n
    deltas = np.empty_like(t)
    deltas[:, :-1] = t[:, 1:] - t[:, :-1]
    deltas[:, -1] = far - t[:, -1]
    return t, deltas


def volume_render(tp: Triplane, decoder: DecoderMLP, rays: RayBatch, n_samples: int,
                  rng: RandomSource | None = None):
    """Composite color and opacity along each ray.

    Returns ((N, 3) color, (N,) opacity) Tensors; rays that miss the
    bounds contribute exact zeros. Differentiable w.r.t. plane values
    and decoder parameters.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples per ray, got {n_samples}")
    total = len(rays)
    idx = np.flatnonzero(rays.hit)
    zeros_rgb = Tensor(np.zeros((total, 3), dtype=np.float32))
    zeros_m = Tensor(np.zeros(total, dtype=np.float32))
    if len(idx) == 0:
        return zeros_rgb, zeros_m
    origins = rays.origins[idx]
    dirs = rays.dirs[idx]
    t, deltas = _sample_depths(rays.near[idx], rays.far[idx], n_samples, rng)
    pts = origins[:, None, :] + dirs[:, None, :] * t[:, :, None]
    lo, hi = tp.bounds
    pts = np.clip(pts, lo, hi)  # guard float drift at the box surface
    r = len(idx)
    feats = sample_features(tp, pts.reshape(r * n_samples, 3).astype(np.float32))
    enc = positional_encode(dirs.astype(np.float32), decoder.num_freqs)
    rgb, sigma = decoder(feats, dirs, dirs_encoded=np.repeat(enc, n_samples, axis=0))

    alpha_exp = sigma.reshape(r, n_samples) * deltas.astype(np.float32)  # sigma * delta
    cum = ad.cumsum(alpha_exp, axis=1)
    transmit = ad.exp(-(cum - alpha_exp))  # T_i = exp(-sum_{j<i})
    weights = transmit * (1.0 - ad.exp(-alpha_exp))
    color = ad.tsum(weights.reshape(r, n_samples, 1) * rgb.reshape(r, n_samples, 3), axis=1)
    opacity = ad.tsum(weights, axis=1)
    if len(idx) == total:
        return color, opacity
    return (zeros_rgb + ad.put_rows(color, idx, total),
            zeros_m + ad.put_rows(opacity, idx, total))


def sample_rays(view, batch: int, rng: RandomSource, bounds,
                fg_threshold: float = 0.9) -> RayBatch:
    """Draw a training ray batch from one posed view.

    With probability fg_threshold the pixels come from the mask>=0.5
    foreground only; otherwise uniformly from the full image. An empty
    foreground falls back to full-image sampling and flags the batch.
    """
    if not 0.0 <= fg_threshold <= 1.0:
        raise ValueError(f"threshold must be in [0,1], got {fg_threshold}")
    cam: Camera = view.camera
    mask = view.mask
    if mask is None:
        raise ValueError("view has no mask")
    want_fg = bool(rng.uniform(()) < fg_threshold)
    fell_back = False
    fg_rows, fg_cols = np.nonzero(mask >= 0.5)
    if want_fg and len(fg_rows) == 0:
        want_fg = False
        fell_back = True
    if want_fg:
        sel = rng.integers(0, len(fg_rows), (batch,))
        py, px = fg_rows[sel], fg_cols[sel]
    else:
        flat = rng.integers(0, cam.width * cam.height, (batch,))
        py, px = flat // cam.width, flat % cam.width
    return RayBatch.from_camera_pixels(cam, px, py, bounds, rgb=view.rgb, mask=mask,
                                       fell_back_to_full_image=fell_back)
