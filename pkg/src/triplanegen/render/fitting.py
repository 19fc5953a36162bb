"""Stage-I fitting: the rendering objective and the two optimization modes.

Shared mode jointly trains the decoder (lr 1e-2) and a subset's
triplanes (lr 1e-1) with weak regularization (1e-4 / 5e-5); per-object
mode freezes the decoder and fits one triplane with strong
regularization (0.5 / 0.1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Adam, Module, Parameter, RandomSource, Tensor
from ..triplane import (DEFAULT_BOUNDS, PLANE_ORDER, Triplane, l2_regularizer,
                        tv_regularizer)
from .decoder import DecoderMLP
from .volume import PosedView, RayBatch, sample_rays, volume_render


class TriplaneParams(Module):
    """Triplane planes as trainable parameters."""

    def __init__(self, channels: int, width: int, height: int, rng: RandomSource,
                 bounds=DEFAULT_BOUNDS, init_scale: float = 0.1, dtype=np.float32):
        super().__init__()
        for name in PLANE_ORDER:
            setattr(self, name,
                    Parameter(rng.child(name).normal((channels, width, height)) * init_scale,
                              dtype=dtype))
        self.bounds = bounds

    def triplane(self) -> Triplane:
        return Triplane([getattr(self, name) for name in PLANE_ORDER], self.bounds)


@dataclass
class FitConfig:
    steps: int = 2000
    batch_rays: int = 512
    n_samples: int = 64        # samples/ray during training
    lam_tv: float = 0.5
    lam_l2: float = 0.1
    lr_triplane: float = 1e-1
    lr_decoder: float = 1e-2
    fg_threshold: float = 0.9
    epoch_steps: int = 250
    psnr_rays: int = 1024
    psnr_samples: int = 128    # samples/ray at evaluation


# shared-decoder joint training uses the weak weighting
SHARED_MODE_LAMBDAS = (1e-4, 5e-5)
# per-object fitting against a frozen decoder uses the strong weighting
PER_OBJECT_LAMBDAS = (0.5, 0.1)


def fitting_loss(tp: Triplane, decoder: DecoderMLP, rays: RayBatch,
                 lam_tv: float, lam_l2: float, n_samples: int,
                 rng: RandomSource | None = None):
    """Rendered-color MSE + mask MSE + TV and L2 plane regularizers.

    Returns (total loss Tensor, float components for logging).
    """
    if rays.gt_rgb is None or rays.gt_mask is None:
        raise ValueError("fitting rays must carry ground-truth color and mask")
    color, opacity = volume_render(tp, decoder, rays, n_samples, rng=rng)
    mse_c = ad.tmean((color - rays.gt_rgb.astype(np.float32)) ** 2.0)
    mse_m = ad.tmean((opacity - rays.gt_mask.astype(np.float32)) ** 2.0)
    tv = tv_regularizer(tp)
    l2 = l2_regularizer(tp)
    total = mse_c + mse_m + lam_tv * tv + lam_l2 * l2
    components = {
        "mse_color": float(mse_c.data),
        "mse_mask": float(mse_m.data),
        "tv": float(tv.data),
        "l2": float(l2.data),
        "total": float(total.data),
    }
    return total, components


def foreground_psnr(tp: Triplane, decoder: DecoderMLP, views: list[PosedView],
                    n_rays: int = 1024, n_samples: int = 96, seed: int = 0) -> float:
    """PSNR of deterministic renders over foreground pixels pooled across views."""
    rng = RandomSource(seed)
    per_view = max(1, n_rays // max(len(views), 1))
    sq_sum = 0.0
    count = 0
    with ad.no_grad():
        for i, view in enumerate(views):
            rows, cols = np.nonzero(view.mask >= 0.5)
            if len(rows) == 0:
                continue
            sel = rng.child(f"view{i}").integers(0, len(rows), (per_view,))
            rays = RayBatch.from_camera_pixels(view.camera, cols[sel], rows[sel],
                                               tp.bounds, rgb=view.rgb, mask=view.mask)
            color, _ = volume_render(tp, decoder, rays, n_samples, rng=None)
            sq_sum += float(((color.data - rays.gt_rgb) ** 2).sum())
            count += color.data.size
    if count == 0:
        raise ValueError("no foreground pixels in any view")
    mse = sq_sum / count
    return float("inf") if mse == 0 else -10.0 * math.log10(mse)


def _set_requires_grad(module: Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad = flag


def fit_triplane(decoder: DecoderMLP, views: list[PosedView], cfg: FitConfig,
                 rng: RandomSource, bounds=DEFAULT_BOUNDS,
                 channels: int = 6, resolution: int = 32,
                 init: TriplaneParams | None = None):
    """Per-object mode: decoder frozen, one triplane optimized."""
    if not views:
        raise ValueError("no views supplied")
    if any(v.mask is None for v in views):
        raise ValueError("every view needs a mask")
    tp_params = init or TriplaneParams(channels, resolution, resolution,
                                       rng.child("init"), bounds)
    params = list(tp_params.named_parameters().values())
    opt = Adam([{"params": params, "lr": cfg.lr_triplane}])
    _set_requires_grad(decoder, False)
    try:
        history = _run_fit(tp_params, decoder, [views], cfg, rng, opt, params,
                           lam=(cfg.lam_tv, cfg.lam_l2))
    finally:
        _set_requires_grad(decoder, True)
    return tp_params.triplane().detach(), history


def fit_shared(decoder: DecoderMLP, scenes: list[list[PosedView]], cfg: FitConfig,
               rng: RandomSource, bounds=DEFAULT_BOUNDS,
               channels: int = 6, resolution: int = 32):
    """Shared mode: decoder and the subset's triplanes optimized jointly."""
    if not scenes or any(not views for views in scenes):
        raise ValueError("every scene needs at least one view")
    if any(v.mask is None for views in scenes for v in views):
        raise ValueError("every view needs a mask")
    tps = [TriplaneParams(channels, resolution, resolution,
                          rng.child(f"init{i}"), bounds) for i in range(len(scenes))]
    tp_params = [p for tp in tps for p in tp.named_parameters().values()]
    # distinct identifiers per scene
    for i, tp in enumerate(tps):
        for p in tp.named_parameters().values():
            p.name = f"scene{i}.{p.name}"
    dec_params = list(decoder.named_parameters().values())
    opt = Adam([{"params": dec_params, "lr": cfg.lr_decoder},
                {"params": tp_params, "lr": cfg.lr_triplane}])
    lam_tv, lam_l2 = SHARED_MODE_LAMBDAS
    history = _run_fit(tps, decoder, scenes, cfg, rng, opt,
                       dec_params + tp_params, lam=(lam_tv, lam_l2))
    return [tp.triplane().detach() for tp in tps], history


def _run_fit(tp_params, decoder, scenes, cfg, rng, opt, params, lam):
    multi = isinstance(tp_params, list)
    history = {"loss": [], "psnr": []}
    lam_tv, lam_l2 = lam
    for step in range(cfg.steps):
        srng = rng.child(f"step{step}")
        scene_idx = int(srng.integers(0, len(scenes), ())) if multi else 0
        views = scenes[scene_idx] if multi else scenes[0]
        view = views[int(srng.integers(0, len(views), ()))]
        holder = tp_params[scene_idx] if multi else tp_params
        tp = holder.triplane()
        rays = sample_rays(view, cfg.batch_rays, srng.child("rays"), tp.bounds,
                           fg_threshold=cfg.fg_threshold)
        loss, comps = fitting_loss(tp, decoder, rays, lam_tv, lam_l2,
                                   cfg.n_samples, rng=srng.child("jitter"))
        grads = ad.backward(loss)
        opt.step(grads)
        history["loss"].append(comps)
        if (step + 1) % cfg.epoch_steps == 0 or step + 1 == cfg.steps:
            views0 = scenes[0]
            tp0 = (tp_params[0] if multi else tp_params).triplane()
            psnr = foreground_psnr(tp0, decoder, views0,
                                   n_rays=cfg.psnr_rays, n_samples=cfg.psnr_samples)
            history["psnr"].append({"step": step + 1, "psnr": psnr})
    return history
