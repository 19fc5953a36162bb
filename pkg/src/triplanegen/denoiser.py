"""Noise-prediction network over triplanes and the residual refinement module.

The backbone is a U-shaped per-plane convolutional encoder/decoder whose
chosen resolutions insert cross-plane attention blocks (each plane queries
the concatenated three-plane token sequence through one shared attention
module), with a two-branch transformer at the bottleneck: a full-sequence
branch for global context and a per-plane branch that cross-attends to it.
Conditioning (timestep + class) enters through adaptive norm layers.

Every residual branch closes with a zero-initialized projection, so the
network predicts exactly zero noise at initialization and the refinement
module starts as the identity map.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Module, ModuleList, Parameter, RandomSource, Tensor
from .blocks import (AdaptiveNorm, AttentionWeights, ConditionEmbedding,
                     Conv2d, Linear, Mlp, PlanePositionalEmbedding,
                     PlaneResample, merge_planes, multi_head_attention,
                     patchify, split_planes, unpatchify)

CONFIG_FORMAT = "triplane-denoiser-config"
CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent denoiser configuration."""


@dataclass
class DenoiserConfig:
    """Architecture hyperparameters.

    channel_mult entry i scales base_channels at spatial resolution
    resolution/2^i; the last level is the transformer bottleneck.
    attn_resolutions choose where cross-plane attention blocks sit, each
    with its own patch size.
    """

    channels: int = 6            # triplane feature channels
    resolution: int = 32         # triplane W (= H per plane)
    base_channels: int = 32
    channel_mult: tuple = (1, 2, 2)
    attn_resolutions: tuple = (16,)
    patch_sizes: dict = field(default_factory=lambda: {16: 2})
    transformer_patch_size: int = 2
    transformer_layers: int = 4
    heads: int = 2
    cond_dim: int = 128
    num_classes: int = 2
    total_steps: int = 1000

    def level_channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_mult]

    def level_resolutions(self) -> list[int]:
        return [self.resolution >> i for i in range(len(self.channel_mult))]

    def validate(self) -> None:
        if self.channels < 1 or self.resolution < 2 or self.base_channels < 1:
            raise ConfigError("channels, resolution and base_channels must be positive")
        levels = len(self.channel_mult)
        if levels < 1:
            raise ConfigError("need at least one level")
        if self.resolution % (1 << (levels - 1)):
            raise ConfigError(
                f"resolution {self.resolution} not divisible by 2^{levels - 1}")
        res_list = self.level_resolutions()
        if set(self.patch_sizes) != set(self.attn_resolutions):
            raise ConfigError("patch_sizes keys must equal attn_resolutions")
        for r in self.attn_resolutions:
            if r not in res_list:
                raise ConfigError(f"attention resolution {r} not in levels {res_list}")
            ps = self.patch_sizes[r]
            if r % ps:
                raise ConfigError(f"patch size {ps} must divide resolution {r}")
            d = self.level_channels()[res_list.index(r)] * ps * ps
            if d % self.heads:
                raise ConfigError(f"heads {self.heads} must divide token dim {d}")
        bres = res_list[-1]
        if bres % self.transformer_patch_size:
            raise ConfigError(
                f"transformer patch {self.transformer_patch_size} must divide {bres}")
        d = self.level_channels()[-1] * self.transformer_patch_size ** 2
        if d % self.heads:
            raise ConfigError(f"heads {self.heads} must divide core token dim {d}")
        if self.num_classes < 1 or self.total_steps < 1:
            raise ConfigError("num_classes and total_steps must be positive")

    def to_json(self) -> str:
        record = {"format": CONFIG_FORMAT, "version": CONFIG_VERSION}
        record.update(asdict(self))
        record["channel_mult"] = list(self.channel_mult)
        record["attn_resolutions"] = list(self.attn_resolutions)
        record["patch_sizes"] = {str(k): v for k, v in self.patch_sizes.items()}
        return json.dumps(record, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DenoiserConfig":
        record = json.loads(text)
        if record.pop("format", None) != CONFIG_FORMAT:
            raise ConfigError("not a denoiser config document")
        if record.pop("version", None) != CONFIG_VERSION:
            raise ConfigError("unsupported denoiser config version")
        known = set(cls.__dataclass_fields__)
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        record["channel_mult"] = tuple(record["channel_mult"])
        record["attn_resolutions"] = tuple(record["attn_resolutions"])
        record["patch_sizes"] = {int(k): v for k, v in record["patch_sizes"].items()}
        cfg = cls(**record)
        cfg.validate()
        return cfg


def desk_config(channels: int = 6, resolution: int = 32,
                num_classes: int = 2, total_steps: int = 1000) -> DenoiserConfig:
    """Laptop-scale defaults: ~7M parameters."""
    return DenoiserConfig(channels=channels, resolution=resolution,
                          num_classes=num_classes, total_steps=total_steps)


def paper_config(channels: int = 18, resolution: int = 256,
                 num_classes: int = 1, total_steps: int = 1000) -> DenoiserConfig:
    """Published-scale preset: attention at 64/32/16 with patch sizes 8/4/2."""
    return DenoiserConfig(
        channels=channels, resolution=resolution, base_channels=64,
        channel_mult=(1, 1, 2, 2, 4), attn_resolutions=(64, 32, 16),
        patch_sizes={64: 8, 32: 4, 16: 2}, transformer_patch_size=2,
        transformer_layers=4, heads=4, cond_dim=256,
        num_classes=num_classes, total_steps=total_steps)


# -- cross-plane attention ------------------------------------------------


def cross_plane_attention(target: Tensor, all_tokens: Tensor,
                          weights: AttentionWeights, alpha) -> Tensor:
    """Residual cross-plane update for one target plane.

    target: (B, M, D) tokens of the plane acting as query; all_tokens:
    (B, 3M, D) concatenation of every plane's tokens in (xy, yz, xz)
    order; alpha: calibration vector broadcastable to the update.
    Returns target + alpha * MultiHead(target, all_tokens, all_tokens).
    """
    if all_tokens.shape[1] != 3 * target.shape[1]:
        raise ad.ShapeError(
            f"key/value tokens {all_tokens.shape} are not three target planes "
            f"of {target.shape}")
    return target + alpha * multi_head_attention(target, all_tokens, all_tokens, weights)


class CrossPlaneBlock(Module):
    """patchify -> positional embedding -> (adaptive) norm -> shared-weight
    cross-plane attention -> unpatchify, applied to all three planes.

    One attention module serves every target plane; since all planes share
    the key/value sequence, the three per-plane queries are evaluated as a
    single full-sequence attention and split back, which is exactly
    equivalent row-by-row.
    """

    def __init__(self, channels: int, resolution: int, patch_size: int,
                 heads: int, rng: RandomSource, cond_dim: int | None = None,
                 dtype=np.float32):
        super().__init__()
        if resolution % patch_size:
            raise ConfigError(f"patch {patch_size} must divide {resolution}")
        self.channels = channels
        self.patch_size = patch_size
        self.dim = channels * patch_size * patch_size
        tokens = (resolution // patch_size) ** 2
        self.pos = PlanePositionalEmbedding(tokens, self.dim, rng.child("pos"),
                                            dtype=dtype)
        self.attn = AttentionWeights(self.dim, heads, rng.child("attn"), dtype=dtype)
        if cond_dim is None:
            self.norm = None
            self.calibrate = None
            # unconditioned variant (refinement): learned vector, zero start
            self.alpha = Parameter(np.zeros(self.dim), dtype=dtype)
        else:
            self.norm = AdaptiveNorm(self.dim, cond_dim, rng.child("norm"), dtype=dtype)
            self.calibrate = Linear(cond_dim, self.dim, rng.child("cal"),
                                    zero_init=True, dtype=dtype)
            self.alpha = None

    def forward(self, planes: list[Tensor], cond: Tensor | None = None) -> list[Tensor]:
        if len(planes) != 3:
            raise ad.ShapeError(f"expected 3 planes, got {len(planes)}")
        ps = self.patch_size
        w, h = planes[0].shape[2], planes[0].shape[3]
        tokens = self.pos([patchify(p, ps) for p in planes])
        if self.norm is not None:
            if cond is None:
                raise ValueError("conditioned block needs a condition embedding")
            bars = [self.norm(t, cond) for t in tokens]
            alpha = self.calibrate(cond).reshape(cond.shape[0], 1, self.dim)
        else:
            bars = [ad.layer_norm(t) for t in tokens]
            alpha = self.alpha.reshape(1, 1, self.dim)
        full = ad.concat(bars, axis=1)
        att = multi_head_attention(full, full, full, self.attn)
        m = bars[0].shape[1]
        out = [bars[q] + alpha * att[:, q * m:(q + 1) * m, :] for q in range(3)]
        return [unpatchify(t, ps, self.channels, w, h) for t in out]


# -- bottleneck transformer -----------------------------------------------


class TwoBranchLayer(Module):
    """One transformer layer over three plane token sets.

    Left branch runs self-attention and an MLP over the full three-plane
    sequence; the right branch, per plane, runs self-attention, then
    cross-attention into the left branch's output, then an MLP. Every
    residual sum is followed by layer normalization. The per-plane branch
    shares its weights across planes and is evaluated with the planes
    stacked along the batch axis.
    """

    def __init__(self, dim: int, heads: int, rng: RandomSource, dtype=np.float32):
        super().__init__()
        self.left_attn = AttentionWeights(dim, heads, rng.child("left_attn"), dtype=dtype)
        self.left_mlp = Mlp(dim, 2 * dim, rng.child("left_mlp"),
                            zero_init_last=True, dtype=dtype)
        self.self_attn = AttentionWeights(dim, heads, rng.child("self_attn"), dtype=dtype)
        self.cross_attn = AttentionWeights(dim, heads, rng.child("cross_attn"), dtype=dtype)
        self.right_mlp = Mlp(dim, 2 * dim, rng.child("right_mlp"),
                             zero_init_last=True, dtype=dtype)

    def forward(self, planes: list[Tensor]) -> list[Tensor]:
        b, m, _ = planes[0].shape
        full = ad.concat(planes, axis=1)  # (B, 3M, D)
        f1 = ad.layer_norm(full + multi_head_attention(full, full, full, self.left_attn))
        fs = ad.layer_norm(f1 + self.left_mlp(f1))
        # plane-stacked batch: (3B, M, D) queries, (3B, 3M, D) keys/values
        stack = ad.concat(planes, axis=0)
        fstar = ad.layer_norm(stack + multi_head_attention(stack, stack, stack,
                                                           self.self_attn))
        fs3 = ad.concat([fs, fs, fs], axis=0)
        fc = ad.layer_norm(fstar + multi_head_attention(fstar, fs3, fs3,
                                                        self.cross_attn))
        final = ad.layer_norm(fc + self.right_mlp(fc))
        return [final[q * b:(q + 1) * b] for q in range(3)]


class PlaneTransformer(Module):
    """Bottleneck stack: patchify, positional embedding, conditioned input
    norm, N two-branch layers, unpatchify."""

    def __init__(self, channels: int, resolution: int, patch_size: int,
                 layers: int, heads: int, cond_dim: int, rng: RandomSource,
                 dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.patch_size = patch_size
        self.dim = channels * patch_size * patch_size
        tokens = (resolution // patch_size) ** 2
        self.pos = PlanePositionalEmbedding(tokens, self.dim, rng.child("pos"),
                                            dtype=dtype)
        self.norm_in = AdaptiveNorm(self.dim, cond_dim, rng.child("norm_in"),
                                    dtype=dtype)
        self.layers = ModuleList([
            TwoBranchLayer(self.dim, heads, rng.child(f"layer{i}"), dtype=dtype)
            for i in range(layers)
        ])

    def forward(self, planes: list[Tensor], cond: Tensor) -> list[Tensor]:
        ps = self.patch_size
        w, h = planes[0].shape[2], planes[0].shape[3]
        tokens = self.pos([patchify(p, ps) for p in planes])
        tokens = [self.norm_in(t, cond) for t in tokens]
        for layer in self.layers:
            tokens = layer(tokens)
        return [unpatchify(t, ps, self.channels, w, h) for t in tokens]


# -- the denoiser ----------------------------------------------------------


class TriplaneDenoiser(Module):
    """Predicts the noise component of a normalized triplane stack."""

    def __init__(self, cfg: DenoiserConfig, rng: RandomSource, dtype=np.float32):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        chs = cfg.level_channels()
        ress = cfg.level_resolutions()
        levels = len(chs)
        self.cond = ConditionEmbedding(cfg.cond_dim, cfg.num_classes,
                                       cfg.total_steps, rng.child("cond"),
                                       dtype=dtype)
        self.stem = PlaneResample(cfg.channels, chs[0], 1, "down",
                                  rng.child("stem"), dtype=dtype)
        self.downs = ModuleList([
            PlaneResample(chs[i - 1], chs[i], 2, "down", rng.child(f"down{i}"),
                          dtype=dtype)
            for i in range(1, levels)
        ])
        attn_levels = [i for i, r in enumerate(ress) if r in cfg.attn_resolutions]
        self._attn_levels = attn_levels
        self.enc_attn = ModuleList([
            CrossPlaneBlock(chs[i], ress[i], cfg.patch_sizes[ress[i]], cfg.heads,
                            rng.child(f"enc_attn{i}"), cond_dim=cfg.cond_dim,
                            dtype=dtype)
            for i in attn_levels
        ])
        self.core = PlaneTransformer(chs[-1], ress[-1], cfg.transformer_patch_size,
                                     cfg.transformer_layers, cfg.heads,
                                     cfg.cond_dim, rng.child("core"), dtype=dtype)
        self.ups = ModuleList([
            PlaneResample(chs[i + 1], chs[i], 2, "up", rng.child(f"up{i}"),
                          dtype=dtype)
            for i in range(levels - 2, -1, -1)
        ])
        # skip fusion: concatenated channels back down with a 1x1 conv
        self.merges = ModuleList([
            Conv2d(2 * chs[i], chs[i], 1, rng.child(f"merge{i}"), dtype=dtype)
            for i in range(levels - 2, -1, -1)
        ])
        self.dec_attn = ModuleList([
            CrossPlaneBlock(chs[i], ress[i], cfg.patch_sizes[ress[i]], cfg.heads,
                            rng.child(f"dec_attn{i}"), cond_dim=cfg.cond_dim,
                            dtype=dtype)
            for i in attn_levels
        ])
        self.final = Conv2d(chs[0], cfg.channels, 3, rng.child("final"),
                            padding=1, zero_init=True, dtype=dtype)

    def _attn_index(self, level: int) -> int | None:
        try:
            return self._attn_levels.index(level)
        except ValueError:
            return None

    def encode(self, x: Tensor, cond: Tensor):
        """(B, C, W, 3H) -> (bottleneck planes, per-level skip planes)."""
        planes = self.stem(split_planes(x))
        skips = []
        levels = len(self.cfg.channel_mult)
        for i in range(levels):
            if i > 0:
                planes = self.downs[i - 1](planes)
            k = self._attn_index(i)
            if k is not None:
                planes = self.enc_attn[k](planes, cond)
            if i < levels - 1:
                skips.append(planes)
        return planes, skips

    def decode(self, planes: list[Tensor], skips: list[list[Tensor]],
               cond: Tensor) -> Tensor:
        levels = len(self.cfg.channel_mult)
        for j, i in enumerate(range(levels - 2, -1, -1)):
            planes = self.ups[j](planes)
            skip = skips[i]
            planes = [self.merges[j](ad.concat([p, s], axis=1))
                      for p, s in zip(planes, skip)]
            k = self._attn_index(i)
            if k is not None:
                planes = self.dec_attn[k](planes, cond)
        planes = [self.final(p) for p in planes]
        return merge_planes(planes)

    def forward(self, x, t, labels) -> Tensor:
        return self.predict_noise(x, t, labels)

    def predict_noise(self, x, t, labels) -> Tensor:
        """x: (B, C, W, 3H) normalized triplane stack; t, labels: (B,) ints."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float32))
        b, c, w, h3 = x.shape
        if c != self.cfg.channels or w != self.cfg.resolution or h3 != 3 * w:
            raise ad.ShapeError(
                f"input {x.shape} does not match config "
                f"({self.cfg.channels}, {self.cfg.resolution}, "
                f"{3 * self.cfg.resolution})")
        cond = self.cond(t, labels)
        planes, skips = self.encode(x, cond)
        planes = self.core(planes, cond)
        return self.decode(planes, skips, cond)


# -- refinement --------------------------------------------------------------


def _resample_stages(total: int) -> list[int]:
    """Decompose a power-of-two factor into PlaneResample-supported stages."""
    if total < 1 or total & (total - 1):
        raise ConfigError(f"resample factor must be a power of two, got {total}")
    stages = []
    while total > 4:
        stages.append(4)
        total //= 4
    if total > 1:
        stages.append(total)
    return stages


class RefinementModule(Module):
    """Residual cleanup: x + R(x), where R downsamples to a working
    resolution, applies unconditioned cross-plane attention blocks, and
    upsamples back. R's closing convolution is zero-initialized, so the
    module is exactly the identity at initialization."""

    def __init__(self, channels: int, resolution: int, rng: RandomSource,
                 target_resolution: int = 32, patch_size: int = 4,
                 heads: int = 2, blocks: int = 2, dtype=np.float32):
        super().__init__()
        if resolution % target_resolution:
            raise ConfigError(
                f"target resolution {target_resolution} must divide {resolution}")
        if target_resolution % patch_size:
            raise ConfigError(
                f"patch {patch_size} must divide target resolution {target_resolution}")
        dim = channels * patch_size * patch_size
        if dim % heads:
            raise ConfigError(f"heads {heads} must divide token dim {dim}")
        self.channels = channels
        stages = _resample_stages(resolution // target_resolution)
        self.downs = ModuleList([
            PlaneResample(channels, channels, f, "down", rng.child(f"down{i}"),
                          dtype=dtype)
            for i, f in enumerate(stages)
        ])
        self.blocks = ModuleList([
            CrossPlaneBlock(channels, target_resolution, patch_size, heads,
                            rng.child(f"block{i}"), cond_dim=None, dtype=dtype)
            for i in range(blocks)
        ])
        self.ups = ModuleList([
            PlaneResample(channels, channels, f, "up", rng.child(f"up{i}"),
                          dtype=dtype)
            for i, f in enumerate(reversed(stages))
        ])
        self.final = Conv2d(channels, channels, 3, rng.child("final"),
                            padding=1, zero_init=True, dtype=dtype)

    def residual(self, x: Tensor) -> Tensor:
        """R(x) alone, same shape as x."""
        planes = split_planes(x)
        for down in self.downs:
            planes = down(planes)
        for block in self.blocks:
            planes = block(planes)
        for up in self.ups:
            planes = up(planes)
        return merge_planes([self.final(p) for p in planes])

    def forward(self, x) -> Tensor:
        """(B, C, W, 3H) raw triplane stack -> refined stack of equal shape."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float32))
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ad.ShapeError(f"expected (B, {self.channels}, W, 3H), got {x.shape}")
        return x + self.residual(x)
