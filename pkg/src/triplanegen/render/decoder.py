"""Shared MLP decoder: triplane features (+ encoded view direction) to
(color, density). Density never sees the direction, so it is a function
of position alone.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Module, RandomSource, Tensor
from ..blocks import Linear


def positional_encode(d: np.ndarray, num_freqs: int) -> np.ndarray:
    """(N, 3) unit directions -> (N, 3 + 6*num_freqs) frequency features.

    Layout: [d, sin(2^0 pi d), cos(2^0 pi d), ..., sin(2^(L-1) pi d), cos(...)].
    """
    d = np.asarray(d)
    parts = [d]
    for k in range(num_freqs):
        ang = (2.0**k) * np.pi * d
        parts.append(np.sin(ang))
        parts.append(np.cos(ang))
    return np.concatenate(parts, axis=-1)


def encoding_dim(num_freqs: int) -> int:
    return 3 + 6 * num_freqs


class DecoderMLP(Module):
    """Trunk of ReLU layers on 3C features; softplus density head; sigmoid
    color head that additionally consumes the encoded direction."""

    def __init__(self, feature_dim: int, rng: RandomSource, width: int = 64,
                 depth: int = 4, num_freqs: int = 4, dtype=np.float32):
        super().__init__()
        self.num_freqs = num_freqs
        dims = [feature_dim] + [width] * depth
        self.trunk = ad.ModuleList([
            Linear(dims[i], dims[i + 1], rng.child(f"trunk{i}"), dtype=dtype)
            for i in range(depth)
        ])
        self.density_head = Linear(width, 1, rng.child("density"), dtype=dtype)
        self.color_in = Linear(width + encoding_dim(num_freqs), width,
                               rng.child("color_in"), dtype=dtype)
        self.color_out = Linear(width, 3, rng.child("color_out"), dtype=dtype)

    def _trunk(self, feats: Tensor) -> Tensor:
        h = feats
        for layer in self.trunk:
            h = ad.relu(layer(h))
        return h

    def density(self, feats: Tensor) -> Tensor:
        """(N, 3C) features -> (N,) nonnegative density."""
        h = self._trunk(feats)
        return ad.softplus(self.density_head(h)).reshape(h.shape[0])

    def forward(self, feats: Tensor, dirs: np.ndarray, dirs_encoded: np.ndarray | None = None):
        """(N, 3C) features + (N, 3) unit dirs -> ((N, 3) rgb, (N,) density).

        Callers rendering many samples along shared rays can pass the
        frequency encoding precomputed (dirs is then ignored).
        """
        h = self._trunk(feats)
        sigma = ad.softplus(self.density_head(h)).reshape(h.shape[0])
        if dirs_encoded is None:
            dirs_encoded = positional_encode(np.asarray(dirs, dtype=np.float32),
                                             self.num_freqs)
        ch = ad.relu(self.color_in(ad.concat([h, Tensor(dirs_encoded)], axis=1)))
        rgb = ad.sigmoid(self.color_out(ch))
        return rgb, sigma
