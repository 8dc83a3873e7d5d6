"""Mutual modulation fusion of the local and global feature maps.

Each output pixel of one branch is rebuilt as a convex combination of its
own n x n neighborhood, weighted by softmax similarity between those
neighbors and the *other* branch's center pixel. Two synchronous routes run
with the roles swapped, and the two modulated maps are then combined along
the channel axis and projected back to the branch width so downstream heads
never see the fusion choice.

``extract_neighborhood`` and ``modulation_weights`` are the per-pixel scalar
reference path; ``modulated_fuse`` is the vectorized, differentiable
equivalent and is tested against the scalar loop.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    Module,
    Tensor,
    concat,
    conv2d,
    glorot_uniform,
    mul,
    reduce_sum,
    reshape,
    softmax,
    unfold_neighborhoods,
)
from ..errors import ConfigError, DimensionError


def extract_neighborhood(feature_map: np.ndarray, i: int, j: int, window: int) -> np.ndarray:
    """Row-major (window^2, c) patch around pixel (i, j) of a (c,h,w) map.

    Out-of-bounds slots replicate the nearest edge pixel.
    """
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"neighborhood window must be odd and positive, got {window}")
    feature_map = np.asarray(feature_map)
    if feature_map.ndim != 3:
        raise DimensionError(f"expected a (c,h,w) map, got shape {feature_map.shape}")
    c, h, w = feature_map.shape
    p = window // 2
    rows = np.clip(np.arange(i - p, i + p + 1), 0, h - 1)
    cols = np.clip(np.arange(j - p, j + p + 1), 0, w - 1)
    patch = feature_map[:, rows[:, None], cols[None, :]]
    return patch.reshape(c, window * window).T.copy()


def modulation_weights(center: np.ndarray, neighborhood: np.ndarray) -> np.ndarray:
    """Softmax over per-slot channel dot products with the center vector."""
    center = np.asarray(center, dtype=np.float64)
    neighborhood = np.asarray(neighborhood, dtype=np.float64)
    if neighborhood.ndim != 2 or center.ndim != 1 or neighborhood.shape[1] != center.shape[0]:
        raise DimensionError(
            f"expected (n^2,c) neighborhood and (c,) center, got {neighborhood.shape} and {center.shape}"
        )
    scores = neighborhood @ center
    scores -= scores.max()
    e = np.exp(scores)
    return e / e.sum()


def modulation_weight_map(source: Tensor, guide: Tensor, window: int) -> Tensor:
    """Per-pixel filter weights, shape (n, window^2, h, w); slots sum to 1."""
    _check_pair(source, guide)
    b, c, h, w = source.shape
    neighbors = unfold_neighborhoods(source, window)
    center = reshape(guide, (b, 1, c, h, w))
    scores = reduce_sum(mul(neighbors, center), axis=2)
    return softmax(scores, axis=1)


def modulated_fuse(source: Tensor, guide: Tensor, window: int) -> Tensor:
    """Rebuild each source pixel from its neighborhood, guided by the other map."""
    _check_pair(source, guide)
    b, c, h, w = source.shape
    neighbors = unfold_neighborhoods(source, window)
    weights = modulation_weight_map(source, guide, window)
    weighted = mul(neighbors, reshape(weights, (b, window * window, 1, h, w)))
    return reduce_sum(weighted, axis=1)


def local_to_global_fuse(f_local: Tensor, f_global: Tensor, window: int) -> Tensor:
    """Local neighborhoods re-weighted by the global center pixel."""
    return modulated_fuse(f_local, f_global, window)


def global_to_local_fuse(f_global: Tensor, f_local: Tensor, window: int) -> Tensor:
    """Global neighborhoods re-weighted by the local center pixel."""
    return modulated_fuse(f_global, f_local, window)


def _check_pair(a: Tensor, b: Tensor) -> None:
    if a.ndim != 4 or b.ndim != 4:
        raise DimensionError(f"fusion expects (n,c,h,w) maps, got {a.shape} and {b.shape}")
    if a.shape != b.shape:
        raise DimensionError(f"fusion inputs must match, got {a.shape} and {b.shape}")


class MutualModulationFusion(Module):
    """The two modulation routes plus the channel combine and 1x1 projection."""

    def __init__(self, rng: np.random.Generator, channels: int, window: int = 3, mode: str = "concat", dtype=None):
        if window % 2 == 0 or window < 1:
            raise ConfigError(f"fusion window must be odd and positive, got {window}")
        if mode not in ("concat", "add"):
            raise ConfigError(f"unknown fusion mode {mode!r}")
        self.window = window
        self.mode = mode
        in_channels = 2 * channels if mode == "concat" else channels
        # no projection bias: the heatmap head normalizes each channel map to
        # zero mean, so a per-channel constant offset could never act
        self.proj_weight = glorot_uniform(rng, (channels, in_channels, 1, 1), in_channels, channels, dtype=dtype)

    def forward(self, f_local: Tensor, f_global: Tensor) -> Tensor:
        updated_local = local_to_global_fuse(f_local, f_global, self.window)
        updated_global = global_to_local_fuse(f_global, f_local, self.window)
        if self.mode == "concat":
            combined = concat([updated_local, updated_global], axis=1)
        else:
            combined = updated_local + updated_global
        return conv2d(combined, self.proj_weight)


class ConcatFusion(Module):
    """Plain channel concatenation + the same 1x1 projection (ablation path)."""

    def __init__(self, rng: np.random.Generator, channels: int, dtype=None):
        self.proj_weight = glorot_uniform(rng, (channels, 2 * channels, 1, 1), 2 * channels, channels, dtype=dtype)

    def forward(self, f_local: Tensor, f_global: Tensor) -> Tensor:
        _check_pair(f_local, f_global)
        return conv2d(concat([f_local, f_global], axis=1), self.proj_weight)
