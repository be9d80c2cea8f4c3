"""Chromatic attention: semantic global interaction fused with a
guided-filter-style local delineation, added back to the input feature map
as a residual."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .layers import box_filter, conv1, conv3


class GlobalInteraction(nn.Module):
    """Reconstruct each coarse-grid feature as a semantic-similarity-weighted
    sum of all others.

    Attention runs at the semantic map's native resolution r x r: keys and
    queries are 1x1 projections of the semantic features, compared by cosine
    similarity and softmaxed per row; values are a 1x1 projection of the
    input features pooled to the attention grid. The result is upsampled
    bilinearly back to the input resolution.
    """

    def __init__(self, channels: int, semantic_channels: int, spectral: bool = True):
        super().__init__()
        self.key = conv1(semantic_channels, semantic_channels, spectral)
        self.query = conv1(semantic_channels, semantic_channels, spectral)
        self.value = conv1(channels, channels, spectral)

    def attention_weights(self, s: Tensor) -> Tensor:
        """Row-stochastic (B, r^2, r^2) attention from semantic features."""
        k = F.normalize(self.key(s).flatten(2), dim=1)
        q = F.normalize(self.query(s).flatten(2), dim=1)
        return torch.softmax(torch.einsum("bcp,bcq->bpq", k, q), dim=-1)

    def forward(self, f: Tensor, s: Tensor) -> Tensor:
        if not torch.isfinite(f).all() or not torch.isfinite(s).all():
            raise ValueError("global interaction received non-finite features")
        if s.shape[-2] > f.shape[-2] or s.shape[-1] > f.shape[-1]:
            raise ValueError(
                f"semantic grid {tuple(s.shape[-2:])} finer than features {tuple(f.shape[-2:])}"
            )
        r = s.shape[-2:]
        weights = self.attention_weights(s)
        values = self.value(F.adaptive_avg_pool2d(f, r)).flatten(2)
        out = torch.einsum("bpq,bcq->bcp", weights, values)
        out = out.reshape(f.shape[0], f.shape[1], *r)
        return F.interpolate(out, size=f.shape[-2:], mode="bilinear", align_corners=False)


class LocalDelineation(nn.Module):
    """Map intensity to features through a learned local affine transform.

    Per position and channel, A = psi(cov(F, L) / (var(L) + eps)) and
    B = mean(F) - A * mean(L) with box-filter statistics, then
    F_local = A * L + B -- the guided-filter construction with a small
    learned net psi on the slope. ``transform=False`` makes psi the
    identity, which recovers any channel-wise affine F = c*L + d exactly
    (up to the eps regularizer).
    """

    def __init__(
        self,
        channels: int,
        window: int = 3,
        eps: float = 1e-4,
        transform: bool = True,
        spectral: bool = True,
    ):
        super().__init__()
        self.window = window
        self.eps = eps
        if transform:
            self.transform: nn.Module | None = nn.Sequential(
                conv1(channels, channels, spectral),
                nn.LeakyReLU(0.2),
                conv1(channels, channels, spectral),
            )
        else:
            self.transform = None

    def forward(self, gray: Tensor, f: Tensor) -> Tensor:
        if gray.shape[-2:] != f.shape[-2:]:
            gray = F.interpolate(gray, size=f.shape[-2:], mode="bilinear", align_corners=False)
        mean_l = box_filter(gray, self.window)
        mean_f = box_filter(f, self.window)
        cov = box_filter(f * gray, self.window) - mean_f * mean_l
        var = box_filter(gray * gray, self.window) - mean_l * mean_l
        a = cov / (var + self.eps)
        if self.transform is not None:
            a = self.transform(a)
        b = mean_f - a * mean_l
        return a * gray + b


class ChromaticAttention(nn.Module):
    """Residual fusion of the global and local branches onto the features.

    Output = F + fuse(concat(branches)); with every fusion parameter at
    zero the module is the identity on F. Either branch can be disabled
    for ablations; with both disabled the module passes F through.
    """

    def __init__(
        self,
        channels: int,
        semantic_channels: int,
        use_global: bool = True,
        use_local: bool = True,
        window: int = 3,
        eps: float = 1e-4,
        spectral: bool = True,
    ):
        super().__init__()
        self.global_branch = (
            GlobalInteraction(channels, semantic_channels, spectral) if use_global else None
        )
        self.local_branch = (
            LocalDelineation(channels, window, eps, transform=True, spectral=spectral)
            if use_local
            else None
        )
        n_branches = int(use_global) + int(use_local)
        if n_branches:
            self.fuse: nn.Module | None = nn.Sequential(
                conv3(n_branches * channels, channels, spectral=spectral),
                nn.LeakyReLU(0.2),
                conv3(channels, channels, spectral=spectral),
            )
        else:
            self.fuse = None

    def forward(self, f: Tensor, s: Tensor, gray: Tensor) -> Tensor:
        parts = []
        if self.global_branch is not None:
            parts.append(self.global_branch(f, s))
        if self.local_branch is not None:
            parts.append(self.local_branch(gray, f))
        if not parts:
            return f
        assert self.fuse is not None
        return f + self.fuse(torch.cat(parts, dim=1))
