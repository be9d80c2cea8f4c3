"""Palette generator: grayscale in, predicted palette histogram plus the
semantic feature map consumed by chromatic attention."""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .layers import conv3, linear
from .palette import PaletteGrid


class PaletteGenerator(nn.Module):
    """Convolutional encoder with an MLP head emitting a palette distribution.

    Five convolution blocks (all but the last stride 2, so the deepest
    feature map sits at 1/16 input resolution), global average pooling, a
    two-layer MLP to one logit per bin, sigmoid, and renormalization so the
    output always sums to one for any parameters. The deepest pre-pooling
    feature map is returned as the semantic features.
    """

    def __init__(
        self,
        grid: PaletteGrid,
        widths: tuple[int, ...] = (32, 64, 128, 256, 128),
        mlp_hidden: int = 256,
        spectral: bool = True,
    ):
        super().__init__()
        if len(widths) < 2:
            raise ValueError("need at least two encoder widths")
        self.grid = grid
        self.downsample_factor = 2 ** (len(widths) - 1)
        blocks = []
        cin = 1
        for i, cout in enumerate(widths):
            stride = 2 if i < len(widths) - 1 else 1
            blocks += [conv3(cin, cout, stride=stride, spectral=spectral), nn.LeakyReLU(0.2)]
            cin = cout
        self.encoder = nn.Sequential(*blocks)
        self.head = nn.Sequential(
            linear(widths[-1], mlp_hidden, spectral=spectral),
            nn.LeakyReLU(0.2),
            linear(mlp_hidden, grid.n_bins, spectral=spectral),
        )

    @property
    def semantic_channels(self) -> int:
        return self.encoder[-2].out_channels

    def forward(self, gray: Tensor) -> tuple[Tensor, Tensor]:
        """(B, 1, H, W) -> palette (B, n_a, n_b) summing to 1, features (B, C, H/16, W/16)."""
        if gray.ndim != 4 or gray.shape[1] != 1:
            raise ValueError(f"expected gray of shape (B, 1, H, W), got {tuple(gray.shape)}")
        h, w = gray.shape[-2:]
        d = self.downsample_factor
        if h % d or w % d:
            raise ValueError(
                f"input {h}x{w} not divisible by {d}; pad to "
                f"{-(-h // d) * d}x{-(-w // d) * d}"
            )
        features = self.encoder(gray)
        logits = self.head(features.mean(dim=(2, 3)))
        weights = torch.sigmoid(logits)
        palette = weights / weights.sum(dim=1, keepdim=True)
        return palette.reshape(-1, self.grid.n_a, self.grid.n_b), features
