"""Palette assignment generator: palette- and latent-conditioned
encoder-decoder that maps grayscale to a chroma map in [-1, 1]."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .attention import ChromaticAttention
from .layers import conv3, linear
from .palette import PaletteGrid


class PaletteNorm(nn.Module):
    """Batch normalization whose affine parameters come from the palette.

    The input is batch-normalized (no learned affine), then scaled and
    shifted per channel with (1 + d_gamma, beta) produced by a single
    fully-connected map over concat(flattened palette, latent code). With
    zeroed map parameters the layer reduces to plain batch normalization.
    """

    def __init__(self, channels: int, n_bins: int, z_dim: int, spectral: bool = True):
        super().__init__()
        self.norm = nn.BatchNorm2d(channels, affine=False)
        self.affine = linear(n_bins + z_dim, 2 * channels, spectral=spectral)

    def forward(self, x: Tensor, palette: Tensor, z: Tensor) -> Tensor:
        cond = torch.cat((palette.flatten(1), z), dim=1)
        d_gamma, beta = self.affine(cond).chunk(2, dim=1)
        x = self.norm(x)
        return x * (1.0 + d_gamma[:, :, None, None]) + beta[:, :, None, None]


class _PNConv(nn.Module):
    """conv -> palette norm -> ReLU, optionally strided or pre-upsampled."""

    def __init__(
        self,
        cin: int,
        cout: int,
        n_bins: int,
        z_dim: int,
        stride: int = 1,
        upsample: bool = False,
        spectral: bool = True,
    ):
        super().__init__()
        self.upsample = upsample
        self.conv = conv3(cin, cout, stride=stride, spectral=spectral)
        self.pn = PaletteNorm(cout, n_bins, z_dim, spectral=spectral)

    def forward(self, x: Tensor, palette: Tensor, z: Tensor) -> Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.relu(self.pn(self.conv(x), palette, z))


class _ResBlock(nn.Module):
    def __init__(self, channels: int, n_bins: int, z_dim: int, spectral: bool = True):
        super().__init__()
        self.conv1 = conv3(channels, channels, spectral=spectral)
        self.pn1 = PaletteNorm(channels, n_bins, z_dim, spectral=spectral)
        self.conv2 = conv3(channels, channels, spectral=spectral)
        self.pn2 = PaletteNorm(channels, n_bins, z_dim, spectral=spectral)

    def forward(self, x: Tensor, palette: Tensor, z: Tensor) -> Tensor:
        y = F.relu(self.pn1(self.conv1(x), palette, z))
        y = self.pn2(self.conv2(y), palette, z)
        return x + y


class AssignmentGenerator(nn.Module):
    """Residual encoder-decoder emitting chroma, conditioned on a palette.

    Every normalization layer is a PaletteNorm fed by (palette, z), so the
    latent code modulates each depth. Chromatic attention is applied once
    at the highest-resolution decoder feature map (half input resolution),
    using the semantic features from the palette generator. The tanh head
    keeps outputs in [-1, 1] by construction.
    """

    def __init__(
        self,
        grid: PaletteGrid,
        semantic_channels: int,
        base_channels: int = 16,
        num_residual_blocks: int = 4,
        z_dim: int = 64,
        use_global: bool = True,
        use_local: bool = True,
        window: int = 3,
        spectral: bool = True,
    ):
        super().__init__()
        self.grid = grid
        self.z_dim = z_dim
        b, n = base_channels, grid.n_bins
        self.stem = _PNConv(1, b, n, z_dim, spectral=spectral)
        self.down1 = _PNConv(b, 2 * b, n, z_dim, stride=2, spectral=spectral)
        self.down2 = _PNConv(2 * b, 4 * b, n, z_dim, stride=2, spectral=spectral)
        self.blocks = nn.ModuleList(
            _ResBlock(4 * b, n, z_dim, spectral=spectral) for _ in range(num_residual_blocks)
        )
        self.up1 = _PNConv(4 * b, 2 * b, n, z_dim, upsample=True, spectral=spectral)
        self.attention = ChromaticAttention(
            2 * b,
            semantic_channels,
            use_global=use_global,
            use_local=use_local,
            window=window,
            spectral=spectral,
        )
        self.up2 = _PNConv(2 * b, b, n, z_dim, upsample=True, spectral=spectral)
        self.head = conv3(b, 2, spectral=spectral)

    def forward(self, gray: Tensor, palette: Tensor, z: Tensor, s: Tensor) -> Tensor:
        """(B, 1, H, W) grayscale to (B, 2, H, W) chroma in [-1, 1]."""
        if gray.ndim != 4 or gray.shape[1] != 1:
            raise ValueError(f"expected gray of shape (B, 1, H, W), got {tuple(gray.shape)}")
        h, w = gray.shape[-2:]
        if h % 16 or w % 16:
            raise ValueError(
                f"input {h}x{w} not divisible by 16; pad to {-(-h // 16) * 16}x{-(-w // 16) * 16}"
            )
        if palette.shape[-2:] != (self.grid.n_a, self.grid.n_b):
            raise ValueError(
                f"palette grid {tuple(palette.shape[-2:])} does not match "
                f"model grid {self.grid.n_a}x{self.grid.n_b}"
            )
        if z.ndim != 2 or z.shape[1] != self.z_dim:
            raise ValueError(f"expected z of shape (B, {self.z_dim}), got {tuple(z.shape)}")
        x = self.stem(gray, palette, z)
        x = self.down1(x, palette, z)
        x = self.down2(x, palette, z)
        for block in self.blocks:
            x = block(x, palette, z)
        x = self.up1(x, palette, z)
        x = self.attention(x, s, gray)
        x = self.up2(x, palette, z)
        return torch.tanh(self.head(x))
