"""Color discriminator with palette projection conditioning."""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .layers import conv3, linear
from .palette import PaletteGrid


class ColorDiscriminator(nn.Module):
    """Realness critic over (chroma, rgb) pairs fused with the palette.

    A strided convolutional trunk over the 5-channel concatenation of the
    ab map and its RGB rendering is sum-pooled into an embedding g; the
    score is the palette projection (W g) . h plus an optional
    unconditional linear head. The score is exactly linear in the palette
    for fixed images, so palette-independent realness lives entirely in the
    unconditional term.
    """

    def __init__(
        self,
        grid: PaletteGrid,
        widths: tuple[int, ...] = (32, 64, 128, 256),
        unconditional_head: bool = True,
        spectral: bool = True,
    ):
        super().__init__()
        self.grid = grid
        layers = []
        cin = 5
        for cout in widths:
            layers += [conv3(cin, cout, stride=2, spectral=spectral), nn.LeakyReLU(0.2)]
            cin = cout
        self.trunk = nn.Sequential(*layers)
        self.embed_dim = widths[-1]
        self.project = linear(self.embed_dim, grid.n_bins, bias=False, spectral=spectral)
        self.head = linear(self.embed_dim, 1, spectral=spectral) if unconditional_head else None

    def embedding(self, chroma: Tensor, rgb: Tensor) -> Tensor:
        """Sum-pooled trunk features g of shape (B, embed_dim)."""
        if chroma.ndim != 4 or chroma.shape[1] != 2:
            raise ValueError(f"expected chroma (B, 2, H, W), got {tuple(chroma.shape)}")
        if rgb.ndim != 4 or rgb.shape[1] != 3:
            raise ValueError(f"expected rgb (B, 3, H, W), got {tuple(rgb.shape)}")
        if chroma.shape[-2:] != rgb.shape[-2:] or chroma.shape[0] != rgb.shape[0]:
            raise ValueError(
                f"chroma {tuple(chroma.shape)} and rgb {tuple(rgb.shape)} are misaligned"
            )
        return self.trunk(torch.cat((chroma, rgb), dim=1)).sum(dim=(2, 3))

    def forward(self, chroma: Tensor, rgb: Tensor, palette: Tensor) -> Tensor:
        """Per-image realness logits of shape (B,)."""
        if palette.shape[-2:] != (self.grid.n_a, self.grid.n_b):
            raise ValueError(
                f"palette grid {tuple(palette.shape[-2:])} does not match "
                f"model grid {self.grid.n_a}x{self.grid.n_b}"
            )
        g = self.embedding(chroma, rgb)
        score = (self.project(g) * palette.flatten(1)).sum(dim=1)
        if self.head is not None:
            score = score + self.head(g).squeeze(1)
        return score
