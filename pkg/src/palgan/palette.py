"""Differentiable chromatic palette histograms over the ab plane.

A palette is an ``n_a x n_b`` probability grid summarizing an image's color
distribution. The soft variant spreads every pixel's unit mass over bins
with a separable inverse-quadratic kernel evaluated at the bin centers, so
it is differentiable with respect to every chroma value; the hard variant
is the non-differentiable nearest-bin-count oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import Tensor

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class PaletteGrid:
    """Bin geometry of the ab plane: counts per axis plus kernel smoothness.

    Bin centers are uniformly spaced at (2i + 1) / n - 1 over [-1, 1].
    """

    n_a: int = 16
    n_b: int = 16
    sigma: float = 0.1

    def __post_init__(self) -> None:
        if self.n_a < 1 or self.n_b < 1:
            raise ValueError(f"bin counts must be >= 1, got {self.n_a}x{self.n_b}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def n_bins(self) -> int:
        return self.n_a * self.n_b

    def centers_a(self, dtype: torch.dtype = torch.float32) -> Tensor:
        return _centers(self.n_a, dtype)

    def centers_b(self, dtype: torch.dtype = torch.float32) -> Tensor:
        return _centers(self.n_b, dtype)


def _centers(n: int, dtype: torch.dtype) -> Tensor:
    return (2.0 * torch.arange(n, dtype=dtype) + 1.0) / n - 1.0


def _flatten_chroma(chroma: Tensor) -> tuple[Tensor, bool]:
    """(H, W, 2) -> (1, P, 2); (B, H, W, 2) -> (B, P, 2). Returns (flat, batched)."""
    if chroma.ndim == 3 and chroma.shape[-1] == 2:
        flat, batched = chroma.reshape(1, -1, 2), False
    elif chroma.ndim == 4 and chroma.shape[-1] == 2:
        flat, batched = chroma.reshape(chroma.shape[0], -1, 2), True
    else:
        raise ValueError(f"chroma must be (H, W, 2) or (B, H, W, 2), got {tuple(chroma.shape)}")
    if flat.shape[1] == 0:
        raise ValueError("chroma map has no pixels")
    if not torch.isfinite(flat).all():
        raise ValueError("chroma contains non-finite values")
    return flat, batched


def soft_histogram(chroma: Tensor, grid: PaletteGrid) -> Tensor:
    """Kernel-smoothed palette histogram of a chroma map.

    Each pixel contributes mass 1/P spread over the bins by the product of
    per-axis inverse-quadratic kernels 1 / (1 + (|c - center| / sigma)^2),
    normalized so the grid sums to one. Output is (n_a, n_b) for a single
    map, (B, n_a, n_b) for a batch.
    """
    flat, batched = _flatten_chroma(chroma)
    kernel_a = _axis_kernel(flat[..., 0], grid.centers_a(flat.dtype).to(flat.device), grid.sigma)
    kernel_b = _axis_kernel(flat[..., 1], grid.centers_b(flat.dtype).to(flat.device), grid.sigma)
    hist = torch.bmm(kernel_a.transpose(1, 2), kernel_b)
    hist = hist / hist.sum(dim=(1, 2), keepdim=True)
    return hist if batched else hist[0]


def _axis_kernel(values: Tensor, centers: Tensor, sigma: float) -> Tensor:
    # (B, P) x (N,) -> (B, P, N), each pixel row normalized to sum 1
    d = (values.unsqueeze(-1) - centers) / sigma
    k = 1.0 / (1.0 + d * d)
    return k / k.sum(dim=-1, keepdim=True)


def hard_histogram(chroma: Tensor, grid: PaletteGrid) -> Tensor:
    """Nearest-bin-center counting histogram, normalized to sum 1.

    Non-differentiable; serves as the counting oracle for the soft variant.
    Values exactly on a bin edge fall into the upper bin.
    """
    flat, batched = _flatten_chroma(chroma)
    n_pixels = flat.shape[1]
    idx_a = ((flat[..., 0] + 1.0) / 2.0 * grid.n_a).floor().clamp(0, grid.n_a - 1).long()
    idx_b = ((flat[..., 1] + 1.0) / 2.0 * grid.n_b).floor().clamp(0, grid.n_b - 1).long()
    joint = idx_a * grid.n_b + idx_b
    out = torch.stack(
        [torch.bincount(row, minlength=grid.n_bins) for row in joint]
    ).to(chroma.dtype)
    hist = out.reshape(-1, grid.n_a, grid.n_b) / n_pixels
    return hist if batched else hist[0]


def entropy(hist: Tensor) -> Tensor:
    """Shannon entropy -sum(h log h) in nats over the last two dims.

    Zero-weight bins contribute zero via clamping of the log argument.
    """
    if hist.ndim < 2:
        raise ValueError(f"histogram must be at least 2-D, got {tuple(hist.shape)}")
    return -(hist * hist.clamp_min(_LOG_FLOOR).log()).sum(dim=(-2, -1))


def histogram_l1(h1: Tensor, h2: Tensor) -> Tensor:
    """Elementwise L1 distance sum |h1 - h2| over the last two dims."""
    if h1.shape[-2:] != h2.shape[-2:]:
        raise ValueError(
            f"palette grid mismatch: {tuple(h1.shape[-2:])} vs {tuple(h2.shape[-2:])}"
        )
    return (h1 - h2).abs().sum(dim=(-2, -1))


def save_palette(path: str | Path, hist: Tensor, grid: PaletteGrid) -> None:
    """Write a palette as UTF-8 JSON with row-major flat weights."""
    if hist.shape != (grid.n_a, grid.n_b):
        raise ValueError(f"histogram {tuple(hist.shape)} does not match grid {grid.n_a}x{grid.n_b}")
    payload = {
        "n_a": grid.n_a,
        "n_b": grid.n_b,
        "sigma": grid.sigma,
        "weights": [float(w) for w in hist.detach().reshape(-1)],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_palette(path: str | Path) -> tuple[Tensor, PaletteGrid]:
    """Read a palette JSON, validate it sums to 1 within 1e-4, renormalize."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"palette file {path} is not valid JSON: {exc}") from exc
    try:
        n_a, n_b = int(payload["n_a"]), int(payload["n_b"])
        sigma = float(payload["sigma"])
        weights = payload["weights"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"palette file {path} is missing or has malformed fields") from exc
    if len(weights) != n_a * n_b:
        raise ValueError(
            f"palette file {path} has {len(weights)} weights, expected {n_a * n_b}"
        )
    hist = torch.tensor(weights, dtype=torch.float32).reshape(n_a, n_b)
    if (hist < 0).any():
        raise ValueError(f"palette file {path} contains negative weights")
    total = float(hist.sum())
    if not math.isfinite(total) or abs(total - 1.0) > 1e-4:
        raise ValueError(f"palette file {path} weights sum to {total}, expected 1 within 1e-4")
    return hist / total, PaletteGrid(n_a, n_b, sigma)
