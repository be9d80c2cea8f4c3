"""sRGB <-> CIE Lab conversions on normalized tensors.

All images are channel-last torch tensors: RGB ``(..., 3)`` in [0, 1],
grayscale/lightness ``(..., 1)`` in [0, 1] (L* / 100), chroma ``(..., 2)``
in [-1, 1] (a*, b* / 128, clamped). D65 white point, 2-degree observer.
Every function is a pure, differentiable tensor op; identical input bits
give identical output bits.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import Tensor

# sRGB (D65) primaries, Lindbloom constants. Row sums of the forward matrix
# reproduce the white point, so exact grays map to a* = b* = 0 up to rounding.
_RGB_TO_XYZ = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
_XYZ_TO_RGB = (
    (3.2404542, -1.5371385, -0.4985314),
    (-0.9692660, 1.8760108, 0.0415560),
    (0.0556434, -0.2040259, 1.0572252),
)
_WHITE = (0.95047, 1.0, 1.08883)

_LAB_EPS = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0


def _check(t: Tensor, channels: int, name: str) -> None:
    if t.ndim < 2 or t.shape[-1] != channels:
        raise ValueError(f"{name} must have shape (..., {channels}), got {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ValueError(f"{name} contains non-finite values")


def _srgb_to_linear(u: Tensor) -> Tensor:
    u = u.clamp_min(0.0)
    return torch.where(u > 0.04045, ((u + 0.055) / 1.055) ** 2.4, u / 12.92)


def _linear_to_srgb(u: Tensor) -> Tensor:
    u = u.clamp_min(0.0)
    return torch.where(u > 0.0031308, 1.055 * u ** (1.0 / 2.4) - 0.055, 12.92 * u)


def _lab_f(t: Tensor) -> Tensor:
    # cube-root branch evaluated on clamped input so the unused branch
    # never produces NaN gradients
    safe = t.clamp_min(_LAB_EPS)
    return torch.where(t > _LAB_EPS, safe ** (1.0 / 3.0), (_LAB_KAPPA * t + 16.0) / 116.0)


def _lab_f_inv(f: Tensor) -> Tensor:
    cube = f ** 3
    return torch.where(cube > _LAB_EPS, cube, (116.0 * f - 16.0) / _LAB_KAPPA)


def rgb_to_lab(rgb: Tensor) -> tuple[Tensor, Tensor]:
    """Split an sRGB image into normalized lightness and chroma.

    Returns ``(gray, chroma)``: L* / 100 with shape ``(..., 1)`` and
    (a*, b*) / 128 clamped to [-1, 1] with shape ``(..., 2)``.
    """
    _check(rgb, 3, "rgb")
    m = torch.tensor(_RGB_TO_XYZ, dtype=rgb.dtype, device=rgb.device)
    white = torch.tensor(_WHITE, dtype=rgb.dtype, device=rgb.device)
    xyz = _srgb_to_linear(rgb) @ m.T / white
    fx, fy, fz = _lab_f(xyz[..., 0]), _lab_f(xyz[..., 1]), _lab_f(xyz[..., 2])
    l_star = 116.0 * fy - 16.0
    a_star = 500.0 * (fx - fy)
    b_star = 200.0 * (fy - fz)
    gray = (l_star / 100.0).unsqueeze(-1)
    chroma = torch.stack((a_star, b_star), dim=-1) / 128.0
    return gray, chroma.clamp(-1.0, 1.0)


def lab_to_rgb(gray: Tensor, chroma: Tensor) -> Tensor:
    """Recombine normalized lightness and chroma into sRGB in [0, 1].

    Out-of-gamut values are clamped. Differentiable in both inputs, so it
    can sit inside a training graph.
    """
    _check(gray, 1, "gray")
    _check(chroma, 2, "chroma")
    if gray.shape[:-1] != chroma.shape[:-1]:
        raise ValueError(
            f"gray {tuple(gray.shape)} and chroma {tuple(chroma.shape)} are not spatially aligned"
        )
    l_star = gray[..., 0] * 100.0
    a_star = chroma[..., 0] * 128.0
    b_star = chroma[..., 1] * 128.0
    fy = (l_star + 16.0) / 116.0
    fx = fy + a_star / 500.0
    fz = fy - b_star / 200.0
    xyz = torch.stack((_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)), dim=-1)
    white = torch.tensor(_WHITE, dtype=gray.dtype, device=gray.device)
    m = torch.tensor(_XYZ_TO_RGB, dtype=gray.dtype, device=gray.device)
    rgb = _linear_to_srgb((xyz * white) @ m.T)
    return rgb.clamp(0.0, 1.0)


def load_rgb(path: str | Path, dtype: torch.dtype = torch.float32) -> Tensor:
    """Decode a PNG/JPEG file to an (H, W, 3) tensor in [0, 1] (pixel / 255)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return torch.from_numpy(arr).to(dtype)


def save_rgb(path: str | Path, rgb: Tensor) -> None:
    """Write an (H, W, 3) tensor in [0, 1] as 8-bit PNG, rounding half up."""
    _check(rgb, 3, "rgb")
    arr = rgb.detach().to(torch.float64).clamp(0.0, 1.0).numpy()
    quantized = np.floor(arr * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(quantized).save(path, format="PNG")
