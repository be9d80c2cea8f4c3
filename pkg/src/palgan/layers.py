"""Shared network plumbing: spectral normalization and box filtering."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn
from torch.nn.utils import parametrize


class _SpectralNorm(nn.Module):
    """Divide a weight by its power-iteration top singular value estimate.

    u/v are refreshed once per access in training mode only, so evaluation
    forwards are pure functions of the parameters. The division is guarded
    with a small epsilon so an all-zero weight stays zero instead of NaN.
    """

    def __init__(self, weight: Tensor, n_power_iterations: int = 1, eps: float = 1e-12):
        super().__init__()
        self.n_power_iterations = n_power_iterations
        self.eps = eps
        mat = weight.detach().flatten(1)
        u = F.normalize(torch.randn(mat.shape[0], dtype=weight.dtype), dim=0, eps=eps)
        v = F.normalize(torch.randn(mat.shape[1], dtype=weight.dtype), dim=0, eps=eps)
        self.register_buffer("u", u)
        self.register_buffer("v", v)

    def forward(self, weight: Tensor) -> Tensor:
        mat = weight.flatten(1)
        if self.training:
            with torch.no_grad():
                for _ in range(self.n_power_iterations):
                    self.v = F.normalize(mat.T.mv(self.u), dim=0, eps=self.eps)
                    self.u = F.normalize(mat.mv(self.v), dim=0, eps=self.eps)
        sigma = torch.dot(self.u, mat.mv(self.v))
        return weight / (sigma + self.eps)


def spectral_norm(module: nn.Module, enabled: bool = True) -> nn.Module:
    """Attach spectral normalization to ``module.weight`` (no-op if disabled)."""
    if enabled:
        parametrize.register_parametrization(
            module, "weight", _SpectralNorm(module.weight)
        )
    return module


def spectral_sigmas(module: nn.Module) -> dict[str, float]:
    """Exact top singular value of every spectrally normalized effective weight.

    Evaluated without advancing the power iteration; used to audit that
    normalized weights stay near unit spectral norm during training.
    """
    sigmas: dict[str, float] = {}
    was_training = module.training
    module.eval()
    with torch.no_grad():
        for name, sub in module.named_modules():
            if parametrize.is_parametrized(sub, "weight"):
                mat = sub.weight.flatten(1)
                sigmas[name or "."] = torch.linalg.matrix_norm(mat, ord=2).item()
    if was_training:
        module.train()
    return sigmas


def box_filter(x: Tensor, window: int) -> Tensor:
    """Mean filter over a window x window neighborhood with reflect padding.

    Input (B, C, H, W); output has the same shape, defined at every position.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if window > min(x.shape[-2:]):
        raise ValueError(
            f"window {window} exceeds feature map size {tuple(x.shape[-2:])}"
        )
    pad = window // 2
    padded = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    return F.avg_pool2d(padded, kernel_size=window, stride=1)


def conv3(cin: int, cout: int, stride: int = 1, spectral: bool = True) -> nn.Module:
    return spectral_norm(nn.Conv2d(cin, cout, 3, stride=stride, padding=1), spectral)


def conv1(cin: int, cout: int, spectral: bool = True) -> nn.Module:
    return spectral_norm(nn.Conv2d(cin, cout, 1), spectral)


def linear(cin: int, cout: int, bias: bool = True, spectral: bool = True) -> nn.Module:
    return spectral_norm(nn.Linear(cin, cout, bias=bias), spectral)
