"""Network definitions: style-based generator, outfit encoder, discriminators,
compatibility booster backbone, and the small category classifier used as the
evaluation feature extractor.

All modules are deliberately small (CPU desk scale) and deterministic: the
synthesis path has no per-layer noise injection, so images are pure functions
of the latent code once parameters are fixed.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

W_DIM = 512
LRELU_SLOPE = 0.2


def _check_finite(name: str, x: torch.Tensor) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"non-finite values in {name}")


class PixelNorm(nn.Module):
    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


class MappingNetwork(nn.Module):
    """z -> w: pixel norm, 4 fully-connected layers with leaky ReLU, pixel norm.

    The output norm pins w to a fixed RMS scale. Without it the mapping can
    inflate w without bound (demodulation cancels global style scale inside
    the synthesis blocks but not in to_rgb), which saturates the output tanh
    and kills generator gradients; it also lets the latent discriminator
    separate real from encoded codes by norm alone.
    """

    def __init__(self, w_dim: int = W_DIM, n_layers: int = 4):
        super().__init__()
        self.w_dim = w_dim
        self.norm = PixelNorm()
        self.layers = nn.ModuleList(nn.Linear(w_dim, w_dim) for _ in range(n_layers))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        _check_finite("z", z)
        x = self.norm(z)
        for layer in self.layers:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
        return self.norm(x)


class ModulatedConv2d(nn.Module):
    """StyleGAN2-style weight modulation (non-fused path) with optional demodulation."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, w_dim: int = W_DIM, demodulate: bool = True):
        super().__init__()
        self.demodulate = demodulate
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel) * (1.0 / math.sqrt(in_ch * kernel * kernel)))
        self.affine = nn.Linear(w_dim, in_ch)
        # styles start near 1 but already depend on w, so even an untrained
        # synthesis network responds to the latent code
        nn.init.normal_(self.affine.weight, std=0.05)
        nn.init.ones_(self.affine.bias)
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        style = self.affine(w)  # (B, in_ch)
        x = x * style[:, :, None, None]
        out = F.conv2d(x, self.weight, padding=self.padding)
        if self.demodulate:
            # per-sample, per-output-channel norm of the modulated kernel
            w2 = self.weight.pow(2).sum(dim=(2, 3))  # (out, in)
            sigma = torch.einsum("oi,bi->bo", w2, style.pow(2))
            out = out * torch.rsqrt(sigma + 1e-8)[:, :, None, None]
        return out


def _synthesis_channels(resolution: int, cmax: int = 96) -> dict[int, int]:
    table = {4: cmax, 8: cmax, 16: max(cmax // 2, 16), 32: max(cmax // 2, 16), 64: max(cmax // 3, 16)}
    return {r: c for r, c in table.items() if r <= resolution}


class SynthesisNetwork(nn.Module):
    """w -> image: learned 4x4 constant, style-modulated conv blocks, tanh output."""

    def __init__(self, resolution: int, w_dim: int = W_DIM, cmax: int = 96):
        super().__init__()
        if resolution & (resolution - 1) or resolution < 8:
            raise ValueError(f"resolution must be a power of two >= 8, got {resolution}")
        self.resolution = resolution
        channels = _synthesis_channels(resolution, cmax)
        self.const = nn.Parameter(torch.randn(1, channels[4], 4, 4))
        self.convs = nn.ModuleList()
        self.biases = nn.ParameterList()
        res, in_ch = 4, channels[4]
        self.convs.append(ModulatedConv2d(in_ch, in_ch, 3, w_dim))
        self.biases.append(nn.Parameter(torch.zeros(in_ch)))
        self._upsample = [False]
        while res < resolution:
            res *= 2
            out_ch = channels[res]
            self.convs.append(ModulatedConv2d(in_ch, out_ch, 3, w_dim))
            self.biases.append(nn.Parameter(torch.zeros(out_ch)))
            self._upsample.append(True)
            in_ch = out_ch
        self.to_rgb = ModulatedConv2d(in_ch, 3, 1, w_dim, demodulate=False)
        self.rgb_bias = nn.Parameter(torch.zeros(3))

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        _check_finite("w", w)
        x = self.const.expand(w.shape[0], -1, -1, -1)
        for conv, bias, up in zip(self.convs, self.biases, self._upsample):
            if up:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.leaky_relu(conv(x, w) + bias[None, :, None, None], LRELU_SLOPE)
        return torch.tanh(self.to_rgb(x, w) + self.rgb_bias[None, :, None, None])


def _conv_stack(in_ch: int, resolution: int, widths: tuple[int, ...]) -> tuple[nn.ModuleList, int]:
    """Stride-2 convs from `resolution` down to 4x4."""
    n = int(math.log2(resolution)) - 2
    if n < 1:
        raise ValueError(f"resolution {resolution} too small for a conv stack")
    layers = nn.ModuleList()
    ch = in_ch
    for i in range(n):
        out = widths[min(i, len(widths) - 1)]
        layers.append(nn.Conv2d(ch, out, 3, stride=2, padding=1))
        ch = out
    return layers, ch


class OutfitEncoder(nn.Module):
    """Channel-concatenated outfit stack (4 items x 3 channels) -> one w code."""

    def __init__(self, resolution: int, in_channels: int = 12, w_dim: int = W_DIM,
                 widths: tuple[int, ...] = (48, 96, 128, 128)):
        super().__init__()
        self.resolution = resolution
        self.in_channels = in_channels
        self.w_dim = w_dim
        self.convs, ch = _conv_stack(in_channels, resolution, widths)
        self.fc = nn.Linear(ch * 16, w_dim)
        self.norm = PixelNorm()

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        if stack.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels}-channel stack, got {stack.shape[1]}")
        x = stack
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
        # same fixed-RMS code manifold the mapping network emits
        return self.norm(self.fc(x.flatten(1)))


class LatentDiscriminator(nn.Module):
    """Four fully-connected layers over w; leaky ReLU except last; sigmoid output."""

    def __init__(self, w_dim: int = W_DIM):
        super().__init__()
        self.layers = nn.ModuleList([
            nn.Linear(w_dim, 512),
            nn.Linear(512, 256),
            nn.Linear(256, 64),
            nn.Linear(64, 1),
        ])

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        x = w
        for layer in self.layers[:-1]:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
        return torch.sigmoid(self.layers[-1](x)).squeeze(-1)


class ImageDiscriminator(nn.Module):
    """Image-space critic used only while pre-training the category GANs (logit output)."""

    def __init__(self, resolution: int, widths: tuple[int, ...] = (48, 96, 128, 128)):
        super().__init__()
        self.convs, ch = _conv_stack(3, resolution, widths)
        self.fc = nn.Linear(ch * 16, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
        return self.fc(x.flatten(1)).squeeze(-1)


class BoosterBackbone(nn.Module):
    """Item image -> 128-d embedding; intermediate taps double as perceptual features."""

    def __init__(self, resolution: int, feature_dim: int = 128,
                 widths: tuple[int, ...] = (24, 48, 96, 96)):
        super().__init__()
        self.resolution = resolution
        self.feature_dim = feature_dim
        self.convs, ch = _conv_stack(3, resolution, widths)
        self.fc = nn.Linear(ch * 16, feature_dim)

    def taps(self, x: torch.Tensor) -> list[torch.Tensor]:
        outs = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            outs.append(x)
        return outs

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.taps(x)[-1].flatten(1))


class CategoryClassifier(nn.Module):
    """Small item classifier; penultimate features feed the Frechet-distance metric."""

    def __init__(self, resolution: int, feature_dim: int = 64, n_classes: int = 4,
                 widths: tuple[int, ...] = (24, 48, 64, 64)):
        super().__init__()
        self.resolution = resolution
        self.feature_dim = feature_dim
        self.convs, ch = _conv_stack(3, resolution, widths)
        self.fc1 = nn.Linear(ch * 16, feature_dim)
        self.fc2 = nn.Linear(feature_dim, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
        return F.leaky_relu(self.fc1(x.flatten(1)), LRELU_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.features(x))
