"""Deterministic rasterization of item specs and pixel-level color recovery.

Items are drawn as category-specific polygons on a white background. The
estimator inverts the rendering far enough (dominant hue / saturation /
lightness) that the analytic oracle can also judge *generated* images.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .specs import Category, ItemSpec, Pattern

VALID_RESOLUTIONS = (32, 64)
_SUPERSAMPLE = 4

# Foreground = anything measurably non-white; generated backgrounds hover
# near but not exactly at white, so estimates below are chroma-weighted.
_FG_THRESHOLD = 4.0 / 255.0
_BLANK_FRACTION = 0.01


class RenderConfigError(ValueError):
    """Invalid rendering configuration (e.g. unsupported resolution)."""


class BlankImageError(ValueError):
    """Image has too few non-background pixels to estimate a color."""


def silhouette_polygon(category: Category, shape: tuple[float, float, float]) -> list[tuple[float, float]]:
    """Category silhouette as a polygon in unit coordinates (x right, y down).

    The three shape parameters control aspect ratio, taper, and one
    category-specific accent (sleeve span, handle size, waistband, heel).
    """
    aspect, taper, accent = (float(np.clip(s, 0.0, 1.0)) for s in shape)
    cx = 0.5
    top, bottom = 0.1, 0.9  # item spans 80% of canvas height, centered

    if category == Category.UPPER:
        # Shirt: torso with shoulders wider than hem, plus short sleeves.
        half_sh = 0.18 + 0.14 * aspect
        half_hem = half_sh * (0.55 + 0.4 * (1.0 - taper))
        sleeve = 0.06 + 0.12 * accent
        sleeve_y = top + 0.28 * (bottom - top)
        return [
            (cx - half_sh, top),
            (cx + half_sh, top),
            (cx + half_sh + sleeve, sleeve_y),
            (cx + half_sh * 0.8, sleeve_y + 0.08),
            (cx + half_hem, bottom),
            (cx - half_hem, bottom),
            (cx - half_sh * 0.8, sleeve_y + 0.08),
            (cx - half_sh - sleeve, sleeve_y),
        ]

    if category == Category.BAG:
        # Trapezoid body with a triangular handle cut on top.
        body_top = top + 0.22
        half_top = 0.14 + 0.12 * aspect
        half_bot = half_top * (0.8 + 0.5 * (1.0 - taper))
        handle = 0.08 + 0.1 * accent
        return [
            (cx - handle, top),
            (cx + handle, top),
            (cx + handle * 0.55, body_top),
            (cx + half_top, body_top),
            (cx + half_bot, bottom),
            (cx - half_bot, bottom),
            (cx - half_top, body_top),
            (cx - handle * 0.55, body_top),
        ]

    if category == Category.LOWER:
        # Pants: waistband splitting into two tapered legs.
        half_waist = 0.14 + 0.1 * aspect
        leg_w = half_waist * (0.45 + 0.4 * (1.0 - taper))
        crotch_y = top + (0.25 + 0.15 * accent) * (bottom - top)
        inner = max(half_waist - 2 * leg_w, 0.015)
        return [
            (cx - half_waist, top),
            (cx + half_waist, top),
            (cx + half_waist, crotch_y),
            (cx + inner + leg_w, bottom),
            (cx + inner, bottom),
            (cx + inner * 0.4, crotch_y + 0.06),
            (cx - inner * 0.4, crotch_y + 0.06),
            (cx - inner, bottom),
            (cx - inner - leg_w, bottom),
            (cx - half_waist, crotch_y),
        ]

    # Shoe: side profile with an ankle shaft and a toe box.
    shaft_h = 0.25 + 0.3 * taper
    shaft_top = bottom - (bottom - top) * shaft_h - 0.18
    length = 0.3 + 0.18 * aspect
    heel = 0.04 + 0.1 * accent
    sole_y = bottom - heel
    return [
        (cx - length, bottom),
        (cx - length, shaft_top),
        (cx - length + 0.16, shaft_top),
        (cx - length + 0.2, sole_y - 0.1),
        (cx + length * 0.6, sole_y - 0.06),
        (cx + length, sole_y),
        (cx + length, bottom),
    ]


def _hsl_to_rgb(hue: float, saturation: float, lightness: float) -> np.ndarray:
    r, g, b = colorsys.hls_to_rgb((hue % 360.0) / 360.0, lightness, saturation)
    return np.array([r, g, b], dtype=np.float64)


def silhouette_mask(spec: ItemSpec, resolution: int) -> np.ndarray:
    """Boolean silhouette mask at the requested resolution (no supersampling)."""
    if resolution not in VALID_RESOLUTIONS:
        raise RenderConfigError(f"resolution must be one of {VALID_RESOLUTIONS}, got {resolution}")
    poly = silhouette_polygon(spec.category, spec.shape)
    img = Image.new("L", (resolution, resolution), 0)
    ImageDraw.Draw(img).polygon([(x * resolution, y * resolution) for x, y in poly], fill=255)
    return np.asarray(img) > 127


def render_item(spec: ItemSpec, resolution: int) -> np.ndarray:
    """Render a spec to a float32 HxWx3 image in [-1, 1], white background.

    Rendering is supersampled then box-downsampled; all blending moves pixels
    toward white or black only, so per-pixel hue is preserved exactly.
    """
    if resolution not in VALID_RESOLUTIONS:
        raise RenderConfigError(f"resolution must be one of {VALID_RESOLUTIONS}, got {resolution}")
    size = resolution * _SUPERSAMPLE
    poly = silhouette_polygon(spec.category, spec.shape)
    mask_img = Image.new("L", (size, size), 0)
    ImageDraw.Draw(mask_img).polygon([(x * size, y * size) for x, y in poly], fill=255)
    mask = np.asarray(mask_img) > 127

    rgb = _hsl_to_rgb(spec.hue, spec.saturation, spec.lightness)
    canvas = np.ones((size, size, 3), dtype=np.float64)
    canvas[mask] = rgb

    if spec.pattern != Pattern.SOLID:
        yy, xx = np.mgrid[0:size, 0:size]
        if spec.pattern == Pattern.STRIPES:
            period = max(size // 8, 2)
            dark = ((yy // (period // 2)) % 2 == 0) & mask
        else:  # DOTS
            period = max(size // 6, 2)
            r2 = (period * 0.28) ** 2
            dy = (yy % period) - period / 2.0
            dx = (xx % period) - period / 2.0
            dark = (dy * dy + dx * dx <= r2) & mask
        canvas[dark] *= 0.6  # darken toward black; hue unchanged

    out = canvas.reshape(resolution, _SUPERSAMPLE, resolution, _SUPERSAMPLE, 3).mean(axis=(1, 3))
    return (out * 2.0 - 1.0).astype(np.float32)


def _rgb_to_hsl_arrays(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB [0,1] -> (hue degrees, saturation, lightness, chroma)."""
    cmax = rgb.max(axis=-1)
    cmin = rgb.min(axis=-1)
    chroma = cmax - cmin
    light = (cmax + cmin) / 2.0

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.where(chroma > 0, chroma, 1.0)
    hue = np.where(
        cmax == r,
        ((g - b) / safe) % 6.0,
        np.where(cmax == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(chroma > 0, hue * 60.0, 0.0) % 360.0

    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.where(denom > 1e-12, chroma / np.maximum(denom, 1e-12), 0.0)
    return hue, np.clip(sat, 0.0, 1.0), light, chroma


@dataclass(frozen=True)
class ColorEstimate:
    """Dominant-color recovery from an item image (pattern/shape left unset)."""

    category: Category
    hue: float
    saturation: float
    lightness: float


def estimate_spec(image: np.ndarray, category: Category) -> ColorEstimate:
    """Chroma-weighted dominant HSL color of the non-background pixels."""
    rgb = (np.asarray(image, dtype=np.float64) + 1.0) / 2.0
    rgb = np.clip(rgb, 0.0, 1.0)
    dist = np.abs(1.0 - rgb).max(axis=-1)
    fg = dist > _FG_THRESHOLD
    if fg.mean() < _BLANK_FRACTION:
        raise BlankImageError(
            f"only {fg.mean() * 100:.2f}% of pixels differ from the background"
        )

    hue, sat, light, chroma = _rgb_to_hsl_arrays(rgb)
    w = np.where(fg, chroma, 0.0)
    total = w.sum()
    if total < 1e-9:
        # Foreground exists but is achromatic (gray item): unweighted fallback.
        w = fg.astype(np.float64)
        total = w.sum()

    rad = np.deg2rad(hue)
    mean_sin = (np.sin(rad) * w).sum() / total
    mean_cos = (np.cos(rad) * w).sum() / total
    mean_hue = float(np.rad2deg(np.arctan2(mean_sin, mean_cos))) % 360.0
    return ColorEstimate(
        category=category,
        hue=mean_hue,
        saturation=float((sat * w).sum() / total),
        lightness=float((light * w).sum() / total),
    )
