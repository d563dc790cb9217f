"""Raster helpers shared by every feature module.

Maps are plain 2-D numpy arrays (rows = y, columns = x).  Color frames are
``(H, W, 3)`` arrays; RGB frames hold 8-bit values in ``[0, 255]``.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

COLOR_SPACES = ("rgb", "yuv", "lab")

# sRGB primaries, D65 white (IEC 61966-2-1)
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def as_map(m, name="map") -> np.ndarray:
    """Validate a raster and return it as a float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name}: expected a non-empty 2-D raster, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = int(np.count_nonzero(~np.isfinite(a)))
        raise ValueError(f"{name}: {bad} non-finite value(s)")
    return a


def as_frame(f, name="frame") -> np.ndarray:
    a = np.asarray(f, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] * a.shape[1] == 0:
        raise ValueError(f"{name}: expected an (H, W, 3) color frame, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite channel values")
    return a


def is_normalized(m, tol=1e-9) -> bool:
    a = np.asarray(m)
    return bool(a.min() >= -tol and a.max() <= 1 + tol)


def normalize01(m) -> np.ndarray:
    """Linearly rescale to ``[0, 1]``; a constant map becomes all zeros."""
    a = as_map(m)
    lo, hi = a.min(), a.max()
    if hi <= lo:
        return np.zeros_like(a)
    out = (a - lo) / (hi - lo)
    # exact endpoints; guards against 1 + ulp from the division
    out[a == hi] = 1.0
    return out


def gaussian_blur(m, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-replicate borders."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = as_map(m)
    if sigma == 0:
        return a.copy()
    return ndimage.gaussian_filter(a, sigma, mode="nearest", truncate=4.0)


def _srgb_to_linear(c):
    c = c / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_xyz(rgb) -> np.ndarray:
    return _srgb_to_linear(np.asarray(rgb, dtype=np.float64)) @ _RGB_TO_XYZ.T


def xyz_to_lab(xyz) -> np.ndarray:
    t = np.asarray(xyz, dtype=np.float64) / D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def rgb_to_yuv(rgb) -> np.ndarray:
    """BT.601 analog YUV; Y keeps the 0..255 scale of the input."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    return np.stack([y, 0.492 * (b - y), 0.877 * (r - y)], axis=-1)


def convert_color(frame, target: str, source: str = "rgb") -> np.ndarray:
    """Convert an 8-bit RGB frame to ``"yuv"`` or ``"lab"``."""
    if source != "rgb" or target not in COLOR_SPACES:
        raise ValueError(f"unsupported conversion {source!r} -> {target!r}")
    f = as_frame(frame)
    if f.min() < 0 or f.max() > 255:
        raise ValueError("RGB frame values must lie in [0, 255]")
    if target == "rgb":
        return f.copy()
    if target == "yuv":
        return rgb_to_yuv(f)
    return xyz_to_lab(rgb_to_xyz(f))


def luminance(frame) -> np.ndarray:
    """BT.601 luma scaled to [0, 1]."""
    return convert_color(frame, "yuv")[..., 0] / 255.0


def sparsity_project(f) -> np.ndarray:
    """Emphasise local maxima: ``exp(f) - mean(f)`` rescaled to ``[0, 1]``.

    The exponential is convex and strictly increasing, so pixel ranking is
    kept while above-average values are stretched apart.  The mean is a
    constant offset that the rescale removes; ``expm1`` is used instead of
    ``exp`` so that tiny values near 0 stay distinguishable.
    """
    a = as_map(f)
    if not is_normalized(a):
        raise ValueError(
            f"sparsity_project expects a map in [0, 1], got range [{a.min():g}, {a.max():g}]"
        )
    phi = np.expm1(a)
    lo, hi = phi.min(), phi.max()
    if hi <= lo:
        return np.zeros_like(a)
    out = (phi - lo) / (hi - lo)
    out[phi == hi] = 1.0
    return out
