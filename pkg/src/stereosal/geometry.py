"""Physical viewing model: fovea mask, disparity to depth, comfort penalty."""
from __future__ import annotations

import json
import math
import numbers
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .imaging import as_map

DEPTH_FLOOR = 1e-3
COMFORT_ARCMIN = 60.0


@dataclass(frozen=True)
class ViewingGeometry:
    """Display and viewer setup. Distances in cm, resolutions in pixels."""

    z_observer: float = 183.0
    screen_w: float = 101.8
    screen_h: float = 57.25
    res_w: int = 1920
    res_h: int = 1080
    l_eyes: float = 6.3
    alpha: float = 1.0  # half-angle of highest acuity, degrees
    frame_rate: float = 30.0
    aspect_tolerance: float = field(default=0.05, compare=False)

    def __post_init__(self):
        for name in ("z_observer", "screen_w", "screen_h", "res_w", "res_h", "l_eyes", "frame_rate"):
            v = getattr(self, name)
            if not (isinstance(v, numbers.Real) and math.isfinite(v) and v > 0):
                raise ValueError(f"ViewingGeometry.{name} must be positive, got {v!r}")
        if not 0.25 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0.25, 1] degrees, got {self.alpha}")
        ppcm_w = self.res_w / self.screen_w
        ppcm_h = self.res_h / self.screen_h
        if abs(ppcm_w - ppcm_h) / max(ppcm_w, ppcm_h) > self.aspect_tolerance:
            raise ValueError(
                f"pixel pitch differs between axes ({ppcm_w:.3f} vs {ppcm_h:.3f} px/cm)"
            )

    @property
    def pixels_per_degree(self) -> float:
        return self.z_observer * math.tan(math.radians(1.0)) * self.res_h / self.screen_h

    def scaled_to(self, width: int, height: int) -> "ViewingGeometry":
        """Same physical display showing content resampled to ``width x height``."""
        d = asdict(self)
        d.update(res_w=int(width), res_h=int(height))
        return ViewingGeometry(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "ViewingGeometry":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    @classmethod
    def from_file(cls, path) -> "ViewingGeometry":
        d = json.loads(Path(path).read_text())
        return cls.from_dict(d.get("geometry", d))


def fovea_radius_px(z_observer: float, alpha_deg: float, res_h: float, screen_h: float) -> int:
    """``z * tan(alpha) * res_h / screen_h`` rounded, never below 1 px."""
    length = z_observer * math.tan(math.radians(alpha_deg)) * res_h / screen_h
    return max(1, int(math.floor(length + 0.5)))


def fovea_radius(g: ViewingGeometry) -> int:
    return fovea_radius_px(g.z_observer, g.alpha, g.res_h, g.screen_h)


def load_density_profile(path=None) -> np.ndarray:
    """Two-column table of (relative eccentricity, relative density)."""
    if path is None:
        text = resources.files("stereosal").joinpath("data/fovea_density.txt").read_text()
    else:
        text = Path(path).read_text()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(x) for x in line.replace(",", " ").split()])
    return validate_profile(np.array(rows, dtype=np.float64).reshape(-1, 2) if rows else np.empty((0, 2)))


def validate_profile(profile) -> np.ndarray:
    p = np.asarray(profile, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) == 0:
        raise ValueError("density profile must be a non-empty (eccentricity, density) table")
    ecc, dens = p[:, 0], p[:, 1]
    if ecc[0] != 0:
        raise ValueError("density profile must be anchored at eccentricity 0")
    if np.any(np.diff(ecc) <= 0):
        raise ValueError("profile eccentricities must be strictly increasing")
    if np.any(np.diff(dens) > 0) or np.any(dens < 0):
        raise ValueError("profile densities must be non-negative and non-increasing")
    return p


@dataclass(frozen=True, eq=False)
class FoveaMask:
    """Disk of weights; ``offsets`` are (dy, dx) pairs matching ``weights``."""

    radius: int
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def kernel(self) -> np.ndarray:
        k = np.zeros((2 * self.radius + 1, 2 * self.radius + 1))
        k[self.offsets[:, 0] + self.radius, self.offsets[:, 1] + self.radius] = self.weights
        return k

    @property
    def size(self) -> int:
        return len(self.weights)


def disk_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    inside = yy**2 + xx**2 <= r * r
    return np.stack([yy[inside], xx[inside]], axis=1)


def build_fovea_mask(g_or_radius, profile=None) -> FoveaMask:
    """Photoreceptor-density weighted disk, weights summing to 1.

    ``g_or_radius`` is either a :class:`ViewingGeometry` or an explicit
    radius in pixels.  The profile's eccentricity axis is relative to the
    radius (0 = center, 1 = rim) and is linearly interpolated.
    """
    radius = fovea_radius(g_or_radius) if isinstance(g_or_radius, ViewingGeometry) else int(g_or_radius)
    if radius < 1:
        raise ValueError("fovea radius must be at least 1 px")
    p = load_density_profile() if profile is None else validate_profile(profile)
    offs = disk_offsets(radius)
    ecc = np.hypot(offs[:, 0], offs[:, 1]) / radius
    w = np.interp(ecc, p[:, 0], p[:, 1])
    if w.sum() <= 0:
        raise ValueError("density profile yields an all-zero mask")
    w = w / w.sum()
    offs.setflags(write=False)
    w.setflags(write=False)
    return FoveaMask(radius=radius, offsets=offs, weights=w)


def disparity_to_depth(disparity, g: ViewingGeometry) -> np.ndarray:
    """Perceived depth (cm) from screen disparity (px); positive disparity = nearer than the screen."""
    d = as_map(disparity, "disparity")
    denom = 1.0 + d * g.screen_w / (g.l_eyes * g.res_w)
    return g.z_observer / np.maximum(denom, DEPTH_FLOOR)


def disparity_to_arcmin(disparity_px, g: ViewingGeometry):
    return np.abs(disparity_px) * 60.0 / g.pixels_per_degree


def discomfort_penalty(d_arcmin):
    """Comfort weight for a disparity magnitude in minutes of arc.

    1 inside the 60-arcmin comfort zone, ``1.36 - 0.006 d`` beyond it,
    clamped at 0.  Evaluated as ``(136 - 0.6 d) / 100`` so the threshold
    value is exactly 1.
    """
    d = np.abs(np.asarray(d_arcmin, dtype=np.float64))
    out = np.where(d <= COMFORT_ARCMIN, 1.0, (136.0 - 0.6 * d) / 100.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def discomfort_mask(segment_disparity, g: ViewingGeometry) -> np.ndarray:
    """Multiplicative penalty map from a segment-constant disparity map (px)."""
    d = as_map(segment_disparity, "segment_disparity")
    return discomfort_penalty(disparity_to_arcmin(d, g))
