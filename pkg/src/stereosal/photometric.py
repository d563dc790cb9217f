"""Brightness, color and texture conspicuity maps."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .geometry import FoveaMask
from .imaging import as_frame, as_map, convert_color, luminance, normalize01, rgb_to_xyz
from .segmentation import SegmentLabeling, edginess, segment_reduce

# Above this many (offset x pixel) products the level-set path is used.
DIRECT_BUDGET = 2e8
# Range below which a map is treated as constant (floating-point cancellation).
FLAT_TOL = 1e-10


def _normalize(m, tol=FLAT_TOL):
    m = np.asarray(m, dtype=np.float64)
    if m.max() - m.min() <= tol * max(1.0, np.abs(m).max()):
        return np.zeros_like(m)
    return normalize01(m)


def _pad(a, r):
    return np.pad(a, r, mode="edge")


def _disk_sum(a, fovea: FoveaMask, weights=None):
    """Correlate ``a`` with the fovea disk (unit or given weights), edge-replicated."""
    r = fovea.radius
    k = np.zeros((2 * r + 1, 2 * r + 1))
    w = np.ones(fovea.size) if weights is None else weights
    k[fovea.offsets[:, 0] + r, fovea.offsets[:, 1] + r] = w
    # disk weights are point-symmetric, so correlation == convolution
    return fftconvolve(_pad(a, r), k, mode="valid")


def local_variance(y, fovea: FoveaMask, classical: bool = False, normalize: bool = True) -> np.ndarray:
    """Squared deviations from the center pixel over the fovea disk.

    ``sum_i (Y_x - Y_i)^2 / (n - 1)`` where the neighbourhood is the
    ``n`` surrounding pixels of the disk (the center itself contributes
    nothing to the sum).  ``classical=True`` instead takes the sample
    variance over the whole disk, deviations measured from its mean.
    """
    y = as_map(y, "luminance")
    n = fovea.size - 1
    if n < 2:
        raise ValueError("variance neighbourhood needs at least 2 surrounding pixels")
    s1 = _disk_sum(y, fovea)
    s2 = _disk_sum(y * y, fovea)
    if classical:
        var = (s2 - s1 * s1 / (n + 1)) / n
    else:
        var = ((n + 1) * y * y - 2 * y * s1 + s2) / (n - 1)
    var = np.maximum(var, 0.0)
    scale = max(1.0, float(np.abs(y).max()) ** 2)
    var[var < 1e-9 * scale] = 0.0
    return _normalize(var) if normalize else var


def _surround_direct(b, fovea: FoveaMask):
    r = fovea.radius
    h, w = b.shape
    pad = _pad(b, r)
    acc = np.zeros_like(b)
    for (dy, dx), wt in zip(fovea.offsets, fovea.weights):
        if dy == 0 and dx == 0:
            continue
        acc += wt * np.abs(b - pad[r + dy : r + dy + h, r + dx : r + dx + w])
    return acc


def _surround_levels(b, fovea: FoveaMask, max_levels: int):
    """Level-set form: ``|a - c| = integral over t of |[a > t] - [c > t]|``."""
    levels = np.unique(b)
    if len(levels) > max_levels:
        lo, hi = b.min(), b.max()
        q = np.round((b - lo) / (hi - lo) * (max_levels - 1))
        b = lo + q * (hi - lo) / (max_levels - 1)
        levels = np.unique(b)
    wsum = fovea.weights.sum()
    acc = np.zeros_like(b)
    for lo, hi in zip(levels[:-1], levels[1:]):
        ind = (b > lo).astype(np.float64)
        c = _disk_sum(ind, fovea, fovea.weights)
        acc += (hi - lo) * (ind * (wsum - c) + (1 - ind) * c)
    return acc


def surround_contrast(base, fovea: FoveaMask, method: str = "auto", max_levels: int = 64) -> np.ndarray:
    """Per-pixel fovea-weighted sum of absolute differences to the surround."""
    b = as_map(base)
    if method == "auto":
        method = "direct" if fovea.size * b.size <= DIRECT_BUDGET else "levels"
    if method == "direct":
        return _surround_direct(b, fovea)
    if method == "levels":
        return _surround_levels(b, fovea, max_levels)
    raise ValueError(f"unknown center-surround method {method!r}")


def center_surround(base, fovea: FoveaMask, labeling: SegmentLabeling, method: str = "auto",
                    normalize: bool = True) -> np.ndarray:
    """Segment-averaged center-surround contrast, normalized per frame."""
    b = as_map(base)
    if b.shape != labeling.shape:
        raise ValueError(f"base map {b.shape} and labeling {labeling.shape} differ in size")
    per_pixel = surround_contrast(b, fovea, method)
    out = segment_reduce(per_pixel, labeling)
    return _normalize(out) if normalize else out


def brightness_maps(frame, fovea: FoveaMask, labeling: SegmentLabeling, classical_variance=False):
    y = luminance(frame)
    return {
        "variance_contrast": center_surround(local_variance(y, fovea, classical_variance), fovea, labeling),
        "contrast": center_surround(y, fovea, labeling),
    }


def color_histogram_map(frame, bins_per_channel: int = 8) -> np.ndarray:
    """Color rarity ``exp(-P / mean P)`` over a joint RGB histogram.

    The mean is taken over occupied bins only.
    """
    f = as_frame(frame)
    q = np.clip((f * bins_per_channel / 256.0).astype(np.int64), 0, bins_per_channel - 1)
    code = (q[..., 0] * bins_per_channel + q[..., 1]) * bins_per_channel + q[..., 2]
    _, inverse, counts = np.unique(code.ravel(), return_inverse=True, return_counts=True)
    p = counts / code.size
    p_mean = p.mean()
    return np.exp(-p / p_mean)[inverse].reshape(code.shape)


def color_variance_contrast(frame, fovea: FoveaMask, labeling: SegmentLabeling, classical_variance=False):
    lab = convert_color(frame, "lab")
    out = {}
    for key, ch in (("a_map", 1), ("b_map", 2)):
        var = local_variance(lab[..., ch], fovea, classical_variance)
        out[key] = center_surround(var, fovea, labeling)
    return out


# Planckian locus in CIE 1960 (u, v), Krystek's rational approximation.
def planck_uv(t):
    t = np.asarray(t, dtype=np.float64)
    u = (0.860117757 + 1.54118254e-4 * t + 1.28641212e-7 * t**2) / (
        1 + 8.42420235e-4 * t + 7.08145163e-7 * t**2)
    v = (0.317398726 + 4.22806245e-5 * t + 4.20481691e-8 * t**2) / (
        1 - 2.89741816e-5 * t + 1.61456053e-7 * t**2)
    return u, v


CCT_RANGE = (1000.0, 25000.0)
_CCT_GRID = np.geomspace(*CCT_RANGE, 2048)
_LOCUS_U, _LOCUS_V = planck_uv(_CCT_GRID)


def xy_to_uv(x, y):
    d = -2 * x + 12 * y + 3
    return 4 * x / d, 6 * y / d


def correlated_color_temperature(rgb) -> np.ndarray:
    """CCT (K) as the temperature of the nearest Planckian-locus point in (u, v).

    Black pixels take the D65 chromaticity.  Results are clamped to
    ``CCT_RANGE``.
    """
    xyz = rgb_to_xyz(rgb)
    s = xyz.sum(axis=-1)
    safe = s > 1e-12
    x = np.where(safe, xyz[..., 0] / np.where(safe, s, 1), 0.31271)
    y = np.where(safe, xyz[..., 1] / np.where(safe, s, 1), 0.32902)
    u, v = xy_to_uv(x, y)
    flat_u, flat_v = u.ravel(), v.ravel()
    # unique chromaticities keep the search cheap on natural frames
    uv = np.round(np.stack([flat_u, flat_v], 1), 6)
    uniq, inverse = np.unique(uv, axis=0, return_inverse=True)
    best = np.empty(len(uniq))
    for start in range(0, len(uniq), 4096):
        chunk = uniq[start : start + 4096]
        d2 = (chunk[:, :1] - _LOCUS_U) ** 2 + (chunk[:, 1:] - _LOCUS_V) ** 2
        best[start : start + 4096] = _CCT_GRID[np.argmin(d2, axis=1)]
    return best[inverse.ravel()].reshape(u.shape)


def mccamy_cct(x, y):
    """McCamy's cubic CCT approximation (valid near the Planckian locus)."""
    n = (x - 0.3320) / (0.1858 - y)
    return 449 * n**3 + 3525 * n**2 + 6823.3 * n + 5520.33


def warmth_map(frame) -> np.ndarray:
    """Inverse color temperature rescaled over the fixed CCT range.

    ``1/CCT`` maps to [0, 1] with 25000 K -> 0 and 1000 K -> 1, so values
    are comparable across frames.
    """
    f = as_frame(frame)
    cct = np.clip(correlated_color_temperature(f), *CCT_RANGE)
    inv_lo, inv_hi = 1 / CCT_RANGE[1], 1 / CCT_RANGE[0]
    return np.clip((1 / cct - inv_lo) / (inv_hi - inv_lo), 0.0, 1.0)


def saturation_map(frame) -> np.ndarray:
    lab = convert_color(frame, "lab")
    L = lab[..., 0]
    chroma = np.hypot(lab[..., 1], lab[..., 2])
    den = np.hypot(chroma, L)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(den > 0, chroma / np.where(den > 0, den, 1), 0.0)
    return np.clip(s, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ColorTable:
    rgb: np.ndarray  # (n, 3)
    values: np.ndarray  # (n,)
    keys: np.ndarray  # wavelength or rank label per row


def _read_csv_rows(path_or_name):
    if isinstance(path_or_name, (str, Path)) and Path(path_or_name).exists():
        text = Path(path_or_name).read_text()
    else:
        text = resources.files("stereosal").joinpath(f"data/{path_or_name}").read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def load_spectral_table(path=None) -> ColorTable:
    rows = _read_csv_rows(path or "spectral_sensitivity.csv")
    if not rows:
        raise ValueError("spectral sensitivity table is empty")
    rows.sort(key=lambda r: float(r["wavelength_nm"]))
    return ColorTable(
        rgb=np.array([[float(r["r"]), float(r["g"]), float(r["b"])] for r in rows]),
        values=np.array([float(r["sensitivity"]) for r in rows]),
        keys=np.array([float(r["wavelength_nm"]) for r in rows]),
    )


def load_empirical_table(path=None) -> ColorTable:
    rows = _read_csv_rows(path or "empirical_colors.csv")
    if not rows:
        raise ValueError("empirical color table is empty")
    if len(rows) != 12:
        warnings.warn(f"empirical color table has {len(rows)} rows, expected 12", stacklevel=2)
    return ColorTable(
        rgb=np.array([[float(r["r"]), float(r["g"]), float(r["b"])] for r in rows]),
        values=np.array([float(r["probability"]) for r in rows]),
        keys=np.array([r.get("name", str(i)) for i, r in enumerate(rows)]),
    )


def nearest_entry(frame, table_rgb) -> np.ndarray:
    """Index of the nearest table color by squared RGB distance; first index wins ties."""
    f = as_frame(frame)
    colors = f.reshape(-1, 3)
    uniq, inverse = np.unique(colors, axis=0, return_inverse=True)
    d2 = ((uniq[:, None, :] - table_rgb[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)[inverse.ravel()].reshape(f.shape[:2])


def hvs_sensitivity_map(frame, table: ColorTable | None = None) -> np.ndarray:
    table = table or load_spectral_table()
    if len(table.values) == 0:
        raise ValueError("spectral table is empty")
    idx = nearest_entry(frame, table.rgb)
    top = table.values.max()
    return table.values[idx] / top if top > 0 else np.zeros(idx.shape)


def empirical_color_map(frame, table: ColorTable | None = None) -> np.ndarray:
    table = table or load_empirical_table()
    return table.values[nearest_entry(frame, table.rgb)]


@dataclass(frozen=True, eq=False)
class GaborFilter:
    wavelength: float
    theta: float
    kernel: np.ndarray  # complex


def gabor_kernel(wavelength: float, theta: float, bandwidth: float = 1.0, aspect: float = 0.5) -> np.ndarray:
    """Complex Gabor kernel with zero DC and unit L1 norm."""
    sigma = wavelength / np.pi * np.sqrt(np.log(2) / 2) * (2**bandwidth + 1) / (2**bandwidth - 1)
    half = int(np.ceil(3 * sigma / aspect))
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = xx * np.cos(theta) + yy * np.sin(theta)
    yr = -xx * np.sin(theta) + yy * np.cos(theta)
    env = np.exp(-(xr**2 + (aspect * yr) ** 2) / (2 * sigma**2))
    carrier = np.exp(2j * np.pi * xr / wavelength)
    k = env * carrier
    k -= env * (k.sum() / env.sum())  # remove DC so flat regions give no response
    return k / np.abs(k).sum()


def gabor_bank(wavelengths=(4, 8, 16, 32), n_orientations: int = 8, bandwidth: float = 1.0):
    return [
        GaborFilter(lam, th, gabor_kernel(lam, th, bandwidth))
        for lam in wavelengths
        for th in np.arange(n_orientations) * np.pi / n_orientations
    ]


def gabor_responses(y, bank) -> np.ndarray:
    """Magnitude of every filter's response, shape ``(len(bank), H, W)``."""
    y = as_map(y)
    out = np.empty((len(bank),) + y.shape)
    for i, flt in enumerate(bank):
        r = flt.kernel.shape[0] // 2
        resp = fftconvolve(_pad(y, r), flt.kernel, mode="valid")
        out[i] = np.abs(resp)
    return out


def gabor_energy(y, bank) -> np.ndarray:
    return np.sqrt((gabor_responses(y, bank) ** 2).sum(axis=0))


def texture_map(frame, fovea: FoveaMask, labeling: SegmentLabeling, bank=None) -> np.ndarray:
    """Gabor energy pooled by the fovea kernel, weighted by segment edginess."""
    bank = bank if bank is not None else gabor_bank()
    y = luminance(frame)
    energy = gabor_energy(y, bank)
    energy[energy < 1e-9] = 0.0
    pooled = _disk_sum(energy, fovea, fovea.weights)
    return _normalize(pooled * edginess(labeling))
