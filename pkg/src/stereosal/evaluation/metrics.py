"""Fixation-based saliency metrics.

Every function takes the saliency map first.  Location-based metrics (AUC,
sAUC, NSS) take ``(N, 2)`` arrays of ``(x, y)`` fixation points; the
distribution-based ones (PCC, KLD, SIM, EMD) take the ground-truth density.
A metric that cannot be computed (no fixations) returns ``nan``.
"""
from __future__ import annotations

import math
import os

import numpy as np
from scipy.stats import rankdata

from ..imaging import as_map
from .fixations import pixel_indices

EPS = 1e-12
EMD_GRID = 32
METRICS = ("AUC", "sAUC", "EMD", "SIM", "PCC", "KLD", "NSS")
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
# direction of improvement per metric
HIGHER_IS_BETTER = {"AUC": True, "sAUC": True, "EMD": False, "SIM": True, "PCC": True, "KLD": False, "NSS": True}


def _values_at(sal, points):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return None
    r, c = pixel_indices(pts, sal.shape)
    return sal[r, c]


def auc_judd(sal, fixations) -> float:
    """Area under the ROC curve with fixated pixels as positives.

    Thresholds sweep the distinct saliency values at the fixated pixels; at
    each threshold the true positive rate counts fixated pixels at or above
    it and the false positive rate counts the remaining pixels at or above
    it over all non-fixated pixels.
    """
    sal = as_map(sal, "saliency")
    pts = np.asarray(fixations, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return math.nan
    r, c = pixel_indices(pts, sal.shape)
    fixated = np.zeros(sal.shape, dtype=bool)
    fixated[r, c] = True
    pos = np.sort(sal[fixated])
    n_pos, n_pix = pos.size, sal.size
    if n_pos == n_pix:
        return math.nan
    thresholds = np.unique(pos)[::-1]
    all_sorted = np.sort(sal.ravel())
    above = n_pix - np.searchsorted(all_sorted, thresholds, side="left")  # pixels >= threshold
    pos_above = n_pos - np.searchsorted(pos, thresholds, side="left")  # fixated pixels >= threshold
    tp = pos_above / n_pos
    fp = (above - pos_above) / (n_pix - n_pos)
    tp = np.concatenate([[0.0], tp, [1.0]])
    fp = np.concatenate([[0.0], fp, [1.0]])
    return float(_trapezoid(tp, fp))


def auc_mann_whitney(pos_values, neg_values) -> float:
    """P(pos > neg) + P(pos == neg) / 2."""
    pos = np.asarray(pos_values, dtype=np.float64).ravel()
    neg = np.asarray(neg_values, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        return math.nan
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2
    return float(u / (pos.size * neg.size))


def auc_shuffled(sal, fixations, negatives) -> float:
    """AUC with negatives taken at fixation points of other frames or videos."""
    sal = as_map(sal, "saliency")
    pos = _values_at(sal, fixations)
    neg = _values_at(sal, negatives)
    if pos is None or neg is None:
        return math.nan
    return auc_mann_whitney(pos, neg)


def nss(sal, fixations) -> float:
    """Mean z-scored saliency at the fixations (0 for a constant map)."""
    sal = as_map(sal, "saliency")
    vals = _values_at(sal, fixations)
    if vals is None:
        return math.nan
    sd = sal.std()
    if sd == 0:
        return 0.0
    return float(((vals - sal.mean()) / sd).mean())


def pcc(sal, gt) -> float:
    """Pearson correlation over pixels (0 if either map is constant)."""
    a = as_map(sal, "saliency").ravel()
    b = as_map(gt, "ground truth").ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        return 0.0
    return float(np.clip(a @ b / den, -1.0, 1.0))


def as_distribution(m) -> np.ndarray:
    """Scale a non-negative map to sum 1; an all-zero map becomes uniform."""
    a = as_map(m)
    if a.min() < 0:
        raise ValueError("distribution maps must be non-negative")
    s = a.sum()
    return a / s if s > 0 else np.full(a.shape, 1.0 / a.size)


def kld(sal, gt, eps: float = EPS) -> float:
    """KL(gt || sal) over distribution-normalized maps with epsilon flooring."""
    p = as_distribution(gt)
    q = as_distribution(sal)
    if p.shape != q.shape:
        raise ValueError(f"maps differ in size: {q.shape} vs {p.shape}")
    mask = p > 0
    val = float(np.sum(p[mask] * np.log(np.maximum(p[mask], eps) / np.maximum(q[mask], eps))))
    return max(val, 0.0)


def sim(sal, gt) -> float:
    """Histogram intersection of the two distributions."""
    p = as_distribution(gt)
    q = as_distribution(sal)
    return float(min(np.minimum(p, q).sum(), 1.0))


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` overlap fractions for area (mass-preserving) resampling."""
    edges_out = np.linspace(0, n_in, n_out + 1)
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(1, n_in + 1)[None, :])
    return np.clip(hi - lo, 0.0, None)


def downsample_mass(m, grid: int = EMD_GRID) -> np.ndarray:
    """Resample a mass map onto at most ``grid x grid`` cells, preserving total mass."""
    a = as_map(m)
    h, w = a.shape
    gh, gw = min(grid, h), min(grid, w)
    return _area_weights(h, gh) @ a @ _area_weights(w, gw).T


def grid_cost(shape) -> np.ndarray:
    """Euclidean distances between the cell centers of a grid."""
    yy, xx = np.indices(shape)
    pts = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def _ot():
    # keep POT from importing heavyweight array backends
    for name in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    import ot

    return ot


def emd_grid(p, q) -> float:
    """Exact transport cost between two equal-mass distributions on one grid."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"grids differ: {p.shape} vs {q.shape}")
    a = p.ravel() / p.sum()
    b = q.ravel() / q.sum()
    if np.array_equal(a, b):
        return 0.0
    ot = _ot()
    return float(max(ot.emd2(a, b, grid_cost(p.shape), numItermax=10_000_000), 0.0))


def emd(sal, gt, grid: int = EMD_GRID) -> float:
    """Earth mover's distance after downsampling both maps to ``grid x grid`` cells."""
    p = downsample_mass(as_distribution(sal), grid)
    q = downsample_mass(as_distribution(gt), grid)
    return emd_grid(p, q)


def metric(sal, gt_density, fixations, which: str, negatives=None) -> float:
    """Dispatch by metric name (see :data:`METRICS`)."""
    if which == "AUC":
        return auc_judd(sal, fixations)
    if which == "sAUC":
        if negatives is None:
            return math.nan
        return auc_shuffled(sal, fixations, negatives)
    if which == "NSS":
        return nss(sal, fixations)
    if gt_density is None or np.asarray(gt_density).sum() <= 0:
        return math.nan
    if which == "PCC":
        return pcc(sal, gt_density)
    if which == "KLD":
        return kld(sal, gt_density)
    if which == "SIM":
        return sim(sal, gt_density)
    if which == "EMD":
        return emd(sal, gt_density)
    raise ValueError(f"unknown metric {which!r}; choose from {METRICS}")


def all_metrics(sal, gt_density, fixations, negatives=None) -> dict[str, float]:
    return {m: metric(sal, gt_density, fixations, m, negatives) for m in METRICS}
