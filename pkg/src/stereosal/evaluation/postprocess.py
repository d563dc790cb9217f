"""Center-bias mixing, blurring, parameter tuning and histogram matching."""
from __future__ import annotations

import itertools

import numpy as np

from ..imaging import as_map, gaussian_blur, normalize01
from .baselines import center_map
from .metrics import auc_judd

CENTER_WEIGHTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
BLUR_SIGMAS = (0.0, 15.0, 30.0, 60.0, 90.0)


def postprocess(sal, center_weight: float = 0.0, blur_sigma: float = 0.0, center=None) -> np.ndarray:
    """``normalize01((1 - w) * blur(sal, sigma) + w * center)``.

    With ``w = 0`` and ``sigma = 0`` the map is returned unchanged, and
    ``w = 1`` returns the center map.
    """
    sal = as_map(sal, "saliency")
    if not 0 <= center_weight <= 1:
        raise ValueError(f"center weight must lie in [0, 1], got {center_weight}")
    if center_weight == 0 and blur_sigma == 0:
        return sal.copy()
    c = center_map(sal.shape) if center is None else as_map(center, "center")
    if center_weight == 1:
        return c.copy()
    mixed = (1 - center_weight) * gaussian_blur(sal, blur_sigma) + center_weight * c
    return normalize01(mixed)


def tune_postprocess(sal_maps, fixations, center=None, weights=CENTER_WEIGHTS, sigmas=BLUR_SIGMAS):
    """Grid search for the (center weight, blur sigma) with the best mean AUC.

    ``sal_maps`` and ``fixations`` are parallel sequences (one entry per
    training frame).  Ties keep the earliest grid point, i.e. the least
    post-processing.  Returns ``(weight, sigma, mean_auc)``.
    """
    sal_maps = list(sal_maps)
    fixations = list(fixations)
    if len(sal_maps) != len(fixations) or not sal_maps:
        raise ValueError("need equally many (non-zero) saliency maps and fixation sets")
    best = (0.0, 0.0, -np.inf)
    for w, s in itertools.product(weights, sigmas):
        scores = [auc_judd(postprocess(m, w, s, center), f) for m, f in zip(sal_maps, fixations)]
        score = float(np.nanmean(scores))
        if score > best[2]:
            best = (float(w), float(s), score)
    return best


def histogram_match(sal, reference) -> np.ndarray:
    """Monotone remap of ``sal`` onto the empirical distribution of ``reference``.

    Pixels are ranked by saliency (stable order) and assigned the reference
    quantile of the same rank, so ordering is preserved and, on equal-size
    maps, the output holds exactly the reference values.
    """
    a = as_map(sal, "saliency")
    ref = np.sort(as_map(reference, "reference").ravel())
    order = np.argsort(a.ravel(), kind="stable")
    n = a.size
    if ref.size == n:
        q = ref
    else:
        q = np.quantile(ref, (np.arange(n) + 0.5) / n)
    out = np.empty(n)
    out[order] = q
    return out.reshape(a.shape)
