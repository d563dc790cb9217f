"""Reference models: chance, center prior, one human and the all-observer limit."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import ViewingGeometry
from ..imaging import normalize01
from .fixations import FixationSet, fixation_density
from .metrics import METRICS, all_metrics, pcc

BASELINES = ("chance", "center", "one_human", "infinite_humans")


def chance_map(shape, rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform random values in [0, 1)."""
    rng = np.random.default_rng() if rng is None else rng
    return rng.random(shape)


def center_map(shape, sigma: float | None = None) -> np.ndarray:
    """Circular Gaussian at the frame center, min-max scaled.

    ``sigma`` defaults to a quarter of the shorter frame side.
    """
    h, w = shape
    if sigma is None:
        sigma = 0.25 * min(h, w)
    if sigma <= 0:
        raise ValueError("center sigma must be positive")
    yy, xx = np.indices((h, w), dtype=np.float64)
    g = np.exp(-(((yy - (h - 1) / 2) ** 2 + (xx - (w - 1) / 2) ** 2) / (2 * sigma**2)))
    return normalize01(g)


def _nan_scores():
    return {m: math.nan for m in METRICS}


def one_human_scores(fx: FixationSet, frame: int, g: ViewingGeometry, shape, negatives=None) -> dict:
    """Leave-one-subject-out: each subject's density scored against the others, averaged."""
    frame_fx = fx.select(frame=frame)
    subjects = frame_fx.subjects
    if len(subjects) < 2:
        return _nan_scores()
    rows = []
    for s in subjects:
        own = fixation_density(frame_fx.select(subjects=[s]), frame, g, shape)
        rest = frame_fx.select(exclude_subjects=[s])
        gt = fixation_density(rest, frame, g, shape)
        rows.append(all_metrics(own, gt, rest.points(), negatives))
    out = {}
    for m in METRICS:
        vals = [r[m] for r in rows if np.isfinite(r[m])]
        out[m] = float(np.mean(vals)) if vals else math.nan
    return out


def infinite_humans_scores(fx: FixationSet, frame: int, g: ViewingGeometry, shape, negatives=None) -> dict:
    """Scores of the all-subject density, the best available estimate of the
    infinitely-many-observers map."""
    frame_fx = fx.select(frame=frame)
    if len(frame_fx.subjects) < 2:
        return _nan_scores()
    gt = fixation_density(frame_fx, frame, g, shape)
    return all_metrics(gt, gt, frame_fx.points(), negatives)


def split_half_reliability(fx: FixationSet, frame: int, g: ViewingGeometry, shape,
                           rng: np.random.Generator | None = None, n_splits: int = 10) -> float:
    """Spearman-Brown corrected split-half PCC between subject halves.

    Extrapolates the agreement of two half-panels to a panel of unlimited
    size: ``2 r / (1 + r)``.  ``nan`` with fewer than two subjects.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    frame_fx = fx.select(frame=frame)
    subjects = np.array(frame_fx.subjects)
    if len(subjects) < 2:
        return math.nan
    rs = []
    for _ in range(n_splits):
        perm = rng.permutation(subjects)
        half = len(perm) // 2
        a = fixation_density(frame_fx.select(subjects=perm[:half]), frame, g, shape)
        b = fixation_density(frame_fx.select(subjects=perm[half:]), frame, g, shape)
        rs.append(pcc(a, b))
    r = float(np.mean(rs))
    return 2 * r / (1 + r) if r > -1 else math.nan
