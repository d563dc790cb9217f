"""Scoring saliency predictions of several models over a set of videos."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import ViewingGeometry
from .baselines import center_map, chance_map, infinite_humans_scores, one_human_scores, split_half_reliability
from .fixations import FixationSet, fixation_density
from .metrics import METRICS, all_metrics
from .stats import MetricReport, build_report


class NegativePool:
    """Fixations of every video, used to draw shuffled-AUC negatives.

    Points are stored in normalized coordinates so videos of different
    resolution can share one pool.  Built once and never modified.
    """

    def __init__(self, fixations: dict[str, FixationSet], shapes: dict[str, tuple[int, int]]):
        self._pts = {}
        for vid, fx in fixations.items():
            h, w = shapes[vid]
            p = fx.points()
            self._pts[vid] = np.stack([p[:, 0] / max(w - 1, 1), p[:, 1] / max(h - 1, 1)], axis=1) if len(p) else p

    def sample(self, video: str, n: int, shape, rng: np.random.Generator) -> np.ndarray:
        """``n`` points from all videos except ``video``, in ``shape``'s pixel units."""
        others = [p for v, p in self._pts.items() if v != video and len(p)]
        if not others or n <= 0:
            return np.zeros((0, 2))
        pool = np.concatenate(others)
        idx = rng.choice(len(pool), size=n, replace=n > len(pool))
        h, w = shape
        return pool[idx] * [w - 1, h - 1]


def _frame_mean(rows) -> dict:
    out = {}
    for m in METRICS:
        vals = [r[m] for r in rows if np.isfinite(r[m])]
        out[m] = float(np.mean(vals)) if vals else math.nan
    return out


def evaluate(predictions: dict, fixations: dict[str, FixationSet], g: ViewingGeometry, shapes: dict,
             seed: int = 0, baselines: bool = True, center=None) -> MetricReport:
    """Per-frame scores averaged per video, then summarized across videos.

    ``predictions[model][video][frame]`` is a saliency map.  Frames without
    fixations are skipped.  With ``baselines`` the chance, center, one-human
    and infinite-humans rows are added.
    """
    videos = sorted(fixations)
    pool = NegativePool(fixations, shapes)
    models = list(predictions)
    if baselines:
        models += ["chance", "center", "one_human", "infinite_humans"]
    per_video = {m: {k: [] for k in METRICS} for m in models}
    reliability = []
    for vi, vid in enumerate(videos):
        fx = fixations[vid]
        shape = shapes[vid]
        rows = {m: [] for m in models}
        for frame in fx.frames:
            frame_fx = fx.select(frame=frame)
            pts = frame_fx.points()
            if len(pts) == 0:
                continue
            rng = np.random.default_rng(np.random.SeedSequence([seed, vi, frame]))
            neg = pool.sample(vid, len(pts), shape, rng)
            neg = neg if len(neg) else None
            gt = fixation_density(frame_fx, frame, g, shape)
            for model in predictions:
                sal = predictions[model].get(vid, {}).get(frame)
                if sal is not None:
                    rows[model].append(all_metrics(sal, gt, pts, neg))
            if baselines:
                c = center_map(shape) if center is None else center
                rows["chance"].append(all_metrics(chance_map(shape, rng), gt, pts, neg))
                rows["center"].append(all_metrics(c, gt, pts, neg))
                rows["one_human"].append(one_human_scores(fx, frame, g, shape, neg))
                rows["infinite_humans"].append(infinite_humans_scores(fx, frame, g, shape, neg))
                reliability.append(split_half_reliability(fx, frame, g, shape, rng))
        for model in models:
            means = _frame_mean(rows[model])
            for k in METRICS:
                per_video[model][k].append(means[k])
    extras = {}
    if reliability:
        extras["split_half_pcc"] = float(np.nanmean(reliability)) if np.isfinite(reliability).any() else math.nan
    return build_report(per_video, videos, extras)
