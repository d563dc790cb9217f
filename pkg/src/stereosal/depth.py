"""Depth saliency: proximity, depth abruptness around segments, comfort penalty."""
from __future__ import annotations

import numpy as np

from .geometry import ViewingGeometry, discomfort_mask, disparity_to_depth
from .imaging import as_map, gaussian_blur, normalize01
from .segmentation import SegmentLabeling, segment_reduce

# probe direction per extent column (up, right, down, left) as (dx, dy)
_DIRECTIONS = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=np.float64)


def depth_base(depth) -> np.ndarray:
    """Inverse depth rescaled to [0, 1]: nearest -> 1, farthest -> 0."""
    d = as_map(depth, "depth")
    if np.any(d <= 0):
        raise ValueError(f"depth must be positive; {int((d <= 0).sum())} pixel(s) are not")
    return normalize01(1.0 / d)


def probe_differences(depth, s: SegmentLabeling, offset_frac: float = 0.01, spread: int = 2) -> np.ndarray:
    """Inverse-distance weighted mean |depth(P_i) - depth(centroid)| per segment.

    The four probes sit just outside each segment's extent (plus
    ``offset_frac`` of the frame size) above, right, below and left of the
    centroid.  Each probe reads the median of three samples: the anchor and
    ``spread`` px either side along the probe axis.  Probes are clamped to
    the frame.
    """
    d = as_map(depth, "depth")
    if d.shape != s.shape:
        raise ValueError(f"depth {d.shape} and labeling {s.shape} differ in size")
    h, w = d.shape
    st = s.stats
    margin = np.array([offset_frac * h, offset_frac * w, offset_frac * h, offset_frac * w])
    dist = st.extents + margin  # (K, 4)
    cx, cy = st.cx[:, None], st.cy[:, None]
    ax = cx + _DIRECTIONS[:, 0] * dist
    ay = cy + _DIRECTIONS[:, 1] * dist
    readings = []
    for t in (-spread, 0, spread):
        px = np.clip(np.rint(ax + _DIRECTIONS[:, 0] * t), 0, w - 1).astype(np.int64)
        py = np.clip(np.rint(ay + _DIRECTIONS[:, 1] * t), 0, h - 1).astype(np.int64)
        readings.append(d[py, px])
    probe = np.median(np.stack(readings), axis=0)
    c = d[np.clip(np.rint(st.cy), 0, h - 1).astype(np.int64), np.clip(np.rint(st.cx), 0, w - 1).astype(np.int64)]
    wgt = 1.0 / dist
    return (wgt * np.abs(probe - c[:, None])).sum(axis=1) / wgt.sum(axis=1)


def abruptness_from_differences(diff) -> np.ndarray:
    """Segments above the mean difference take the frame maximum; then scale by the max."""
    diff = np.asarray(diff, dtype=np.float64)
    out = np.where(diff > diff.mean(), diff.max(), diff)
    top = out.max()
    return out / top if top > 0 else np.zeros_like(out)


def abruptness_mask(depth, s: SegmentLabeling, offset_frac: float = 0.01, spread: int = 2) -> np.ndarray:
    """Segment-constant abruptness in [0, 1]; ``depth`` should already be smoothed."""
    return s.paint(abruptness_from_differences(probe_differences(depth, s, offset_frac, spread)))


def depth_feature(depth, s: SegmentLabeling, discomfort=None, smooth_sigma: float = 2.0,
                  normalize: bool = True) -> np.ndarray:
    """Segment-averaged proximity x abruptness x comfort penalty."""
    d = as_map(depth, "depth")
    base = segment_reduce(depth_base(d), s)
    abrupt = abruptness_mask(gaussian_blur(d, smooth_sigma), s)
    out = base * abrupt
    if discomfort is not None:
        out = out * as_map(discomfort, "discomfort")
    return normalize01(out) if normalize else out


def depth_feature_from_disparity(disparity, s: SegmentLabeling, g: ViewingGeometry, smooth_sigma: float = 2.0,
                                 use_discomfort: bool = True) -> np.ndarray:
    disp = as_map(disparity, "disparity")
    depth = disparity_to_depth(disp, g)
    pen = discomfort_mask(segment_reduce(disp, s), g) if use_discomfort else None
    return depth_feature(depth, s, pen, smooth_sigma)
