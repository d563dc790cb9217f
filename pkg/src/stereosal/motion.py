"""Motion conspicuity maps: planar/depth displacement, velocity, acceleration,
and motion rarity ("surprise")."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import as_map, normalize01
from .segmentation import SegmentLabeling, segment_reduce


@dataclass(frozen=True, eq=False)
class FlowField:
    """Forward flow: a pixel at (x, y) in the previous frame sits at
    (x + dx, y + dy) in the current one."""

    dx: np.ndarray
    dy: np.ndarray
    source: str = "external"

    def __post_init__(self):
        dx = as_map(self.dx, "flow dx")
        dy = as_map(self.dy, "flow dy")
        if dx.shape != dy.shape:
            raise ValueError(f"flow components differ in shape: {dx.shape} vs {dy.shape}")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @property
    def shape(self):
        return self.dx.shape

    @classmethod
    def zeros(cls, shape, source="external"):
        return cls(np.zeros(shape), np.zeros(shape), source)


def _candidates(search: int):
    r = np.arange(-search, search + 1)
    vv, uu = np.meshgrid(r, r, indexing="ij")
    order = np.lexsort((uu.ravel(), vv.ravel(), uu.ravel() ** 2 + vv.ravel() ** 2))
    return np.stack([uu.ravel()[order], vv.ravel()[order]], axis=1)


def block_matching_flow(prev, cur, block: int = 16, search: int = 24) -> FlowField:
    """Exhaustive SAD block matching, interpolated bilinearly to pixel resolution.

    Candidates are visited from the smallest displacement outward and only a
    strictly lower cost replaces the incumbent, so ties resolve toward zero
    motion.  Motion beyond ``search`` saturates at the search bound.
    """
    prev = as_map(prev, "prev")
    cur = as_map(cur, "cur")
    if prev.shape != cur.shape:
        raise ValueError(f"frame sizes differ: {prev.shape} vs {cur.shape}")
    if block <= 0 or search < 0:
        raise ValueError("block must be > 0 and search >= 0")
    h, w = prev.shape
    nby, nbx = -(-h // block), -(-w // block)
    H, W = nby * block, nbx * block
    p = np.pad(prev, ((0, H - h), (0, W - w)), mode="edge")
    c = np.pad(cur, ((search, search + H - h), (search, search + W - w)), mode="edge")
    best = np.full((nby, nbx), np.inf)
    bu = np.zeros((nby, nbx))
    bv = np.zeros((nby, nbx))
    for u, v in _candidates(search):
        shifted = c[search + v : search + v + H, search + u : search + u + W]
        sad = np.abs(p - shifted).reshape(nby, block, nbx, block).sum(axis=(1, 3))
        better = sad < best
        best[better] = sad[better]
        bu[better] = u
        bv[better] = v
    ys = (np.arange(h) - (block - 1) / 2) / block
    xs = (np.arange(w) - (block - 1) / 2) / block
    gy, gx = np.meshgrid(np.clip(ys, 0, nby - 1), np.clip(xs, 0, nbx - 1), indexing="ij")
    dx = ndimage.map_coordinates(bu, [gy, gx], order=1, mode="nearest")
    dy = ndimage.map_coordinates(bv, [gy, gx], order=1, mode="nearest")
    return FlowField(dx, dy, source="builtin")


def scale_component(m, mode: str = "normalize") -> np.ndarray:
    """Per-frame scaling of a motion component: min-max (default) or z-score."""
    if mode == "normalize":
        return normalize01(m)
    if mode == "standardize":
        a = as_map(m)
        sd = a.std()
        return (a - a.mean()) / sd if sd > 0 else np.zeros_like(a)
    raise ValueError(f"unknown scaling mode {mode!r}")


def dz_raw(prev_depth, cur_depth, flow: FlowField) -> np.ndarray:
    """Depth change along the flow: ``prev(x, y) - cur(x + dx, y + dy)``.

    Flow endpoints are rounded to the nearest pixel and clamped to the frame.
    """
    prev_depth = as_map(prev_depth, "prev_depth")
    cur_depth = as_map(cur_depth, "cur_depth")
    if prev_depth.shape != cur_depth.shape or prev_depth.shape != flow.shape:
        raise ValueError("depth maps and flow must share one grid")
    h, w = prev_depth.shape
    yy, xx = np.indices((h, w))
    ex = np.clip(np.rint(xx + flow.dx).astype(np.int64), 0, w - 1)
    ey = np.clip(np.rint(yy + flow.dy).astype(np.int64), 0, h - 1)
    return prev_depth - cur_depth[ey, ex]


def dz_map(prev_depth, cur_depth, flow: FlowField, mode: str = "normalize") -> np.ndarray:
    return scale_component(dz_raw(prev_depth, cur_depth, flow), mode)


def _check_rate(frame_rate):
    if frame_rate <= 1:
        raise ValueError(f"frame rate must exceed 1, got {frame_rate}")


def velocity(dx, dy, dz, frame_rate: float):
    """Raw velocity components and magnitude, ``V_c = (fr - 1) d_c``."""
    _check_rate(frame_rate)
    k = frame_rate - 1
    vx, vy, vz = k * np.asarray(dx, float), k * np.asarray(dy, float), k * np.asarray(dz, float)
    return vx, vy, vz, np.sqrt(vx**2 + vy**2 + vz**2)


def _reduce_norm(m, labeling, reducer):
    if labeling is not None:
        m = segment_reduce(m, labeling, reducer)
    return normalize01(m)


def velocity_maps(flow: FlowField, dz, frame_rate: float, labeling: SegmentLabeling | None = None,
                  reducer: str = "mean", mode: str = "normalize") -> dict:
    """Segment-reduced, normalized Vx, Vy, Vz and |V|.

    ``dz`` is expected already scaled (see :func:`dz_map`); dx and dy are
    scaled here.  ``speed`` carries the per-pixel magnitude before reduction,
    which the acceleration map of the next frame consumes.
    """
    dxn = scale_component(flow.dx, mode)
    dyn = scale_component(flow.dy, mode)
    vx, vy, vz, v = velocity(dxn, dyn, as_map(dz, "dz"), frame_rate)
    out = {name: _reduce_norm(m, labeling, reducer) for name, m in (("Vx", vx), ("Vy", vy), ("Vz", vz), ("V", v))}
    out["speed"] = v
    return out


def z_emphasized_velocity(flow: FlowField, dz, frame_rate: float, labeling: SegmentLabeling | None = None,
                          reducer: str = "mean", mode: str = "normalize") -> np.ndarray:
    """Velocity magnitude with the depth component boosted to ``exp(dz) - 1``."""
    dxn = scale_component(flow.dx, mode)
    dyn = scale_component(flow.dy, mode)
    dz1 = np.expm1(as_map(dz, "dz"))
    return _reduce_norm(velocity(dxn, dyn, dz1, frame_rate)[3], labeling, reducer)


def acceleration_raw(v_cur, v_prev, frame_rate: float) -> np.ndarray:
    _check_rate(frame_rate)
    return np.abs((frame_rate - 1) * (as_map(v_cur) - as_map(v_prev)))


def acceleration_map(v_cur, v_prev, frame_rate: float, labeling: SegmentLabeling | None = None,
                     reducer: str = "mean") -> np.ndarray:
    """``|(fr - 1)(V_cur - V_prev)|`` reduced and normalized; zeros without a previous frame."""
    if v_prev is None:
        return np.zeros_like(as_map(v_cur))
    return _reduce_norm(acceleration_raw(v_cur, v_prev, frame_rate), labeling, reducer)


def _quantize(m, bins):
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return np.zeros(m.shape, dtype=np.int64)
    return np.clip(((m - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)


def surprise_map(dx, dy, dz, labeling: SegmentLabeling | None = None, bins_per_axis: int = 16,
                 reducer: str = "mean") -> np.ndarray:
    """Rarity of each pixel's 3-D motion vector, ``exp(-p / mean p)``.

    Each axis is quantized uniformly over its per-frame range; the mean is
    over occupied bins.  Values lie in (0, 1].
    """
    dx, dy, dz = as_map(dx), as_map(dy), as_map(dz)
    b = bins_per_axis
    code = (_quantize(dx, b) * b + _quantize(dy, b)) * b + _quantize(dz, b)
    _, inverse, counts = np.unique(code.ravel(), return_inverse=True, return_counts=True)
    p = counts / code.size
    m = np.exp(-p / p.mean())[inverse.ravel()].reshape(code.shape)
    if labeling is not None:
        m = segment_reduce(m, labeling, reducer)
    return m
