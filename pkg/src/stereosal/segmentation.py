"""Region partition of the analysed view and per-segment statistics.

The built-in segmenter follows the usual mean-shift pipeline: range-domain
mode seeking in CIELAB inside a fixed spatial window, fusion of 4-connected
pixels whose modes agree, then pruning of regions below a minimum area.
External label maps can be ingested instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import ViewingGeometry, disk_offsets
from .imaging import as_map, convert_color, normalize01

HOLE_LABEL = 65535


@dataclass(frozen=True)
class SegmentParams:
    spatial_radius: int = 4
    range_radius: float = 8.0  # CIELAB units
    max_iter: int = 5
    fuse_distance: float | None = None  # defaults to range_radius / 2
    min_region: int = 20


@dataclass(frozen=True)
class SegmentStats:
    """Per-segment geometry; every array is indexed by segment id."""

    n: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    extents: np.ndarray  # (K, 4): up, right, down, left from the centroid
    bbox: np.ndarray  # (K, 4): y0, x0, y1, x1 inclusive
    second_moment: np.ndarray  # sum of squared distances to the centroid

    @property
    def compactness(self) -> np.ndarray:
        """``n^2 / (2 pi sum r^2)``: 1 for a disk, smaller when spread out."""
        with np.errstate(divide="ignore"):
            c = self.n.astype(np.float64) ** 2 / (2 * np.pi * self.second_moment)
        return np.clip(np.nan_to_num(c, nan=1.0, posinf=1.0), 0.0, 1.0)


class SegmentLabeling:
    """Segment id per pixel (contiguous ids ``0..k-1``) plus its boundary map."""

    def __init__(self, labels):
        lab = np.asarray(labels)
        if lab.ndim != 2 or lab.size == 0:
            raise ValueError(f"label map must be a non-empty 2-D array, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(np.equal(np.mod(lab, 1), 0)):
                raise ValueError("label map holds non-integer ids")
        lab = lab.astype(np.int64)
        if lab.min() < 0:
            raise ValueError(f"label map has {int((lab < 0).sum())} unlabeled pixel(s)")
        present = np.unique(lab)
        k = int(present[-1]) + 1
        if len(present) != k:
            missing = sorted(set(range(k)) - set(present.tolist()))[:5]
            raise ValueError(f"segment ids are not contiguous; missing e.g. {missing}")
        lab.setflags(write=False)
        self.labels = lab
        self.k = k

    @property
    def shape(self):
        return self.labels.shape

    @cached_property
    def edge_map(self) -> np.ndarray:
        """Pixels with a 4-neighbour carrying a different label."""
        lab = self.labels
        e = np.zeros(lab.shape, dtype=bool)
        dv = lab[1:, :] != lab[:-1, :]
        dh = lab[:, 1:] != lab[:, :-1]
        e[1:, :] |= dv
        e[:-1, :] |= dv
        e[:, 1:] |= dh
        e[:, :-1] |= dh
        return e

    @cached_property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.k)

    @cached_property
    def stats(self) -> SegmentStats:
        lab = self.labels
        h, w = lab.shape
        yy, xx = np.indices(lab.shape)
        flat = lab.ravel()
        n = self.counts
        cx = np.bincount(flat, xx.ravel(), self.k) / n
        cy = np.bincount(flat, yy.ravel(), self.k) / n
        idx = np.arange(self.k)
        y0 = np.asarray(ndimage.minimum(yy, lab, idx))
        y1 = np.asarray(ndimage.maximum(yy, lab, idx))
        x0 = np.asarray(ndimage.minimum(xx, lab, idx))
        x1 = np.asarray(ndimage.maximum(xx, lab, idx))
        extents = np.maximum(np.stack([cy - y0, x1 - cx, y1 - cy, cx - x0], axis=1), 0.0)
        r2 = (xx.ravel() - cx[flat]) ** 2 + (yy.ravel() - cy[flat]) ** 2
        m2 = np.bincount(flat, r2, self.k)
        bbox = np.stack([y0, x0, y1, x1], axis=1).astype(np.int64)
        return SegmentStats(n=n, cx=cx, cy=cy, extents=extents, bbox=bbox, second_moment=m2)

    def paint(self, per_segment) -> np.ndarray:
        """Broadcast one value per segment back to the pixel grid."""
        v = np.asarray(per_segment, dtype=np.float64)
        if v.shape != (self.k,):
            raise ValueError(f"expected {self.k} segment values, got shape {v.shape}")
        return v[self.labels]


def relabel_sequential(labels) -> np.ndarray:
    """Renumber ids ``0..k-1`` in raster order of first appearance."""
    flat = np.asarray(labels).ravel()
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return order[inverse].reshape(np.shape(labels))


def from_external(labels) -> SegmentLabeling:
    """Ingest an externally produced label image verbatim.

    ``HOLE_LABEL`` (65535) marks unlabeled pixels, which are rejected.
    """
    lab = np.asarray(labels).astype(np.int64)
    holes = lab == HOLE_LABEL
    if holes.any():
        ys, xs = np.nonzero(holes)
        raise ValueError(f"label map has {holes.sum()} hole pixel(s), first at (x={xs[0]}, y={ys[0]})")
    return SegmentLabeling(lab)


def _mode_seek(lab, params: SegmentParams) -> np.ndarray:
    h, w, _ = lab.shape
    r = params.spatial_radius
    hr2 = params.range_radius**2
    pad = np.pad(lab, ((r, r), (r, r), (0, 0)), mode="edge")
    offs = disk_offsets(r)
    y = lab.copy()
    for _ in range(params.max_iter):
        acc = np.zeros_like(lab)
        cnt = np.zeros((h, w))
        for dy, dx in offs:
            nb = pad[r + dy : r + dy + h, r + dx : r + dx + w]
            inside = ((nb - y) ** 2).sum(axis=2) < hr2
            acc += nb * inside[..., None]
            cnt += inside
        y_new = acc / np.maximum(cnt, 1)[..., None]
        # the current mode always has itself within range, so cnt >= 1
        shift = np.abs(y_new - y).max()
        y = y_new
        if shift < 1e-3:
            break
    return y


def _fuse(modes, tol: float) -> np.ndarray:
    h, w, _ = modes.shape
    ids = np.arange(h * w).reshape(h, w)
    close_v = np.sqrt(((modes[1:, :] - modes[:-1, :]) ** 2).sum(axis=2)) < tol
    close_h = np.sqrt(((modes[:, 1:] - modes[:, :-1]) ** 2).sum(axis=2)) < tol
    src = np.concatenate([ids[1:, :][close_v], ids[:, 1:][close_h]])
    dst = np.concatenate([ids[:-1, :][close_v], ids[:, :-1][close_h]])
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    return relabel_sequential(comp.reshape(h, w))


def _adjacent_pairs(lab):
    a = np.concatenate([lab[1:, :].ravel(), lab[:, 1:].ravel()])
    b = np.concatenate([lab[:-1, :].ravel(), lab[:, :-1].ravel()])
    diff = a != b
    pairs = np.stack([np.minimum(a[diff], b[diff]), np.maximum(a[diff], b[diff])], axis=1)
    return np.unique(pairs, axis=0) if len(pairs) else pairs.reshape(0, 2)


def _prune(lab, colors, min_region: int) -> np.ndarray:
    """Merge regions smaller than ``min_region`` into their closest-colored neighbour."""
    while True:
        k = int(lab.max()) + 1
        if k == 1:
            return lab
        n = np.bincount(lab.ravel(), minlength=k)
        small = n < min_region
        if not small.any():
            return lab
        mean = np.stack([np.bincount(lab.ravel(), colors[..., c].ravel(), k) for c in range(3)], 1)
        mean /= n[:, None]
        pairs = _adjacent_pairs(lab)
        target = np.arange(k)
        best = np.full(k, np.inf)
        for a, b in pairs:
            d = float(((mean[a] - mean[b]) ** 2).sum())
            for s, o in ((a, b), (b, a)):
                # ties go to the lower id for determinism
                if small[s] and (d < best[s] or (d == best[s] and o < target[s])):
                    best[s], target[s] = d, o
        # resolve chains (a -> b -> c) with a union-find over the merge edges
        parent = np.arange(k)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for s in np.nonzero(small)[0]:
            ra, rb = find(s), find(target[s])
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(k)])
        new = relabel_sequential(roots[lab])
        if int(new.max()) + 1 == k:
            return new
        lab = new


def segment(frame, params: SegmentParams | None = None) -> SegmentLabeling:
    """Partition an RGB frame into regions of similar CIELAB color."""
    params = params or SegmentParams()
    lab = convert_color(frame, "lab")
    modes = _mode_seek(lab, params)
    tol = params.fuse_distance if params.fuse_distance is not None else params.range_radius / 2
    labels = _fuse(modes, tol)
    labels = _prune(labels, lab, params.min_region)
    return SegmentLabeling(labels)


_REDUCERS = {
    "median": ndimage.median,
    "min": ndimage.minimum,
    "max": ndimage.maximum,
}


def segment_reduce(m, s: SegmentLabeling, reducer: str = "mean") -> np.ndarray:
    """Replace every pixel by the reducer of its segment (default: mean)."""
    a = as_map(m)
    if a.shape != s.shape:
        raise ValueError(f"map shape {a.shape} does not match labeling shape {s.shape}")
    if reducer == "mean":
        per = np.bincount(s.labels.ravel(), a.ravel(), s.k) / s.counts
    elif reducer in _REDUCERS:
        per = np.asarray(_REDUCERS[reducer](a, s.labels, np.arange(s.k)), dtype=np.float64)
    elif callable(reducer):
        per = np.array([reducer(a[s.labels == i]) for i in range(s.k)], dtype=np.float64)
    else:
        raise ValueError(f"unknown reducer {reducer!r}")
    return s.paint(per)


def edginess(s: SegmentLabeling, normalize: bool = True) -> np.ndarray:
    """Fraction of boundary pixels per segment, painted segment-constant."""
    per = np.bincount(s.labels.ravel(), s.edge_map.ravel().astype(np.float64), s.k) / s.counts
    out = s.paint(per)
    return normalize01(out) if normalize else out


def compactness_map(s: SegmentLabeling) -> np.ndarray:
    return s.paint(s.stats.compactness)


def size_filter(s: SegmentLabeling, g: ViewingGeometry | None = None, fraction: float = 0.01) -> np.ndarray:
    """Zero out segments whose bounding box is under ``fraction`` of the frame
    in both directions.  Thresholds follow ``g``'s resolution when given,
    otherwise the labeling's own size."""
    if g is not None:
        res_h, res_w = g.res_h, g.res_w
    else:
        res_h, res_w = s.shape
    bb = s.stats.bbox
    bh = bb[:, 2] - bb[:, 0] + 1
    bw = bb[:, 3] - bb[:, 1] + 1
    tiny = (bw < fraction * res_w) & (bh < fraction * res_h)
    return s.paint((~tiny).astype(np.float64))
