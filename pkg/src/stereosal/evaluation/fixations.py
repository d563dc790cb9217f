"""Fixation records and fixation-density ground truth."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..geometry import ViewingGeometry

log = logging.getLogger(__name__)

CSV_COLUMNS = ("subject", "frame", "x", "y", "t_ms")


@dataclass(eq=False)
class FixationSet:
    """Gaze points as parallel arrays; ``x``/``y`` are pixel coordinates."""

    subject: np.ndarray
    frame: np.ndarray
    x: np.ndarray
    y: np.ndarray
    t_ms: np.ndarray

    def __post_init__(self):
        self.subject = np.asarray(self.subject).astype(str)
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.t_ms = np.asarray(self.t_ms, dtype=np.float64)
        n = len(self.frame)
        if any(len(a) != n for a in (self.subject, self.x, self.y, self.t_ms)):
            raise ValueError("fixation columns differ in length")
        if np.any(self.frame < 0):
            raise ValueError("negative frame index in fixations")

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_points(cls, points, frame=0, subject="s0"):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        n = len(pts)
        return cls(np.full(n, subject), np.full(n, frame), pts[:, 0], pts[:, 1], np.zeros(n))

    @property
    def subjects(self) -> list[str]:
        return sorted(set(self.subject.tolist()))

    @property
    def frames(self) -> list[int]:
        return sorted(set(self.frame.tolist()))

    def select(self, frame=None, subjects=None, exclude_subjects=None) -> "FixationSet":
        keep = np.ones(len(self), dtype=bool)
        if frame is not None:
            keep &= self.frame == frame
        if subjects is not None:
            keep &= np.isin(self.subject, list(subjects))
        if exclude_subjects is not None:
            keep &= ~np.isin(self.subject, list(exclude_subjects))
        return FixationSet(self.subject[keep], self.frame[keep], self.x[keep], self.y[keep], self.t_ms[keep])

    def points(self, frame=None) -> np.ndarray:
        """``(N, 2)`` array of ``(x, y)``."""
        fx = self if frame is None else self.select(frame=frame)
        return np.stack([fx.x, fx.y], axis=1)

    def check_bounds(self, width: int, height: int) -> None:
        bad = (self.x < 0) | (self.x > width - 1) | (self.y < 0) | (self.y > height - 1)
        if bad.any():
            raise ValueError(f"{int(bad.sum())} fixation(s) fall outside the {width}x{height} frame")


def load_fixations(path) -> FixationSet:
    """Read a fixation CSV with header ``subject,frame,x,y,t_ms``."""
    cols = {c: [] for c in CSV_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        for row in reader:
            for c in CSV_COLUMNS:
                cols[c].append(row[c])
    return FixationSet(cols["subject"], np.array(cols["frame"], dtype=np.int64),
                       np.array(cols["x"], dtype=float), np.array(cols["y"], dtype=float),
                       np.array(cols["t_ms"], dtype=float))


def save_fixations(path, fx: FixationSet) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in zip(fx.subject, fx.frame, fx.x, fx.y, fx.t_ms):
            w.writerow([row[0], int(row[1]), f"{row[2]:.3f}", f"{row[3]:.3f}", f"{row[4]:.1f}"])


def pixel_indices(points, shape) -> tuple[np.ndarray, np.ndarray]:
    """Round ``(x, y)`` points to row/column indices clamped to the grid."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    h, w = shape
    cols = np.clip(np.rint(pts[:, 0]), 0, w - 1).astype(np.int64)
    rows = np.clip(np.rint(pts[:, 1]), 0, h - 1).astype(np.int64)
    return rows, cols


def fixation_map(points, shape) -> np.ndarray:
    """Binary map of fixated pixels."""
    out = np.zeros(shape, dtype=bool)
    r, c = pixel_indices(points, shape)
    out[r, c] = True
    return out


def density_from_points(points, shape, sigma: float) -> np.ndarray:
    """Impulses at the points blurred by a Gaussian; sums to 1.

    The blur uses zero padding so mass spilling off the frame is dropped
    before renormalization.  No points gives an all-zero map.
    """
    imp = np.zeros(shape)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        log.warning("no fixations: returning an all-zero density map")
        return imp
    r, c = pixel_indices(pts, shape)
    np.add.at(imp, (r, c), 1.0)
    if sigma > 0:
        imp = ndimage.gaussian_filter(imp, sigma, mode="constant", cval=0.0, truncate=4.0)
    total = imp.sum()
    return imp / total if total > 0 else imp


def fixation_density(fx: FixationSet, frame: int, g: ViewingGeometry, shape=None) -> np.ndarray:
    """Per-frame density with a one-degree Gaussian (sigma = pixels per degree).

    ``shape`` defaults to the geometry's resolution; when it differs the
    geometry is rescaled so sigma stays one degree of visual angle.
    """
    if shape is None:
        shape = (g.res_h, g.res_w)
    if (shape[1], shape[0]) != (g.res_w, g.res_h):
        g = g.scaled_to(shape[1], shape[0])
    return density_from_points(fx.points(frame), shape, g.pixels_per_degree)


def display_view(density) -> np.ndarray:
    """[0, 1]-scaled copy of a density map (max -> 1)."""
    d = np.asarray(density, dtype=np.float64)
    top = d.max()
    return d / top if top > 0 else np.zeros_like(d)
