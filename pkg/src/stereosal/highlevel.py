"""Feature maps from external object detections (faces, people, vehicles, ...).

Sidecar format, one detection per line (``#`` starts a comment, fields
separated by whitespace and/or commas)::

    frame class x y w h [score]

``frame`` is a 0-based frame index, ``class`` one of :data:`CLASSES`,
``x y w h`` the box in pixels (top-left corner, width, height) and
``score`` a confidence in [0, 1] (default 1).  A ``.json`` sidecar holding
a list of objects with the same keys is accepted too.
"""
from __future__ import annotations

import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CLASSES = ("face", "person", "vehicle", "animal", "text", "horizon")
FEATHER_PX = 5.0


class DetectionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    frame_index: int
    cls: str
    x: float
    y: float
    w: float
    h: float
    score: float = 1.0

    def intersects(self, width: int, height: int) -> bool:
        return self.x < width and self.y < height and self.x + self.w > 0 and self.y + self.h > 0


def _parse_record(fields, where):
    if len(fields) not in (6, 7):
        raise DetectionFormatError(f"{where}: expected 6 or 7 fields, got {len(fields)}")
    try:
        frame = int(fields[0])
        x, y, w, h = (float(v) for v in fields[2:6])
        score = float(fields[6]) if len(fields) == 7 else 1.0
    except ValueError as exc:
        raise DetectionFormatError(f"{where}: {exc}") from None
    if frame < 0:
        raise DetectionFormatError(f"{where}: negative frame index {frame}")
    if not all(math.isfinite(v) for v in (x, y, w, h, score)):
        raise DetectionFormatError(f"{where}: non-finite value")
    if w <= 0 or h <= 0:
        raise DetectionFormatError(f"{where}: box must have positive width and height")
    if not 0 <= score <= 1:
        raise DetectionFormatError(f"{where}: score {score} outside [0, 1]")
    return frame, str(fields[1]).lower(), x, y, w, h, score


def ingest_detections(path, frame_size=None) -> dict[int, list[Detection]]:
    """Parse a sidecar file into per-frame detection lists.

    Any malformed record rejects the whole file.  Unknown classes and, when
    ``frame_size=(width, height)`` is given, boxes lying entirely outside
    the frame are skipped with a warning.
    """
    path = Path(path)
    text = path.read_text()
    records = []
    if path.suffix.lower() == ".json":
        items = json.loads(text) if text.strip() else []
        for i, it in enumerate(items):
            try:
                fields = [it["frame"], it["class"], it["x"], it["y"], it["w"], it["h"], it.get("score", 1.0)]
            except (KeyError, TypeError) as exc:
                raise DetectionFormatError(f"{path}: record {i}: missing key {exc}") from None
            records.append((_parse_record([str(f) for f in fields], f"{path}: record {i}"), i))
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = [f for f in re.split(r"[\s,]+", line) if f]
            records.append((_parse_record(fields, f"{path}:{lineno}"), lineno))

    out: dict[int, list[Detection]] = defaultdict(list)
    for (frame, cls, x, y, w, h, score), where in records:
        if cls not in CLASSES:
            log.warning("%s:%s: unknown class %r skipped", path, where, cls)
            continue
        det = Detection(frame, cls, x, y, w, h, score)
        if frame_size is not None and not det.intersects(*frame_size):
            log.warning("%s:%s: box %s lies outside the %dx%d frame; record rejected",
                        path, where, (x, y, w, h), *frame_size)
            continue
        out[frame].append(det)
    return dict(out)


def by_class(dets) -> dict[str, list[Detection]]:
    out = {c: [] for c in CLASSES}
    for d in dets:
        if d.cls in out:
            out[d.cls].append(d)
    return out


def feather_profile(dist, feather: float = FEATHER_PX):
    """1 at the box edge falling to exactly 0 at ``feather`` px (Gaussian shaped)."""
    dist = np.asarray(dist, dtype=np.float64)
    if feather <= 0:
        return (dist <= 0).astype(np.float64)
    sigma = feather / 2.5
    g = np.exp(-(dist**2) / (2 * sigma**2))
    g_end = math.exp(-(feather**2) / (2 * sigma**2))
    return np.clip((g - g_end) / (1 - g_end), 0.0, 1.0)


def class_map(dets, cls: str, shape, feather: float = FEATHER_PX) -> np.ndarray:
    """Per-pixel max over feathered, score-weighted boxes of one class."""
    if cls not in CLASSES:
        raise ValueError(f"unknown detection class {cls!r}")
    h, w = shape
    out = np.zeros((h, w))
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    for d in dets:
        if d.cls != cls:
            continue
        x0, x1 = (0.0, w - 1.0) if cls == "horizon" else (d.x, d.x + d.w - 1)
        y0, y1 = d.y, d.y + d.h - 1
        gy = np.maximum(np.maximum(y0 - ys, ys - y1), 0.0)
        gx = np.maximum(np.maximum(x0 - xs, xs - x1), 0.0)
        dist = np.hypot(gy[:, None], gx[None, :])
        np.maximum(out, d.score * feather_profile(dist, feather), out=out)
    return out


def class_maps(dets, shape, feather: float = FEATHER_PX) -> dict[str, np.ndarray]:
    return {c: class_map(dets, c, shape, feather) for c in CLASSES}
