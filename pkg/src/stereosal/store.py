"""On-disk feature stacks.

Each video directory holds one ``.f32`` raw container per frame with the
feature maps stacked vertically (``n_features * H`` rows by ``W``
columns) and an ``index.json`` naming the feature order, map size, frame
ids, the format version and a hash of the extraction config.  The index
is written last, so a video without one is incomplete.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .fusion import FeatureStack
from .io import read_raw, write_raw

STACK_FORMAT = "stereosal-stack"
STACK_VERSION = 1
INDEX_NAME = "index.json"


class StackVersionError(ValueError):
    pass


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_stack(path, stack: FeatureStack) -> None:
    k, h, w = stack.maps.shape
    write_raw(path, stack.maps.reshape(k * h, w))


def read_stack(path, names, shape, frame_id="") -> FeatureStack:
    flat = read_raw(path)
    h, w = shape
    if flat.shape != (len(names) * h, w):
        raise ValueError(f"{path}: expected {len(names)} maps of {h}x{w}, found a {flat.shape} block")
    return FeatureStack(frame_id, tuple(names), flat.reshape(len(names), h, w))


def write_index(video_dir, names, shape, frame_ids, cfg_hash: str, timings=None) -> None:
    idx = {
        "format": STACK_FORMAT,
        "version": STACK_VERSION,
        "features": list(names),
        "height": int(shape[0]),
        "width": int(shape[1]),
        "frames": [{"id": f, "file": f"{f}.f32"} for f in frame_ids],
        "config_hash": cfg_hash,
        "timings": timings or {},
    }
    Path(video_dir, INDEX_NAME).write_text(json.dumps(idx, indent=1) + "\n")


def read_index(video_dir) -> dict:
    p = Path(video_dir, INDEX_NAME)
    idx = json.loads(p.read_text())
    if idx.get("format") != STACK_FORMAT or idx.get("version") != STACK_VERSION:
        raise StackVersionError(
            f"{p}: stack format {idx.get('format')!r} v{idx.get('version')} is not "
            f"{STACK_FORMAT!r} v{STACK_VERSION}; re-run extract"
        )
    return idx


def is_complete(video_dir, names, cfg_hash: str) -> bool:
    """True if the video has a current index matching the features and config."""
    try:
        idx = read_index(video_dir)
    except (OSError, ValueError):
        return False
    if idx["features"] != list(names) or idx.get("config_hash") != cfg_hash:
        return False
    return all(Path(video_dir, fr["file"]).exists() for fr in idx["frames"])


def load_video_stacks(video_dir):
    """Yield ``(frame_index, FeatureStack)`` for every frame of a video."""
    idx = read_index(video_dir)
    shape = (idx["height"], idx["width"])
    for i, fr in enumerate(idx["frames"]):
        yield i, read_stack(Path(video_dir, fr["file"]), idx["features"], shape, fr["id"])
