"""Deterministic synthetic stereo clips for demos and end-to-end tests.

Each clip shows a sky/ground backdrop with a horizon, a static textured
block, a static face-like blob and a red disk that moves sideways while
approaching the viewer.  Alongside the frames come 16-bit disparity PGMs,
a detection sidecar and synthetic fixations drawn mostly on the disk and
the face.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .evaluation.fixations import FixationSet, save_fixations
from .io import write_disparity_pgm, write_frame

DISPARITY_SCALE = 1000.0
DISPARITY_OFFSET = -32.0
SUBJECTS = 8


def _disk(shape, cx, cy, r):
    yy, xx = np.indices(shape)
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def render_clip(n_frames: int = 10, shape=(72, 128), seed: int = 0):
    """Return ``(frames, disparities, detections, fixations)`` for one clip."""
    rng = np.random.default_rng(seed)
    h, w = shape
    horizon = int(round(h * rng.uniform(0.35, 0.45)))
    yy = np.arange(h, dtype=np.float64)[:, None] * np.ones((1, w))
    sky = np.array([110.0, 160.0, 225.0])
    ground = np.array([70.0, 120.0, 60.0])
    base = np.where((yy < horizon)[..., None], sky, ground) + (yy / h)[..., None] * 20.0
    base = base + rng.normal(0, 2.0, base.shape)
    base_disp = np.where(yy < horizon, 0.0, 4.0 * (yy - horizon) / max(h - horizon, 1))

    # static textured block
    bx, by = int(rng.integers(w // 2, w - 22)), int(rng.integers(horizon + 2, max(h - 18, horizon + 3)))
    stripes = ((np.arange(16)[None, :] // 2) % 2) * np.ones((16, 1))
    base[by : by + 16, bx : bx + 16] = (90 + 100 * stripes)[..., None]
    base_disp[by : by + 16, bx : bx + 16] = 3.0

    # static face-like blob
    fx_c, fy_c = int(rng.integers(12, w // 3)), int(rng.integers(min(horizon + 8, h - 11), h - 10))
    face = _disk(shape, fx_c, fy_c, 6)
    base[face] = [225.0, 180.0, 150.0]
    base_disp[face] = 5.0

    frames, disps, dets, fix_rows = [], [], [], []
    x0, vx = float(rng.uniform(20, 40)), float(rng.choice([-3.0, 3.0]) * rng.uniform(0.8, 1.2))
    if vx < 0:
        x0 = w - x0
    cy = float(rng.uniform(h * 0.3, h * 0.6))
    for t in range(n_frames):
        cx = x0 + vx * t
        r = 6 + 0.3 * t
        ball = _disk(shape, cx, cy, r)
        f = base.copy()
        f[ball] = [220.0, 30.0, 35.0]
        d = base_disp.copy()
        d[ball] = 8.0 + 0.5 * t
        frames.append(np.clip(f, 0, 255))
        disps.append(d)
        dets.append((t, "face", fx_c - 7, fy_c - 7, 15, 15, 0.95))
        dets.append((t, "vehicle", cx - r - 1, cy - r - 1, 2 * r + 3, 2 * r + 3, 0.9))
        dets.append((t, "horizon", 0, horizon - 2, w, 4, 0.8))
        for s in range(SUBJECTS):
            for k in range(2):
                u = rng.random()
                if u < 0.6:
                    tx, ty = cx, cy
                elif u < 0.85:
                    tx, ty = fx_c, fy_c
                else:
                    tx, ty = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
                px = float(np.clip(tx + rng.normal(0, 2.5), 0, w - 1))
                py = float(np.clip(ty + rng.normal(0, 2.5), 0, h - 1))
                fix_rows.append((f"s{s}", t, px, py, 1000.0 * t / 30 + 150.0 * k))
    subj, fr, xs, ys, ts = zip(*fix_rows)
    return frames, disps, dets, FixationSet(subj, fr, xs, ys, ts)


def write_clip(out_dir, n_frames: int = 10, shape=(72, 128), seed: int = 0) -> dict:
    """Write one clip and return its manifest entry (paths relative to ``out_dir``'s parent)."""
    out_dir = Path(out_dir)
    frames, disps, dets, fx = render_clip(n_frames, shape, seed)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    (out_dir / "disparity").mkdir(parents=True, exist_ok=True)
    for t, (f, d) in enumerate(zip(frames, disps)):
        write_frame(out_dir / "frames" / f"{t:04d}.png", f)
        write_disparity_pgm(out_dir / "disparity" / f"{t:04d}.pgm", d, DISPARITY_SCALE, DISPARITY_OFFSET)
    lines = ["# frame class x y w h score"]
    lines += [f"{t} {c} {x:.2f} {y:.2f} {bw:.2f} {bh:.2f} {s:.2f}" for t, c, x, y, bw, bh, s in dets]
    (out_dir / "detections.txt").write_text("\n".join(lines) + "\n")
    save_fixations(out_dir / "fixations.csv", fx)
    name = out_dir.name
    return {
        "frames": f"{name}/frames",
        "disparity": f"{name}/disparity",
        "disparity_scale": DISPARITY_SCALE,
        "disparity_offset": DISPARITY_OFFSET,
        "flow": "builtin",
        "detections": f"{name}/detections.txt",
        "fixations": f"{name}/fixations.csv",
    }


def make_demo(root, n_videos: int = 3, n_frames: int = 10, shape=(72, 128), seed: int = 0) -> Path:
    """Write ``n_videos`` clips plus ``manifest.json``; the first clip is the training split."""
    if n_videos < 3:
        raise ValueError("the demo needs at least 3 videos (1 train, 2 validation)")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    videos = {}
    for i in range(n_videos):
        vid = f"clip{i + 1}"
        videos[vid] = write_clip(root / vid, n_frames, shape, seed + i)
    manifest = {
        "root": ".",
        "output_dir": "out",
        "seed": seed,
        "geometry": {"res_w": shape[1], "res_h": shape[0]},
        "videos": videos,
        "split": {"train": ["clip1"], "validation": sorted(v for v in videos if v != "clip1")},
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
