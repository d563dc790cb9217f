"""Readers and writers for maps, frames, flow fields and label images.

Raw float container (``.f32``): 8-byte header of two little-endian uint32
values (width, height) followed by ``width * height`` little-endian float32
values in row-major order.
"""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import as_map, is_normalized

FLO_MAGIC = 202021.25


def write_raw(path, m) -> None:
    a = np.asarray(m, dtype="<f4")
    if a.ndim != 2:
        raise ValueError(f"raw container holds 2-D maps, got shape {a.shape}")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated raw header")
    w, h = struct.unpack("<II", data[:8])
    if len(data) != 8 + 4 * w * h:
        raise ValueError(f"{path}: expected {w}x{h} floats, found {(len(data) - 8) // 4}")
    return np.frombuffer(data, dtype="<f4", offset=8).reshape(h, w).astype(np.float64)


_PNM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM, 8- or 16-bit (16-bit samples are big-endian)."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError(f"{path}: malformed PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    w, h, maxval = (int(x) for x in fields[1:])
    pos += 1  # single whitespace byte after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - pos < n:
        raise ValueError(f"{path}: truncated PGM raster")
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.int64)


def write_pgm(path, img, maxval: int | None = None) -> None:
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError("PGM holds single-channel images")
    if maxval is None:
        maxval = 65535 if a.max(initial=0) > 255 else 255
    if a.min(initial=0) < 0 or a.max(initial=0) > maxval:
        raise ValueError(f"PGM values must lie in [0, {maxval}]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(a.astype(dtype).tobytes())


def quantize(m, bits: int = 8) -> np.ndarray:
    """Map a normalized raster to 8- or 16-bit integers."""
    a = as_map(m)
    if not is_normalized(a):
        raise ValueError("only normalized maps can be quantized")
    top = (1 << bits) - 1
    return np.rint(np.clip(a, 0.0, 1.0) * top).astype(np.uint16 if bits > 8 else np.uint8)


def write_map_image(path, m, bits: int = 8) -> None:
    """Write a normalized map as PNG or PGM depending on the suffix."""
    q = quantize(m, bits)
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, q, maxval=(1 << bits) - 1)
    elif bits > 8:
        Image.fromarray(q.astype(np.uint16)).save(path)
    else:
        Image.fromarray(q).save(path)


def read_map_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale PNG or PGM as a map in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        a = read_pgm(path)
        top = 65535 if a.max(initial=0) > 255 else 255
        return a / top
    with Image.open(path) as im:
        mode = im.mode
        a = np.asarray(im)
    if a.ndim == 3:
        a = a[..., 0]
    top = 255 if mode in ("L", "P", "RGB", "RGBA") else 65535
    return a.astype(np.float64) / top


def read_frame(path) -> np.ndarray:
    """Read an RGB frame as a float (H, W, 3) array in [0, 255]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def write_frame(path, frame) -> None:
    Image.fromarray(np.clip(np.rint(frame), 0, 255).astype(np.uint8), mode="RGB").save(path)


def read_disparity(path, scale: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Disparity in pixels from a raw container or an integer PGM/PNG.

    Integer images store ``(disparity - offset) * scale``; the inverse
    ``value / scale + offset`` is applied on read.
    """
    path = Path(path)
    if path.suffix.lower() == ".f32":
        return read_raw(path)
    if path.suffix.lower() == ".pgm":
        a = read_pgm(path).astype(np.float64)
    else:
        with Image.open(path) as im:
            a = np.asarray(im, dtype=np.float64)
    return a / scale + offset


def write_disparity_pgm(path, disparity, scale: float = 1.0, offset: float = 0.0) -> None:
    q = np.rint((np.asarray(disparity, dtype=np.float64) - offset) * scale)
    write_pgm(path, q.astype(np.int64), maxval=65535)


def read_flo(path):
    """Read a Middlebury ``.flo`` file; returns ``(dx, dy)``."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ValueError(f"{path}: truncated flow header")
    magic, = struct.unpack("<f", data[:4])
    if magic != FLO_MAGIC:
        raise ValueError(f"{path}: bad flow magic {magic!r} (expected 'PIEH')")
    w, h = struct.unpack("<ii", data[4:12])
    if w <= 0 or h <= 0 or len(data) != 12 + 8 * w * h:
        raise ValueError(f"{path}: inconsistent flow dimensions {w}x{h}")
    uv = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float64)
    return uv[..., 0].copy(), uv[..., 1].copy()


def write_flo(path, dx, dy) -> None:
    dx = np.asarray(dx, dtype="<f4")
    dy = np.asarray(dy, dtype="<f4")
    h, w = dx.shape
    with open(path, "wb") as fh:
        fh.write(b"PIEH")
        fh.write(struct.pack("<ii", w, h))
        fh.write(np.stack([dx, dy], axis=-1).tobytes())
