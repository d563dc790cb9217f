"""Feature stacks, training-set sampling, forest fusion and baseline fusion schemes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls

from .forest import ForestModel
from .imaging import as_map, normalize01

# (key, report name); the order is the canonical column order of every stack
FEATURES = (
    ("brightness_var_contrast", "Brightness Var. Contrast"),
    ("brightness_contrast", "Brightness Contrast"),
    ("color_histogram", "Color1 (histogram)"),
    ("color_warmth", "Color2 (Warmth)"),
    ("color_saturation", "Color3 (Saturation)"),
    ("color_hvs", "Color4 (HVS sensitivity)"),
    ("color_empirical", "Color5 (Empirical)"),
    ("color_contrast_b", "Color6 (Contrast-b')"),
    ("color_contrast_a", "Color7 (Contrast-a')"),
    ("texture", "Texture"),
    ("motion_dx", "Motion1 (Dx)"),
    ("motion_dy", "Motion2 (Dy)"),
    ("motion_dz", "Motion3 (Dz)"),
    ("motion_v", "Motion4 (V)"),
    ("motion_vz_emphasis", "Motion5 (Z-emphasis)"),
    ("motion_acceleration", "Motion6 (A)"),
    ("motion_surprise", "Motion7 (Surprise element)"),
    ("depth", "Depth"),
    ("face", "Face"),
    ("person", "Person"),
    ("vehicle", "Vehicle"),
    ("animal", "Animals"),
    ("text", "Text"),
    ("horizon", "Horizon"),
)
FEATURE_KEYS = tuple(k for k, _ in FEATURES)
FEATURE_LABELS = dict(FEATURES)
HIGH_LEVEL_KEYS = ("face", "person", "vehicle", "animal", "text", "horizon")
MOTION_KEYS = tuple(k for k in FEATURE_KEYS if k.startswith("motion_"))


def resolve_features(names) -> tuple[str, ...]:
    """Accept keys or report names; return keys in canonical order."""
    if names is None:
        return FEATURE_KEYS
    lookup = {k.lower(): k for k in FEATURE_KEYS}
    lookup.update({label.lower(): k for k, label in FEATURES})
    chosen = set()
    for n in names:
        key = lookup.get(str(n).strip().lower())
        if key is None:
            raise ValueError(f"unknown feature {n!r}")
        chosen.add(key)
    return tuple(k for k in FEATURE_KEYS if k in chosen)


@dataclass(eq=False)
class FeatureStack:
    frame_id: str
    names: tuple[str, ...]
    maps: np.ndarray  # (n_features, H, W)

    @property
    def shape(self):
        return self.maps.shape[1:]

    def matrix(self) -> np.ndarray:
        """Pixels as rows, features as columns."""
        return self.maps.reshape(len(self.names), -1).T

    def __getitem__(self, name: str) -> np.ndarray:
        return self.maps[self.names.index(name)]


def assemble_stack(maps: dict, frame_id: str = "", names=FEATURE_KEYS) -> FeatureStack:
    """Order feature maps canonically; absent detection maps become zeros."""
    names = tuple(names)
    missing = [k for k in names if k not in maps and k not in HIGH_LEVEL_KEYS]
    if missing:
        raise ValueError(f"missing feature maps: {missing}")
    shapes = {np.shape(maps[k]) for k in names if k in maps}
    if len(shapes) != 1:
        raise ValueError(f"feature maps disagree in size: {sorted(shapes)}")
    shape = shapes.pop()
    stack = np.empty((len(names),) + shape)
    for i, k in enumerate(names):
        m = as_map(maps[k], k) if k in maps else np.zeros(shape)
        if m.min() < -1e-9 or m.max() > 1 + 1e-9:
            raise ValueError(f"feature {k!r} is not normalized to [0, 1]")
        stack[i] = np.clip(m, 0.0, 1.0)
    return FeatureStack(frame_id, names, stack)


@dataclass(eq=False)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    provenance: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))  # video, frame, pixel

    def __len__(self):
        return len(self.y)


def sample_pixels(target, n: int, rng: np.random.Generator, top_fraction: float = 0.1) -> np.ndarray:
    """Half from the top-decile target pixels, half uniformly over the rest of the frame.

    No pixel is drawn twice.
    """
    t = np.asarray(target, dtype=np.float64).ravel()
    n = min(n, t.size)
    n_top = n // 2
    cut = np.quantile(t, 1 - top_fraction)
    top = np.nonzero(t >= cut)[0]
    pick_top = rng.choice(top, size=min(n_top, len(top)), replace=False)
    remaining = np.setdiff1d(np.arange(t.size), pick_top, assume_unique=True)
    rest = rng.choice(remaining, size=n - len(pick_top), replace=False)
    return np.concatenate([pick_top, rest])


def sample_training(videos, frames_per_video: int, pixels_per_frame: int, seed: int = 0,
                    names=FEATURE_KEYS) -> TrainingSet:
    """Draw pixel samples from the first ``frames_per_video`` frames of each video.

    ``videos`` maps a video id to a sequence of ``(FeatureStack, target)``
    pairs where ``target`` is the fixation-density map scaled to [0, 1].
    """
    names = tuple(names)
    xs, ys, prov = [], [], []
    for vi, vid in enumerate(sorted(videos)):
        for fi, item in enumerate(list(videos[vid])[:frames_per_video]):
            stack, target = item
            if target is None:
                raise ValueError(f"video {vid!r} frame {fi}: no fixation target")
            target = as_map(target, "target")
            if target.shape != stack.shape:
                raise ValueError(f"video {vid!r} frame {fi}: target {target.shape} vs stack {stack.shape}")
            rng = np.random.default_rng(np.random.SeedSequence([seed, vi, fi]))
            idx = sample_pixels(target, pixels_per_frame, rng)
            cols = [stack.names.index(k) for k in names]
            xs.append(stack.maps[cols].reshape(len(cols), -1)[:, idx].T)
            ys.append(target.ravel()[idx])
            prov.append(np.stack([np.full(len(idx), vi), np.full(len(idx), fi), idx], axis=1))
    if not xs:
        return TrainingSet(np.zeros((0, len(names))), np.zeros(0), names, np.zeros((0, 3), dtype=np.int64))
    return TrainingSet(np.concatenate(xs), np.concatenate(ys), names, np.concatenate(prov).astype(np.int64))


def predict_map(model: ForestModel, stack: FeatureStack) -> np.ndarray:
    if tuple(model.feature_names) != tuple(stack.names):
        cols = [n for n in model.feature_names if n not in stack.names]
        if cols:
            raise ValueError(f"stack lacks model features {cols}")
        sel = np.array([stack.names.index(n) for n in model.feature_names])
        X = stack.maps[sel].reshape(len(sel), -1).T
    else:
        X = stack.matrix()
    return normalize01(model.predict(X).reshape(stack.shape))


# ---------------------------------------------------------------- baselines

SCHEMES = ("average", "multiplication", "maximum", "spp", "gnlns", "lmswa", "sdw")


def local_maxima(m) -> np.ndarray:
    """Strict maxima over the 8-neighbourhood (outside the frame counts as -inf)."""
    fp = np.ones((3, 3), dtype=bool)
    fp[1, 1] = False
    nb = ndimage.maximum_filter(m, footprint=fp, mode="constant", cval=-np.inf)
    return m > nb


def gnl_weight(m) -> float:
    """``(M - mean of the other local maxima)^2``; a single peak keeps weight ``M^2``."""
    m = as_map(m)
    peaks = m[local_maxima(m)]
    if peaks.size == 0:
        return 0.0
    top = m.max()
    others = np.sort(peaks)[:-1] if peaks.size > 1 else np.empty(0)
    mbar = others.mean() if others.size else 0.0
    return float((top - mbar) ** 2)


def fit_lmswa(feature_columns, target) -> np.ndarray:
    """Non-negative least-squares weights of the maps against the target."""
    A = np.asarray(feature_columns, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64).ravel()
    w, _ = nnls(A, b)
    return w


def fuse_baseline(maps, scheme: str, targets=None, weights=None) -> np.ndarray:
    """Combine normalized maps with a fixed rule.

    ``lmswa`` needs either fitted ``weights`` or a ``targets`` map to fit
    them on the given maps.
    """
    ms = np.stack([as_map(m) for m in maps])
    if scheme == "average":
        return ms.mean(axis=0)
    if scheme == "multiplication":
        return ms.prod(axis=0)
    if scheme == "maximum":
        return ms.max(axis=0)
    if scheme == "spp":
        return normalize01(ms.sum(axis=0) + ms.prod(axis=0))
    if scheme == "gnlns":
        return normalize01(sum(m * gnl_weight(m) for m in ms))
    if scheme == "sdw":
        sd = ms.reshape(len(ms), -1).std(axis=1)
        if sd.sum() == 0:
            return np.zeros(ms.shape[1:])
        return np.tensordot(sd / sd.sum(), ms, axes=1)
    if scheme == "lmswa":
        if weights is None:
            if targets is None:
                raise ValueError("lmswa fusion needs target maps (or fitted weights)")
            weights = fit_lmswa(ms.reshape(len(ms), -1).T, targets)
        w = np.asarray(weights, dtype=np.float64)
        if w.sum() <= 0:
            return np.zeros(ms.shape[1:])
        return np.tensordot(w / w.sum(), ms, axes=1)
    raise ValueError(f"unknown fusion scheme {scheme!r}; choose from {SCHEMES + ('forest',)}")
