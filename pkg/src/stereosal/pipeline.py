"""Per-frame extraction of the full feature stack."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import depth as depth_mod
from . import highlevel, motion, photometric
from .fusion import FEATURE_KEYS, HIGH_LEVEL_KEYS, MOTION_KEYS, FeatureStack, assemble_stack
from .geometry import ViewingGeometry, build_fovea_mask, disparity_to_depth
from .imaging import as_frame, as_map, luminance
from .segmentation import SegmentLabeling, SegmentParams, compactness_map, segment, segment_reduce, size_filter
from .shaping import ShapingConfig, shape_feature


@dataclass(frozen=True)
class PipelineConfig:
    segmentation: SegmentParams = field(default_factory=SegmentParams)
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    color_bins: int = 8
    classical_variance: bool = False
    gabor_wavelengths: tuple = (4, 8, 16, 32)
    gabor_orientations: int = 8
    flow_block: int = 16
    flow_search: int = 24
    motion_reducer: str = "mean"
    motion_scaling: str = "normalize"
    surprise_bins: int = 16
    depth_smooth_sigma: float = 2.0
    use_discomfort: bool = True
    feather_px: float = highlevel.FEATHER_PX

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = dict(d or {})
        kw = {}
        if "segmentation" in d:
            kw["segmentation"] = SegmentParams(**d.pop("segmentation"))
        if "shaping" in d:
            kw["shaping"] = ShapingConfig.from_dict(d.pop("shaping"))
        if "gabor_wavelengths" in d:
            kw["gabor_wavelengths"] = tuple(d.pop("gabor_wavelengths"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config key(s): {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class MotionMemory:
    """What the next frame needs from this one."""

    frame: np.ndarray
    depth: np.ndarray
    speed: np.ndarray | None


@dataclass(eq=False)
class FrameResult:
    stack: FeatureStack
    memory: MotionMemory
    labeling: SegmentLabeling
    timings: dict


class _Timer:
    def __init__(self):
        self.t = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        yield
        self.t[name] = self.t.get(name, 0.0) + time.perf_counter() - t0


class FeatureExtractor:
    """Holds the immutable per-run state (geometry, fovea mask, tables, filters)."""

    def __init__(self, geometry: ViewingGeometry, shape, config: PipelineConfig | None = None, features=FEATURE_KEYS):
        self.config = config or PipelineConfig()
        h, w = shape
        self.shape = (int(h), int(w))
        self.geometry = geometry if (geometry.res_w, geometry.res_h) == (w, h) else geometry.scaled_to(w, h)
        self.fovea = build_fovea_mask(self.geometry)
        self.features = tuple(features)
        self.spectral = photometric.load_spectral_table()
        self.empirical = photometric.load_empirical_table()
        self.bank = photometric.gabor_bank(self.config.gabor_wavelengths, self.config.gabor_orientations)

    def _wants(self, *keys):
        return any(k in self.features for k in keys)

    def extract(self, frame, disparity, prev: MotionMemory | None = None, flow: motion.FlowField | None = None,
                detections=(), frame_id: str = "") -> FrameResult:
        """Compute, shape and stack every selected feature for one frame.

        ``prev`` carries the previous frame of the same shot; without it the
        motion maps are zero.  ``flow`` overrides built-in block matching.
        """
        cfg = self.config
        frame = as_frame(frame)
        disparity = as_map(disparity, "disparity")
        if frame.shape[:2] != self.shape or disparity.shape != self.shape:
            raise ValueError(f"frame {frame.shape[:2]} / disparity {disparity.shape} do not match {self.shape}")
        g, fov = self.geometry, self.fovea
        timer = _Timer()
        raw: dict[str, np.ndarray] = {}

        with timer("segmentation"):
            seg = segment(frame, cfg.segmentation)
            compact = compactness_map(seg)
            size_mask = size_filter(seg, g)

        if self._wants("brightness_var_contrast", "brightness_contrast"):
            with timer("brightness"):
                b = photometric.brightness_maps(frame, fov, seg, cfg.classical_variance)
                raw["brightness_var_contrast"] = b["variance_contrast"]
                raw["brightness_contrast"] = b["contrast"]
        with timer("color"):
            if "color_histogram" in self.features:
                raw["color_histogram"] = segment_reduce(photometric.color_histogram_map(frame, cfg.color_bins), seg)
            if "color_warmth" in self.features:
                raw["color_warmth"] = segment_reduce(photometric.warmth_map(frame), seg)
            if "color_saturation" in self.features:
                raw["color_saturation"] = segment_reduce(photometric.saturation_map(frame), seg)
            if "color_hvs" in self.features:
                raw["color_hvs"] = segment_reduce(photometric.hvs_sensitivity_map(frame, self.spectral), seg)
            if "color_empirical" in self.features:
                raw["color_empirical"] = segment_reduce(photometric.empirical_color_map(frame, self.empirical), seg)
            if self._wants("color_contrast_a", "color_contrast_b"):
                cv = photometric.color_variance_contrast(frame, fov, seg, cfg.classical_variance)
                raw["color_contrast_a"] = cv["a_map"]
                raw["color_contrast_b"] = cv["b_map"]
        if "texture" in self.features:
            with timer("texture"):
                raw["texture"] = photometric.texture_map(frame, fov, seg, self.bank)

        with timer("depth"):
            depth_cm = disparity_to_depth(disparity, g)
            if "depth" in self.features:
                raw["depth"] = depth_mod.depth_feature_from_disparity(
                    disparity, seg, g, cfg.depth_smooth_sigma, cfg.use_discomfort)

        speed = None
        with timer("motion"):
            if prev is None:
                for k in MOTION_KEYS:
                    raw[k] = np.zeros(self.shape)
            else:
                if flow is None:
                    flow = motion.block_matching_flow(luminance(prev.frame), luminance(frame),
                                                      cfg.flow_block, cfg.flow_search)
                dz_raw = motion.dz_raw(prev.depth, depth_cm, flow)
                dz = motion.scale_component(dz_raw, cfg.motion_scaling)
                fr = g.frame_rate
                red = cfg.motion_reducer
                v = motion.velocity_maps(flow, dz, fr, seg, red, cfg.motion_scaling)
                speed = v["speed"]
                raw["motion_dx"], raw["motion_dy"] = v["Vx"], v["Vy"]
                raw["motion_dz"], raw["motion_v"] = v["Vz"], v["V"]
                raw["motion_vz_emphasis"] = motion.z_emphasized_velocity(flow, dz, fr, seg, red, cfg.motion_scaling)
                raw["motion_acceleration"] = motion.acceleration_map(speed, prev.speed, fr, seg, red)
                raw["motion_surprise"] = motion.surprise_map(flow.dx, flow.dy, dz_raw, seg, cfg.surprise_bins, red)

        with timer("highlevel"):
            dets = list(detections)
            for k in HIGH_LEVEL_KEYS:
                if k in self.features:
                    raw[k] = highlevel.class_map(dets, k, self.shape, cfg.feather_px)

        with timer("shaping"):
            shaped = {}
            for k in self.features:
                fc = cfg.shaping.for_feature(k, high_level=k in HIGH_LEVEL_KEYS)
                shaped[k] = shape_feature(raw[k], compact, size_mask, fc)
            stack = assemble_stack(shaped, frame_id, self.features)

        return FrameResult(stack, MotionMemory(frame, depth_cm, speed), seg, timer.t)


def extract_sequence(extractor: FeatureExtractor, frames, disparities, detections_by_frame=None, flows=None,
                     frame_ids=None):
    """Generator of :class:`FrameResult` over an ordered shot."""
    detections_by_frame = detections_by_frame or {}
    prev = None
    for i, (f, d) in enumerate(zip(frames, disparities)):
        flow = None if flows is None else flows[i]
        fid = frame_ids[i] if frame_ids is not None else str(i)
        res = extractor.extract(f, d, prev, flow, detections_by_frame.get(i, ()), fid)
        prev = res.memory
        yield res
