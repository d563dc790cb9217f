"""Run manifests: which videos to process, where their inputs live, the split."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import ViewingGeometry

OUTPUT_ENV = "STEREOSAL_OUTPUT_DIR"
FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff")
DISPARITY_SUFFIXES = (".pgm", ".png", ".f32")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class VideoEntry:
    name: str
    frames: Path
    disparity: Path
    flow: str | Path = "builtin"
    detections: Path | None = None
    fixations: Path | None = None
    disparity_scale: float = 1.0
    disparity_offset: float = 0.0

    def frame_files(self) -> list[Path]:
        return sorted(p for p in self.frames.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)

    def disparity_files(self) -> list[Path]:
        return sorted(p for p in self.disparity.iterdir() if p.suffix.lower() in DISPARITY_SUFFIXES)

    def flow_files(self) -> list[Path] | None:
        if self.flow == "builtin":
            return None
        return sorted(p for p in Path(self.flow).iterdir() if p.suffix.lower() == ".flo")


@dataclass(frozen=True)
class RunManifest:
    path: Path
    root: Path
    videos: dict
    train: tuple = ()
    validation: tuple = ()
    output_dir: Path = Path("out")
    config_path: Path | None = None
    seed: int = 0
    geometry: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path).resolve()
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        base = path.parent
        root = (base / d.get("root", ".")).resolve()
        if "videos" not in d or not d["videos"]:
            raise ManifestError(f"{path}: no videos listed")
        videos = {}
        for name, v in d["videos"].items():
            try:
                flow = v.get("flow", "builtin")
                videos[name] = VideoEntry(
                    name=name,
                    frames=root / v["frames"],
                    disparity=root / v["disparity"],
                    flow=flow if flow == "builtin" else root / flow,
                    detections=root / v["detections"] if v.get("detections") else None,
                    fixations=root / v["fixations"] if v.get("fixations") else None,
                    disparity_scale=float(v.get("disparity_scale", 1.0)),
                    disparity_offset=float(v.get("disparity_offset", 0.0)),
                )
            except KeyError as exc:
                raise ManifestError(f"{path}: video {name!r} lacks {exc}") from None
        split = d.get("split", {})
        train = tuple(split.get("train", ()))
        validation = tuple(split.get("validation", ()))
        overlap = set(train) & set(validation)
        if overlap:
            raise ManifestError(f"{path}: videos in both train and validation: {sorted(overlap)}")
        unknown = (set(train) | set(validation)) - set(videos)
        if unknown:
            raise ManifestError(f"{path}: split names unknown videos {sorted(unknown)}")
        out = os.environ.get(OUTPUT_ENV) or d.get("output_dir", "out")
        cfg = d.get("config")
        return cls(
            path=path,
            root=root,
            videos=videos,
            train=train,
            validation=validation,
            output_dir=(base / out).resolve(),
            config_path=(base / cfg).resolve() if cfg else None,
            seed=int(d.get("seed", 0)),
            geometry=dict(d.get("geometry", {})),
        )

    def missing_inputs(self, name: str) -> list[str]:
        """Referenced paths of one video that do not exist."""
        v = self.videos[name]
        paths = [v.frames, v.disparity, v.detections, v.fixations]
        if v.flow != "builtin":
            paths.append(Path(v.flow))
        return [str(p) for p in paths if p is not None and not p.exists()]

    def load_config(self, override=None) -> dict:
        p = Path(override) if override else self.config_path
        if p is None:
            return {}
        try:
            return json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read config {p}: {exc}") from None

    def viewing_geometry(self, config: dict | None = None) -> ViewingGeometry:
        d = dict((config or {}).get("geometry", {}))
        d.update(self.geometry)
        return ViewingGeometry.from_dict(d)
