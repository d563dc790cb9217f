"""Map conditioning applied to every feature before fusion.

Order is fixed: compactness mask, size mask, renormalization, then the
optional sparsity projection.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .imaging import as_map, normalize01, sparsity_project


@dataclass(frozen=True)
class ShapingConfig:
    apply_compactness: bool = True
    apply_size_filter: bool = True
    apply_sparsity: bool = True
    overrides: dict = field(default_factory=dict)  # feature name -> {flag: bool}

    def for_feature(self, name: str, high_level: bool = False) -> "ShapingConfig":
        cfg = replace(self, apply_sparsity=False) if high_level else self
        extra = self.overrides.get(name)
        return replace(cfg, overrides={}, **extra) if extra else cfg

    @classmethod
    def from_dict(cls, d: dict | None) -> "ShapingConfig":
        d = dict(d or {})
        known = ("apply_compactness", "apply_size_filter", "apply_sparsity", "overrides")
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown shaping config key(s): {sorted(unknown)}")
        for name, extra in d.get("overrides", {}).items():
            bad = set(extra) - set(known[:3])
            if bad:
                raise ValueError(f"shaping override for {name!r} has unknown flag(s): {sorted(bad)}")
        return cls(**d)


def shape_feature(f, compactness, size_mask, cfg: ShapingConfig = ShapingConfig()) -> np.ndarray:
    out = as_map(f, "feature")
    if cfg.apply_compactness:
        out = out * as_map(compactness, "compactness")
    if cfg.apply_size_filter:
        out = out * as_map(size_mask, "size_mask")
    out = normalize01(out)
    if cfg.apply_sparsity:
        out = sparsity_project(out)
    return out
