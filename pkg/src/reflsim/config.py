"""Simulation settings, loadable from and savable to JSON."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class SimulationConfig:
    # Camera and glass geometry.
    azimuth_max_deg: float = 50.0
    fov_range_deg: tuple[float, float] = (50.0, 80.0)
    kappa_range: tuple[float, float] = (1.47, 1.53)
    thickness_range_mm: tuple[float, float] = (8.0, 20.0)
    distance_range_mm: tuple[float, float] = (500.0, 2000.0)
    double_pane_probability: float = 0.5
    object_dist_range_ft: tuple[float, float] = (1.0, 100.0)
    focus_dist_range_ft: tuple[float, float] = (1.0, 100.0)
    f_number: float = 1.6
    focal_length_mm: float = 26.0
    sensor_height_mm: float = 24.0
    max_missed_pixels: int = 4
    ibl_max_oversample: float = 4.0

    # Pair gates.
    max_delta_inclination_deg: float = 15.0
    max_inclination_deg: float = 45.0
    max_roll_deg: float = 10.0
    include_outdoor_pairs: bool = False

    # Photometric settings and mixture search.
    saturation_fraction: float = 0.999
    max_white_shift_mired: float = 100.0
    ssim_range: tuple[float, float] = (0.4, 0.94)
    ssim_std_min: float = 0.05
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    exposure_k: float = 2.0

    # Dataset generation.
    scenarios_per_pair: int = 2
    resolution: int = 256
    split_fractions: tuple[float, float, float] = (0.8, 0.15, 0.05)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        for name in ("fov_range_deg", "kappa_range", "thickness_range_mm", "distance_range_mm",
                     "object_dist_range_ft", "focus_dist_range_ft", "ssim_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be an ordered (low, high) pair")
        if not 1.0 < self.kappa_range[0]:
            raise ValueError("refractive index must exceed 1")
        if not (0 < self.fov_range_deg[0] and self.fov_range_deg[1] < 180):
            raise ValueError("field of view must lie in (0, 180)")
        if self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd")

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_json(cls, d: dict) -> "SimulationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SimulationConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
