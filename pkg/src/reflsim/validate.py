"""Re-check the photometric invariants of emitted examples."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimulationConfig
from .dataset import OUTPUT_KEYS, DatasetManifest
from .image_core import read_image
from .search import ssim_weighted

ADDITIVITY_TOL = 1e-5


@dataclass(frozen=True)
class Violation:
    seed: int
    message: str

    def __str__(self):
        return f"seed {self.seed}: {self.message}"


@dataclass
class ValidationReport:
    checked: int = 0
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def additivity_error(m: np.ndarray, t: np.ndarray, r: np.ndarray) -> float:
    """max |m - (t + r)| relative to max(m)."""
    m = np.asarray(m, np.float64)
    peak = float(m.max())
    err = float(np.abs(m - (np.asarray(t, np.float64) + np.asarray(r, np.float64))).max())
    return err / peak if peak > 0 else err


def validate_record(record: dict, base: Path, config: SimulationConfig) -> list[Violation]:
    seed = int(record["seed"])
    outputs = record.get("outputs")
    if not outputs:
        return [Violation(seed, "kept record has no outputs")]
    try:
        imgs = {k: read_image(base / outputs[k]) for k in OUTPUT_KEYS}
    except (OSError, ValueError, KeyError) as exc:
        return [Violation(seed, f"cannot load outputs: {exc}")]
    found = []
    err = additivity_error(imgs["m"].data, imgs["t"].data, imgs["r"].data)
    if not err < ADDITIVITY_TOL:
        found.append(Violation(seed, f"m != t + r (relative error {err:.3g})"))
    whites = {imgs[k].white_xy for k in OUTPUT_KEYS}
    if len(whites) != 1:
        found.append(Violation(seed, f"white points differ: {sorted(whites)}"))
    report = ssim_weighted(imgs["m"], imgs["t"], config)
    lo, hi = config.ssim_range
    if not lo <= report.mean_ssim <= hi:
        found.append(Violation(seed, f"mean SSIM {report.mean_ssim:.4f} outside [{lo}, {hi}]"))
    if report.std_ssim < config.ssim_std_min:
        found.append(Violation(seed, f"SSIM std {report.std_ssim:.4f} below {config.ssim_std_min}"))
    return found


def validate_manifest(manifest: DatasetManifest | str | Path,
                      config: SimulationConfig | None = None) -> ValidationReport:
    config = config or SimulationConfig()
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.load(manifest)
    base = manifest.path.parent if manifest.path is not None else Path(".")
    report = ValidationReport()
    kept = manifest.kept()
    if not kept:
        report.warnings.append("manifest has no kept examples")
    for record in kept:
        report.checked += 1
        report.violations.extend(validate_record(record, base, config))
    return report
