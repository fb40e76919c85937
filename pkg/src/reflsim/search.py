"""Well-exposed / well-mixed gates for candidate mixtures."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import SimulationConfig
from .culling import CullReason
from .image_core import LinearImage, encode_srgb


@dataclass(frozen=True, eq=False)
class SsimReport:
    mean_ssim: float
    std_ssim: float
    ssim_map: np.ndarray


@dataclass(frozen=True)
class CullDecision:
    keep: bool
    reason: CullReason = CullReason.NONE

    def __post_init__(self):
        if self.keep != (self.reason is CullReason.NONE):
            raise ValueError("keep must hold exactly when there is no cull reason")

    @classmethod
    def culled(cls, reason: CullReason) -> "CullDecision":
        return cls(False, reason)


KEEP = CullDecision(True)


@dataclass(frozen=True)
class CorpusStats:
    mean: float
    sigma: float
    n: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "sigma": self.sigma, "n": self.n}

    @classmethod
    def from_json(cls, d: dict) -> "CorpusStats":
        return cls(float(d["mean"]), float(d["sigma"]), int(d["n"]))

    @classmethod
    def from_means(cls, means) -> "CorpusStats":
        means = np.asarray(means, dtype=np.float64)
        return cls(float(means.mean()), float(means.std()), int(means.size))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CorpusStats":
        return cls.from_json(json.loads(Path(path).read_text()))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def ssim_map(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
             k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> np.ndarray:
    """Per-pixel SSIM of two single-channel images (Gaussian window, reflect padding)."""
    g = _gaussian_window(window, sigma)

    def blur(x):
        x = ndimage.correlate1d(x, g, axis=0, mode="reflect")
        return ndimage.correlate1d(x, g, axis=1, mode="reflect")

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim_weighted(m: LinearImage, t: LinearImage,
                  config: SimulationConfig | None = None) -> SsimReport:
    """Channel-weighted SSIM map between gamma-encoded ``m`` and ``t``.

    Channel weights are the per-channel means of linear ``m``.
    """
    config = config or SimulationConfig()
    if m.data.shape != t.data.shape:
        raise ValueError(f"dimension mismatch {m.data.shape} vs {t.data.shape}")
    em, et = encode_srgb(m.data), encode_srgb(t.data)
    weights = np.asarray(m.data, dtype=np.float64).reshape(3, -1).mean(axis=1)
    total = weights.sum()
    weights = weights / total if total > 0 else np.full(3, 1 / 3)
    combined = sum(
        w * ssim_map(em[ch], et[ch], config.ssim_window, config.ssim_sigma,
                     config.ssim_k1, config.ssim_k2)
        for ch, w in enumerate(weights))
    return SsimReport(float(combined.mean()), float(combined.std()), combined)


def image_mean(img: LinearImage) -> float:
    return float(np.asarray(img.data, dtype=np.float64).mean())


def well_exposed(m: LinearImage, stats: CorpusStats, k: float = 2.0) -> bool:
    if not stats.sigma > 0:
        raise ValueError("corpus statistics have zero spread")
    return abs(image_mean(m) - stats.mean) <= k * stats.sigma


def cull(report: SsimReport, exposed: bool, config: SimulationConfig | None = None,
         white_shift_mired: float = 0.0) -> CullDecision:
    """Decide whether a mixture is kept.

    Precedence: SSIM range, SSIM spread, exposure, then white-point shift.
    """
    config = config or SimulationConfig()
    lo, hi = config.ssim_range
    if report.mean_ssim > hi:
        return CullDecision.culled(CullReason.TOO_TRANSPARENT)
    if report.mean_ssim < lo:
        return CullDecision.culled(CullReason.TOO_DESTROYED)
    if report.std_ssim < config.ssim_std_min:
        return CullDecision.culled(CullReason.LOW_VARIANCE)
    if not exposed:
        return CullDecision.culled(CullReason.OVER_UNDER_EXPOSED)
    if white_shift_mired > config.max_white_shift_mired:
        return CullDecision.culled(CullReason.WHITE_SHIFT)
    return KEEP
