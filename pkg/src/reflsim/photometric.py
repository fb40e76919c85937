"""Exposure normalization, XYZ compositing and the simulated capture function."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from . import color_science as cs
from .culling import CullReason, CullSignal
from .image_core import ColorSpace, ExposureMeta, LinearImage

SATURATION_FRACTION = 0.999
TARGET_ENCODED = 0.4


@runtime_checkable
class AwbEstimator(Protocol):
    reentrant: bool

    def estimate(self, img: LinearImage) -> np.ndarray:
        """Return a strictly positive camera-space white for ``img``."""


class GrayWorldAwb:
    """Gray-world white: the per-channel mean of the camera-space image."""

    reentrant = True

    def estimate(self, img: LinearImage) -> np.ndarray:
        if img.color_space is not ColorSpace.CAMERA:
            raise ValueError("AWB expects a camera-space image")
        return img.data.reshape(3, -1).mean(axis=1)


@dataclass(frozen=True)
class CaptureFunction:
    exposure_scalar: float
    wb_transform: np.ndarray
    white_xy_awb: tuple[float, float]
    xyz_to_cam: np.ndarray
    xyz_to_cam_awb: np.ndarray
    camera_white_awb: np.ndarray

    @property
    def output_matrix(self) -> np.ndarray:
        """Exposure, white balance and XYZ(D50) -> linear sRGB in one matrix."""
        return self.exposure_scalar * (cs.xyz_d50_to_srgb() @ self.wb_transform)


@dataclass(frozen=True, eq=False)
class SimulatedExample:
    m: LinearImage
    t: LinearImage
    r: LinearImage
    c: LinearImage
    capture: CaptureFunction
    white_shift_mired: float
    saturated: bool
    extra: dict = field(default_factory=dict)

    @property
    def e_prime(self) -> float:
        return self.capture.exposure_scalar

    @property
    def white_xy_awb(self) -> tuple[float, float]:
        return self.capture.white_xy_awb


def unexpose(img: LinearImage, meta: ExposureMeta | None = None) -> LinearImage:
    """Divide out the capture exposure so samples are proportional to luminance."""
    meta = meta or img.exposure
    if meta is None:
        raise ValueError("image carries no exposure metadata")
    e = meta.value
    sat = tuple(s / e for s in img.saturation_level)
    return img.replace(data=img.data / e, saturation_level=sat, exposure=None)


def is_saturated(img: LinearImage, fraction: float = SATURATION_FRACTION) -> bool:
    level = np.asarray(img.saturation_level, dtype=np.float64).reshape(3, 1, 1)
    return bool(np.any(img.data >= fraction * level))


def compute_exposure(m: LinearImage, t: LinearImage, r: LinearImage,
                     saturated: bool | None = None,
                     fraction: float = SATURATION_FRACTION) -> float:
    """Re-exposure e' for a composited mixture.

    Unsaturated mixtures get their mean linear-sRGB sample exposed to the
    linear value of encoded 0.4.  If either component holds saturated
    pixels, the dimmer of the two component maxima is mapped to 1.0 instead.
    ``saturated`` overrides detection when the caller checked the sources
    before geometric processing.
    """
    to_srgb = cs.xyz_to_srgb_matrix(t.white_xy)
    if saturated is None:
        saturated = is_saturated(t, fraction) or is_saturated(r, fraction)
    if not saturated:
        mu = float(cs.apply_matrix(to_srgb, m.data).mean())
        if not mu > 0:
            raise CullSignal(CullReason.OVER_UNDER_EXPOSED, "degenerate mixture")
        return cs.srgb_to_linear(TARGET_ENCODED) / mu
    t_max = float(cs.apply_matrix(to_srgb, t.data).max())
    r_max = float(cs.apply_matrix(to_srgb, r.data).max())
    peak = min(t_max, r_max)
    if not peak > 0:
        raise CullSignal(CullReason.OVER_UNDER_EXPOSED, "degenerate mixture")
    return 1.0 / peak


def white_balance_transform(m_exposed: LinearImage, t: LinearImage, profile: cs.CameraProfile,
                            awb: AwbEstimator, exposure_scalar: float = 1.0) -> CaptureFunction:
    xyz_to_cam = cs.find_xyz_to_cam(t.white_xy, profile)
    cam = LinearImage(cs.apply_matrix(xyz_to_cam, m_exposed.data),
                      color_space=ColorSpace.CAMERA, camera_profile=profile.name)
    white_cam = np.asarray(awb.estimate(cam), dtype=np.float64)
    if white_cam.shape != (3,) or not np.all(np.isfinite(white_cam)) or np.any(white_cam <= 0):
        raise CullSignal(CullReason.AWB_FAILURE, f"AWB returned {white_cam}")
    white_xy_awb, xyz_to_cam_awb = cs.neutral_to_xy(white_cam, profile)
    to_d50 = cs.map_white_matrix(white_xy_awb, cs.D50_XY)
    wb = to_d50 @ np.linalg.inv(xyz_to_cam_awb) @ xyz_to_cam
    return CaptureFunction(exposure_scalar, wb, white_xy_awb, xyz_to_cam, xyz_to_cam_awb, white_cam)


def _output(img: LinearImage, matrix: np.ndarray, white_xy) -> LinearImage:
    # Out-of-gamut colors clip at zero; m is re-formed from the clipped parts.
    data = np.maximum(cs.apply_matrix(matrix, img.data), 0.0)
    return LinearImage(data, color_space=ColorSpace.LINEAR_SRGB, white_xy=white_xy,
                       scene_class=img.scene_class)


def simulate_example(t: LinearImage, j_parts: tuple[LinearImage, LinearImage], scenario,
                     profile: cs.CameraProfile, awb: AwbEstimator | None = None, *,
                     saturated: bool | None = None,
                     fraction: float = SATURATION_FRACTION) -> SimulatedExample:
    """Composite, re-expose, white balance and convert one example to linear sRGB.

    ``t`` and the reflection ``r = j_parts[0]`` are unexposed XYZ images that
    already went through the geometric simulation; ``c = j_parts[1]`` is the
    unexposed context crop.  ``scenario`` is carried for provenance only.
    """
    r, c = j_parts
    awb = awb or GrayWorldAwb()
    if t.data.shape != r.data.shape:
        raise ValueError("transmission and reflection must share dimensions")
    m = LinearImage(t.data + r.data, color_space=ColorSpace.XYZ, white_xy=t.white_xy)
    if saturated is None:
        saturated = is_saturated(t, fraction) or is_saturated(r, fraction)
    e_prime = compute_exposure(m, t, r, saturated=saturated, fraction=fraction)
    m_exposed = m.with_data(m.data * e_prime)
    capture = white_balance_transform(m_exposed, t, profile, awb, exposure_scalar=e_prime)

    matrix = capture.output_matrix
    white = capture.white_xy_awb
    t_out = _output(t, matrix, white)
    r_out = _output(r, matrix, white)
    c_out = _output(c, matrix, white)
    m_out = LinearImage(t_out.data + r_out.data, color_space=ColorSpace.LINEAR_SRGB,
                        white_xy=white)
    shift = abs(cs.xy_to_mired(capture.white_xy_awb) - cs.xy_to_mired(t.white_xy))
    return SimulatedExample(m_out, t_out, r_out, c_out, capture, shift, bool(saturated),
                            extra={"scenario": scenario})
