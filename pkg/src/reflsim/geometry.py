"""Camera/glass geometry: Fresnel attenuation, double reflection, defocus, IBL crops.

Camera frame: x right, y up, z forward.  World frame: the glass is a vertical
plane with unit normal +z (pointing away from the camera).  A camera with
azimuth ``theta``, inclination ``phi`` and roll ``rho`` has the rotation
``yaw(theta) @ pitch(phi) @ roll(rho)`` from camera to world coordinates.
Pixel ``(row, col)`` has its center at ``(row + 0.5, col + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import SimulationConfig
from .culling import CullReason, CullSignal
from .image_core import LinearImage, PoseMeta

FEET_TO_MM = 304.8
GLASS_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class CaptureScenario:
    azimuth_deg: float
    vfov_deg: float
    refractive_index: float
    pane_thickness_mm: float
    viewing_distance_mm: float
    double_pane: bool
    object_dist_ft: float
    focus_dist_ft: float
    f_number: float
    focal_length_mm: float
    rng_seed: int = 0
    ibl_azimuth_deg: float = 0.0
    sensor_height_mm: float = 24.0

    def __post_init__(self):
        if not 1 < self.refractive_index < 2:
            raise ValueError("refractive index must lie in (1, 2)")
        if not 0 < self.vfov_deg < 180:
            raise ValueError("vfov must lie in (0, 180)")
        for name in ("pane_thickness_mm", "viewing_distance_mm", "object_dist_ft",
                     "focus_dist_ft", "f_number", "focal_length_mm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def effective_thickness_mm(self) -> float:
        return self.pane_thickness_mm * (2.0 if self.double_pane else 1.0)

    def to_json(self) -> dict:
        return {
            "azimuth_deg": self.azimuth_deg, "vfov_deg": self.vfov_deg,
            "refractive_index": self.refractive_index,
            "pane_thickness_mm": self.pane_thickness_mm,
            "viewing_distance_mm": self.viewing_distance_mm, "double_pane": self.double_pane,
            "object_dist_ft": self.object_dist_ft, "focus_dist_ft": self.focus_dist_ft,
            "f_number": self.f_number, "focal_length_mm": self.focal_length_mm,
            "rng_seed": self.rng_seed, "ibl_azimuth_deg": self.ibl_azimuth_deg,
            "sensor_height_mm": self.sensor_height_mm,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CaptureScenario":
        return cls(**d)


def sample_scenario(rng: np.random.Generator, config: SimulationConfig,
                    rng_seed: int = 0) -> CaptureScenario:
    """Draw one capture scenario; the draw order is fixed for replay."""
    u = rng.uniform
    return CaptureScenario(
        azimuth_deg=float(u(-config.azimuth_max_deg, config.azimuth_max_deg)),
        vfov_deg=float(u(*config.fov_range_deg)),
        refractive_index=float(u(*config.kappa_range)),
        pane_thickness_mm=float(u(*config.thickness_range_mm)),
        viewing_distance_mm=float(u(*config.distance_range_mm)),
        double_pane=bool(rng.random() < config.double_pane_probability),
        object_dist_ft=float(u(*config.object_dist_range_ft)),
        focus_dist_ft=float(u(*config.focus_dist_range_ft)),
        f_number=config.f_number,
        focal_length_mm=config.focal_length_mm,
        rng_seed=int(rng_seed),
        ibl_azimuth_deg=float(u(0.0, 360.0)),
        sensor_height_mm=config.sensor_height_mm,
    )


def camera_rotation(azimuth_deg: float, inclination_deg: float, roll_deg: float) -> np.ndarray:
    th, ph, ro = np.radians([azimuth_deg, inclination_deg, roll_deg])
    yaw = np.array([[np.cos(th), 0, np.sin(th)], [0, 1, 0], [-np.sin(th), 0, np.cos(th)]])
    pitch = np.array([[1, 0, 0], [0, np.cos(ph), np.sin(ph)], [0, -np.sin(ph), np.cos(ph)]])
    roll = np.array([[np.cos(ro), -np.sin(ro), 0], [np.sin(ro), np.cos(ro), 0], [0, 0, 1]])
    return yaw @ pitch @ roll


def focal_px(height: int, vfov_deg: float) -> float:
    return 0.5 * height / math.tan(math.radians(vfov_deg) / 2)


def pixel_rays(rows, cols, height: int, width: int, f: float) -> np.ndarray:
    """Camera-frame ray directions (..., 3) through the given pixel coordinates."""
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    x = (cols + 0.5 - width / 2) / f
    y = (height / 2 - rows - 0.5) / f
    return np.stack(np.broadcast_arrays(x, y, np.ones_like(x)), axis=-1)


def project_points(points_cam: np.ndarray, height: int, width: int, f: float):
    """Inverse of :func:`pixel_rays`: camera-frame points -> (rows, cols)."""
    z = points_cam[..., 2]
    cols = f * points_cam[..., 0] / z + width / 2 - 0.5
    rows = height / 2 - 0.5 - f * points_cam[..., 1] / z
    return rows, cols


@dataclass(frozen=True, eq=False)
class IncidenceMap:
    theta: np.ndarray       # (H, W) radians, in [0, pi/2)
    missed: np.ndarray      # (H, W) rays that never reach the glass
    rotation: np.ndarray    # camera -> world
    focal_px: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape

    def world_rays(self, rows, cols) -> np.ndarray:
        h, w = self.shape
        d = pixel_rays(rows, cols, h, w, self.focal_px) @ self.rotation.T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal_pixel(self) -> tuple[float, float]:
        """Sub-pixel (row, col) at which the glass normal is imaged."""
        h, w = self.shape
        n_cam = self.rotation.T @ GLASS_NORMAL
        if n_cam[2] <= 0:
            raise ValueError("glass normal is behind the camera")
        r, c = project_points(n_cam, h, w, self.focal_px)
        return float(r), float(c)


def incidence_map(scenario: CaptureScenario, pose: PoseMeta, dims: tuple[int, int],
                  max_missed: int = 4) -> IncidenceMap:
    h, w = dims
    rot = camera_rotation(scenario.azimuth_deg, pose.inclination_deg, pose.roll_deg)
    f = focal_px(h, scenario.vfov_deg)
    rows, cols = np.mgrid[0:h, 0:w]
    d = pixel_rays(rows, cols, h, w, f) @ rot.T
    cos_i = d @ GLASS_NORMAL / np.linalg.norm(d, axis=-1)
    missed = cos_i <= 1e-9
    n_missed = int(missed.sum())
    if n_missed > max_missed:
        raise CullSignal(CullReason.GEOMETRY_CULL,
                         f"glass does not fill FOV ({n_missed} rays miss)")
    theta = np.arccos(np.clip(cos_i, 0.0, 1.0))
    theta = np.minimum(theta, np.nextafter(np.pi / 2, 0))
    return IncidenceMap(theta, missed, rot, f)


def fresnel_alpha(theta_i, kappa):
    """Unpolarized reflectance of a dielectric surface at incidence ``theta_i``."""
    theta = np.asarray(theta_i, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    normal = ((kappa - 1) / (kappa + 1)) ** 2
    safe = np.where(theta < 1e-7, 0.5, theta)
    theta_t = np.arcsin(np.sin(safe) / kappa)
    perp = np.sin(safe - theta_t) ** 2 / np.sin(safe + theta_t) ** 2
    par = np.tan(safe - theta_t) ** 2 / np.tan(safe + theta_t) ** 2
    alpha = np.where(theta < 1e-7, normal, 0.5 * (perp + par))
    return float(alpha) if alpha.ndim == 0 else alpha


def apply_fresnel(t: LinearImage, r: LinearImage, imap: IncidenceMap, kappa: float,
                  alpha=None):
    """Attenuate ``t`` by ``1 - alpha`` and ``r`` by ``alpha``; ``alpha`` may be precomputed."""
    alpha = fresnel_alpha(imap.theta, kappa) if alpha is None else np.asarray(alpha, np.float64)
    if alpha.shape != t.data.shape[1:] or alpha.shape != r.data.shape[1:]:
        raise ValueError("incidence map does not match image dimensions")
    return t.with_data(t.data * (1.0 - alpha)), r.with_data(r.data * alpha)


def double_reflection_beta(alpha):
    return (1.0 - alpha) * alpha * (1.0 - alpha)


def reflection_shift(imap: IncidenceMap, scenario: CaptureScenario, rows=None, cols=None,
                     thickness_mm: float | None = None):
    """Pixel offset (d_row, d_col) of the back-surface reflection.

    Each camera ray hits the front face at distance ``viewing_distance_mm``
    along the normal, refracts, reflects off the back face and re-emerges
    ``2 * T * tan(theta_t)`` further along its in-plane direction; the
    emergence point is projected back into the image.
    """
    h, w = imap.shape
    if rows is None:
        rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    thickness = scenario.effective_thickness_mm if thickness_mm is None else thickness_mm
    d = imap.world_rays(rows, cols)
    cos_i = np.clip(d[..., 2], 1e-9, 1.0)
    hit = d * (scenario.viewing_distance_mm / cos_i)[..., None]
    tangential = d.copy()
    tangential[..., 2] = 0.0
    sin_i = np.linalg.norm(tangential, axis=-1)
    unit = tangential / np.maximum(sin_i, 1e-300)[..., None]
    theta_t = np.arcsin(np.clip(sin_i / scenario.refractive_index, 0.0, 1.0))
    lateral = 2.0 * thickness * np.tan(theta_t)
    emerge = hit + unit * lateral[..., None]
    r2, c2 = project_points(emerge @ imap.rotation, h, w, imap.focal_px)
    return r2 - rows, c2 - cols


def bilinear_sample(data: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                    wrap_cols: bool = False) -> np.ndarray:
    """Sample planar (C, H, W) data at fractional coordinates.

    Rows clamp to the edge; columns clamp or wrap around.
    """
    _, h, w = data.shape
    rows = np.clip(rows, 0.0, h - 1.0)
    r0 = np.floor(rows).astype(np.intp)
    fr = rows - r0
    r1 = np.minimum(r0 + 1, h - 1)
    if wrap_cols:
        c0f = np.floor(cols)
        fc = cols - c0f
        c0 = c0f.astype(np.intp) % w
        c1 = (c0 + 1) % w
    else:
        cols = np.clip(cols, 0.0, w - 1.0)
        c0 = np.floor(cols).astype(np.intp)
        fc = cols - c0
        c1 = np.minimum(c0 + 1, w - 1)
    top = data[:, r0, c0] * (1 - fc) + data[:, r0, c1] * fc
    bottom = data[:, r1, c0] * (1 - fc) + data[:, r1, c1] * fc
    return top * (1 - fr) + bottom * fr


def double_reflection(r: LinearImage, imap: IncidenceMap, scenario: CaptureScenario,
                      alpha_map=None) -> LinearImage:
    """Primary reflection ``alpha * r`` plus the shifted ghost ``beta * warp(r)``."""
    if alpha_map is None:
        alpha_map = fresnel_alpha(imap.theta, scenario.refractive_index)
    h, w = imap.shape
    if r.data.shape[1:] != (h, w):
        raise ValueError("incidence map does not match image dimensions")
    dr, dc = reflection_shift(imap, scenario)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    warped = bilinear_sample(r.data, rows + dr, cols + dc)
    beta = double_reflection_beta(alpha_map)
    return r.with_data(alpha_map * r.data + beta * warped)


def defocus_diameter(scenario: CaptureScenario) -> float:
    """Circle-of-confusion diameter as a fraction of the sensor height."""
    d_o = scenario.object_dist_ft * FEET_TO_MM
    d_f = scenario.focus_dist_ft * FEET_TO_MM
    f = scenario.focal_length_mm
    if d_f <= f:
        raise ValueError("focus distance must exceed the focal length")
    delta = abs(d_o - d_f) / d_o * f**2 / (scenario.f_number * (d_f - f))
    return delta / scenario.sensor_height_mm


def kernel_diameter(height: int, delta_p: float) -> int:
    return int(round(height * delta_p))


def disk_kernel(diameter: int, supersample: int = 9) -> np.ndarray:
    """Normalized disk of the given pixel diameter on an odd-sized grid.

    Weights are the fraction of each pixel covered by the disk, so the kernel
    is symmetric under both axis flips.
    """
    if diameter <= 1:
        return np.ones((1, 1))
    size = diameter if diameter % 2 else diameter + 1
    radius = diameter / 2.0
    sub = (np.arange(size * supersample) + 0.5) / supersample - size / 2.0
    yy, xx = np.meshgrid(sub, sub, indexing="ij")
    inside = (xx**2 + yy**2 <= radius**2).astype(np.float64)
    k = inside.reshape(size, supersample, size, supersample).sum(axis=(1, 3))
    return k / k.sum()


def defocus_blur(img: LinearImage, delta_p: float) -> LinearImage:
    """Convolve with a disk of diameter ``min(H, W) * delta_p`` pixels.

    Half-sample symmetric padding together with the axis-symmetric kernel
    keeps the image mean unchanged.
    """
    if delta_p < 0:
        raise ValueError("defocus diameter must be non-negative")
    h = min(img.height, img.width)
    diameter = min(kernel_diameter(h, delta_p), h)
    if diameter <= 1:
        return img
    k = disk_kernel(diameter)
    out = np.stack([ndimage.convolve(ch, k, mode="reflect") for ch in np.asarray(img.data, np.float64)])
    return img.with_data(np.maximum(out, 0.0))


def ibl_sample_coords(pano_shape: tuple[int, int], pose: PoseMeta, azimuth_deg: float,
                      out_dims: tuple[int, int]):
    """Panorama (row, col) sampled by each output pixel of a perspective crop."""
    ph, pw = pano_shape
    h, w = out_dims
    f = focal_px(h, pose.vfov_deg)
    rot = camera_rotation(azimuth_deg, pose.inclination_deg, pose.roll_deg)
    rows, cols = np.mgrid[0:h, 0:w]
    d = pixel_rays(rows, cols, h, w, f) @ rot.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    lon = np.arctan2(d[..., 0], d[..., 2])
    lat = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    pc = (lon + np.pi) / (2 * np.pi) * pw - 0.5
    pr = (np.pi / 2 - lat) / np.pi * ph - 0.5
    return pr, pc


def ibl_crop(panorama: LinearImage, pose: PoseMeta, azimuth_deg: float,
             out_dims: tuple[int, int], max_oversample: float = 4.0) -> LinearImage:
    """Gnomonic view of an equirectangular panorama (longitude 0 at the center column)."""
    ph, pw = panorama.height, panorama.width
    if pw != 2 * ph:
        raise ValueError("panorama must be 2:1 equirectangular")
    h, _ = out_dims
    out_density = focal_px(h, pose.vfov_deg)
    pano_density = pw / (2 * np.pi)
    if out_density > max_oversample * pano_density:
        raise ValueError(f"crop resolution {out_dims} oversamples the panorama "
                         f"by {out_density / pano_density:.1f}x")
    pr, pc = ibl_sample_coords((ph, pw), pose, azimuth_deg, out_dims)
    data = bilinear_sample(np.asarray(panorama.data, np.float64), pr, pc, wrap_cols=True)
    return panorama.with_data(data)


def image_median(img: LinearImage) -> float:
    """Median of the luminance (Y) plane."""
    return float(np.median(img.data[1]))


def calibrate_ibl_exposure(panorama: LinearImage, reference_median: float) -> LinearImage:
    if not reference_median > 0:
        raise ValueError("reference median must be positive")
    med = image_median(panorama)
    if not med > 0:
        raise ValueError("panorama has zero median")
    return panorama.with_data(np.asarray(panorama.data, np.float64) * (reference_median / med))


def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box-filter resampling weights; rows sum to one."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    px = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, px + 1) - np.maximum(lo, px), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def resize(img: LinearImage, out_h: int, out_w: int) -> LinearImage:
    """Area-averaging resample (a linear operator)."""
    if (img.height, img.width) == (out_h, out_w):
        return img
    ay = area_matrix(img.height, out_h)
    ax = area_matrix(img.width, out_w)
    data = ay @ np.asarray(img.data, np.float64) @ ax.T
    return img.with_data(data)
