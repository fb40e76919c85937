"""Color math following the DNG SDK color pipeline.

Chromaticity/temperature conversion on the Robertson locus, Bradford white
mapping, dual-illuminant color-matrix interpolation, projection of camera
neutrals onto the Planckian locus, and the sRGB (D50) matrices.

Matrices act on column vectors: ``xyz_cam = XYZ_to_CAM @ xyz``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .image_core import ColorSpace, LinearImage

# Robertson (1968) isotemperature table as used by dng_temperature.cpp:
# mired, u, v, isotherm slope. The u entry at 325 mired carries the usual
# correction (0.24792).
_ROBERTSON = np.array([
    [0, 0.18006, 0.26352, -0.24341],
    [10, 0.18066, 0.26589, -0.25479],
    [20, 0.18133, 0.26846, -0.26876],
    [30, 0.18208, 0.27119, -0.28539],
    [40, 0.18293, 0.27407, -0.30470],
    [50, 0.18388, 0.27709, -0.32675],
    [60, 0.18494, 0.28021, -0.35156],
    [70, 0.18611, 0.28342, -0.37915],
    [80, 0.18740, 0.28668, -0.40955],
    [90, 0.18880, 0.28997, -0.44278],
    [100, 0.19032, 0.29326, -0.47888],
    [125, 0.19462, 0.30141, -0.58204],
    [150, 0.19962, 0.30921, -0.70471],
    [175, 0.20525, 0.31647, -0.84901],
    [200, 0.21142, 0.32312, -1.0182],
    [225, 0.21807, 0.32909, -1.2168],
    [250, 0.22511, 0.33439, -1.4512],
    [275, 0.23247, 0.33904, -1.7298],
    [300, 0.24010, 0.34308, -2.0637],
    [325, 0.24792, 0.34655, -2.4681],
    [350, 0.25591, 0.34951, -2.9641],
    [375, 0.26400, 0.35200, -3.5814],
    [400, 0.27218, 0.35407, -4.3633],
    [425, 0.28039, 0.35577, -5.3762],
    [450, 0.28863, 0.35714, -6.7262],
    [475, 0.29685, 0.35823, -8.5955],
    [500, 0.30505, 0.35907, -11.324],
    [525, 0.31320, 0.35968, -15.628],
    [550, 0.32129, 0.36011, -23.325],
    [575, 0.32931, 0.36038, -40.770],
    [600, 0.33724, 0.36051, -116.45],
])
_MIRED, _U, _V = _ROBERTSON[:, 0], _ROBERTSON[:, 1], _ROBERTSON[:, 2]

KELVIN_MIN = 1667.0
KELVIN_MAX = 25000.0

BRADFORD = np.array([
    [0.8951, 0.2664, -0.1614],
    [-0.7502, 1.7135, 0.0367],
    [0.0389, -0.0685, 1.0296],
])

# Linear sRGB -> XYZ(D50) primaries as tabulated in dng_color_space.cpp.
SRGB_TO_XYZ_D50_TABLE = np.array([
    [0.4361, 0.3851, 0.1431],
    [0.2225, 0.7169, 0.0606],
    [0.0139, 0.0971, 0.7141],
])

D50_XY = (0.3457, 0.3585)
MAX_CONDITION = 1e4


class ColorError(ValueError):
    pass


def d50_xy() -> tuple[float, float]:
    return D50_XY


def validate_xy(xy) -> tuple[float, float]:
    x, y = float(xy[0]), float(xy[1])
    if not (x > 0 and y > 0 and x + y < 1):
        raise ColorError(f"invalid chromaticity ({x}, {y})")
    return x, y


def xy_to_xyz(xy) -> np.ndarray:
    x, y = validate_xy(xy)
    return np.array([x / y, 1.0, (1.0 - x - y) / y])


def xyz_to_xy(xyz) -> tuple[float, float]:
    X, Y, Z = (float(v) for v in xyz)
    s = X + Y + Z
    if s <= 0:
        raise ColorError("XYZ triple has no chromaticity")
    return X / s, Y / s


def _uv_to_xy(u, v):
    d = u - 4.0 * v + 2.0
    return 1.5 * u / d, v / d


def _xy_to_uv(x, y):
    d = 1.5 - x + 6.0 * y
    return 2.0 * x / d, 3.0 * y / d


def mired_to_xy(mired):
    """Vectorised locus evaluation; mired values must lie in [0, 600]."""
    mired = np.asarray(mired, dtype=np.float64)
    u = np.interp(mired, _MIRED, _U)
    v = np.interp(mired, _MIRED, _V)
    return _uv_to_xy(u, v)


def temperature_to_xy(kelvin: float) -> tuple[float, float]:
    """Chromaticity of the Planckian locus at ``kelvin`` (zero tint)."""
    if not KELVIN_MIN <= kelvin <= KELVIN_MAX:
        raise ColorError(f"temperature {kelvin} K outside [{KELVIN_MIN}, {KELVIN_MAX}]")
    x, y = mired_to_xy(1e6 / kelvin)
    return float(x), float(y)


def xy_to_mired(xy) -> float:
    """Mired of the closest point on the piecewise-linear uv locus.

    Exact inverse of :func:`temperature_to_xy` for on-locus points; off-locus
    points are projected orthogonally in uv, which drops the tint.
    """
    x, y = validate_xy(xy)
    u, v = _xy_to_uv(x, y)
    a = np.stack([_U[:-1], _V[:-1]], axis=1)
    b = np.stack([_U[1:], _V[1:]], axis=1)
    seg = b - a
    p = np.array([u, v])
    t = np.clip(np.einsum("ij,ij->i", p - a, seg) / np.einsum("ij,ij->i", seg, seg), 0.0, 1.0)
    closest = a + t[:, None] * seg
    k = int(np.argmin(np.sum((closest - p) ** 2, axis=1)))
    return float(_MIRED[k] + t[k] * (_MIRED[k + 1] - _MIRED[k]))


def xy_to_temperature(xy) -> float:
    mired = xy_to_mired(xy)
    return 1e6 / mired if mired > 0 else float("inf")


def map_white_matrix(white_from, white_to) -> np.ndarray:
    """Bradford adaptation taking XYZ under ``white_from`` to XYZ under ``white_to``."""
    if validate_xy(white_from) == validate_xy(white_to):
        return np.eye(3)
    w1 = BRADFORD @ xy_to_xyz(white_from)
    w2 = BRADFORD @ xy_to_xyz(white_to)
    if np.any(w1 <= 0) or np.any(w2 <= 0):
        raise ColorError("white point outside the Bradford cone-response domain")
    # Same per-cone gain limits as MapWhiteMatrix.
    gain = np.clip(w2 / w1, 0.1, 10.0)
    return np.linalg.solve(BRADFORD, np.diag(gain) @ BRADFORD)


@lru_cache(maxsize=1)
def xyz_d50_to_srgb() -> np.ndarray:
    """XYZ(D50) -> linear sRGB, with rows scaled so RGB white maps exactly to D50."""
    white = xy_to_xyz(D50_XY)
    scale = white / SRGB_TO_XYZ_D50_TABLE.sum(axis=1)
    to_pcs = scale[:, None] * SRGB_TO_XYZ_D50_TABLE
    m = np.linalg.inv(to_pcs)
    m.flags.writeable = False
    return m


def xyz_to_srgb_matrix(white) -> np.ndarray:
    return xyz_d50_to_srgb() @ map_white_matrix(white, D50_XY)


def srgb_to_linear(v):
    """Inverse of the sRGB transfer curve for encoded values in [0, 1]."""
    arr = np.asarray(v, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ColorError("encoded sRGB value outside [0, 1]")
    out = np.where(arr <= 0.0404482362771076, arr / 12.92, ((arr + 0.055) / 1.055) ** 2.4)
    return float(out) if out.ndim == 0 else out


def check_matrix(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ColorError(f"{what} must be a finite 3x3 matrix")
    if np.linalg.cond(m) >= MAX_CONDITION:
        raise ColorError(f"{what} is ill-conditioned")
    return m


@dataclass(frozen=True)
class CameraProfile:
    """Dual-illuminant XYZ -> camera color matrices."""

    color_matrix_1: tuple
    color_matrix_2: tuple
    calibration_temp_1: float
    calibration_temp_2: float
    name: str = "camera"

    def __post_init__(self):
        for attr in ("color_matrix_1", "color_matrix_2"):
            m = check_matrix(np.reshape(getattr(self, attr), (3, 3)), attr)
            object.__setattr__(self, attr, tuple(float(v) for v in m.ravel()))
        for attr in ("calibration_temp_1", "calibration_temp_2"):
            t = float(getattr(self, attr))
            if not 1500 <= t <= 20000:
                raise ColorError(f"{attr}={t} K outside [1500, 20000]")
            object.__setattr__(self, attr, t)

    @property
    def matrix_1(self) -> np.ndarray:
        return np.array(self.color_matrix_1).reshape(3, 3)

    @property
    def matrix_2(self) -> np.ndarray:
        return np.array(self.color_matrix_2).reshape(3, 3)

    def to_json(self) -> dict:
        return {"color_matrix_1": list(self.color_matrix_1),
                "color_matrix_2": list(self.color_matrix_2),
                "calibration_temp_1": self.calibration_temp_1,
                "calibration_temp_2": self.calibration_temp_2}

    @classmethod
    def from_json(cls, d: dict, name: str = "camera") -> "CameraProfile":
        return cls(tuple(d["color_matrix_1"]), tuple(d["color_matrix_2"]),
                   float(d["calibration_temp_1"]), float(d["calibration_temp_2"]), name=name)

    @classmethod
    def load(cls, path) -> "CameraProfile":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), name=path.stem)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


# A generic full-frame sensor: D65 and Illuminant A color matrices.
DEFAULT_PROFILE = CameraProfile(
    color_matrix_1=(0.6722, -0.0635, -0.0963, -0.4287, 1.2460, 0.2028, -0.0908, 0.2162, 0.5668),
    color_matrix_2=(0.7234, -0.1413, -0.0600, -0.3631, 1.1150, 0.2850, -0.0382, 0.1335, 0.6437),
    calibration_temp_1=6504.0,
    calibration_temp_2=2856.0,
    name="default",
)


def interpolation_weight(mired: float, profile: CameraProfile) -> float:
    """Weight of ``color_matrix_1``, linear in mired and clamped to [0, 1]."""
    m1 = 1e6 / profile.calibration_temp_1
    m2 = 1e6 / profile.calibration_temp_2
    if m1 == m2:
        return 1.0
    g = float(np.clip((mired - m2) / (m1 - m2), 0.0, 1.0))
    # Locus round trips carry ~1e-13 mired of noise; endpoints must stay exact.
    if g < 1e-10:
        return 0.0
    if g > 1.0 - 1e-10:
        return 1.0
    return g


def find_xyz_to_cam(white, profile: CameraProfile) -> np.ndarray:
    g = interpolation_weight(xy_to_mired(white), profile)
    if g == 1.0:
        return profile.matrix_1
    if g == 0.0:
        return profile.matrix_2
    return g * profile.matrix_1 + (1.0 - g) * profile.matrix_2


# Candidate whites for the neutral projection: 1-mired steps over the locus.
SWEEP_MIRED = np.arange(np.ceil(1e6 / KELVIN_MAX), np.floor(1e6 / KELVIN_MIN) + 1.0)


@lru_cache(maxsize=32)
def _sweep_table(profile: CameraProfile):
    xs, ys = mired_to_xy(SWEEP_MIRED)
    mats = np.empty((len(SWEEP_MIRED), 3, 3))
    dirs = np.empty((len(SWEEP_MIRED), 3))
    for k, (x, y) in enumerate(zip(xs, ys)):
        mats[k] = find_xyz_to_cam((x, y), profile)
        proj = mats[k] @ xy_to_xyz((x, y))
        dirs[k] = proj / np.linalg.norm(proj)
    return np.stack([xs, ys], axis=1), mats, dirs


def neutral_to_xy(neutral, profile: CameraProfile):
    """Project a camera-space white onto the Planckian locus.

    Sweeps candidate temperatures, maps each locus white into camera space and
    keeps the one at the smallest angle to ``neutral``.  Returns
    ``(white_xy, XYZ_to_CAM)`` for the chosen white.
    """
    n = np.asarray(neutral, dtype=np.float64)
    if n.shape != (3,) or not np.all(np.isfinite(n)) or np.any(n <= 0):
        raise ColorError(f"camera neutral must be strictly positive, got {n}")
    xy, mats, dirs = _sweep_table(profile)
    cos = dirs @ (n / np.linalg.norm(n))
    k = int(np.argmax(cos))
    return (float(xy[k, 0]), float(xy[k, 1])), mats[k].copy()


def highlight_recovery(img: LinearImage, camera_white) -> LinearImage:
    """Clip each camera channel to the camera white level."""
    if img.color_space is not ColorSpace.CAMERA:
        raise ColorError("highlight recovery operates on camera-space images")
    w = np.asarray(camera_white, dtype=img.data.dtype).reshape(3, 1, 1)
    return img.with_data(np.minimum(img.data, w))


def apply_matrix(m: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Apply a 3x3 matrix to planar (3, H, W) data."""
    return np.einsum("ij,jhw->ihw", m, data)
