"""Linear image container, metadata records and the LRIM raster format.

An LRIM file is the magic ``b"LRIM"``, three little-endian u32 values
(width, height, channels) and then planar float32 little-endian samples.
Metadata lives in a JSON sidecar next to the raster (``foo.lrim`` ->
``foo.json``).
"""

from __future__ import annotations

import dataclasses
import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LRIM"
_HEADER = struct.Struct("<4sIII")


class ImageFormatError(ValueError):
    """Raised when a raster or its sidecar violates the container contract."""


class ColorSpace(str, enum.Enum):
    CAMERA = "camera"
    XYZ = "xyz"
    LINEAR_SRGB = "linear_srgb"


class SceneClass(str, enum.Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"


@dataclass(frozen=True)
class ExposureMeta:
    shutter_s: float
    iso_gain: float
    f_number: float

    def __post_init__(self):
        for name in ("shutter_s", "iso_gain", "f_number"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"exposure {name} must be positive, got {v}")

    @property
    def value(self) -> float:
        """Photon scale s*g/n^2."""
        return self.shutter_s * self.iso_gain / self.f_number**2

    def to_json(self) -> dict:
        return {"shutter_s": self.shutter_s, "iso": self.iso_gain, "f_number": self.f_number}

    @classmethod
    def from_json(cls, d: dict) -> "ExposureMeta":
        return cls(float(d["shutter_s"]), float(d["iso"]), float(d["f_number"]))


@dataclass(frozen=True)
class PoseMeta:
    inclination_deg: float
    roll_deg: float
    vfov_deg: float

    def __post_init__(self):
        vals = (self.inclination_deg, self.roll_deg, self.vfov_deg)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("pose values must be finite")
        # vfov == 0 is a pose-estimator failure marker; the pairing gate rejects it.
        if not 0 <= self.vfov_deg < 180:
            raise ValueError(f"vfov_deg must lie in [0, 180), got {self.vfov_deg}")

    def to_json(self) -> dict:
        return {"inclination_deg": self.inclination_deg, "roll_deg": self.roll_deg,
                "vfov_deg": self.vfov_deg}

    @classmethod
    def from_json(cls, d: dict) -> "PoseMeta":
        return cls(float(d["inclination_deg"]), float(d["roll_deg"]), float(d["vfov_deg"]))


@dataclass(frozen=True, eq=False)
class LinearImage:
    """Planar (3, H, W) raster, linear in scene luminance.

    Instances are immutable: ``data`` is stored as a read-only array.
    ``camera_profile`` names the profile that defines a camera-native space
    and must be set exactly when ``color_space`` is ``CAMERA``.
    """

    data: np.ndarray
    color_space: ColorSpace = ColorSpace.XYZ
    white_xy: tuple[float, float] | None = None
    saturation_level: tuple[float, float, float] = (1.0, 1.0, 1.0)
    exposure: ExposureMeta | None = None
    pose: PoseMeta | None = None
    scene_class: SceneClass | None = None
    camera_profile: str | None = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[0] != 3:
            raise ImageFormatError(f"expected planar (3, H, W) data, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ImageFormatError("non-finite sample")
        if data.flags.writeable:
            data = data.copy()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "color_space", ColorSpace(self.color_space))
        if self.white_xy is not None:
            object.__setattr__(self, "white_xy", (float(self.white_xy[0]), float(self.white_xy[1])))
        if self.scene_class is not None:
            object.__setattr__(self, "scene_class", SceneClass(self.scene_class))
        if (self.color_space is ColorSpace.CAMERA) != (self.camera_profile is not None):
            raise ImageFormatError("camera_profile must be attached exactly for camera-space images")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def replace(self, **changes) -> "LinearImage":
        return dataclasses.replace(self, **changes)

    def with_data(self, data: np.ndarray) -> "LinearImage":
        return dataclasses.replace(self, data=data)

    def __eq__(self, other):
        if not isinstance(other, LinearImage):
            return NotImplemented
        return (self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data)
                and self.metadata() == other.metadata())

    __hash__ = None

    def metadata(self) -> dict:
        """Sidecar dictionary with the exact key set of the container format."""
        meta = {"width": self.width, "height": self.height, "color_space": self.color_space.value}
        if self.white_xy is not None:
            meta["white_xy"] = [self.white_xy[0], self.white_xy[1]]
        if self.exposure is not None:
            meta["exposure"] = self.exposure.to_json()
        if self.pose is not None:
            meta["pose"] = self.pose.to_json()
        if self.scene_class is not None:
            meta["scene_class"] = self.scene_class.value
        if self.camera_profile is not None:
            meta["camera_profile"] = self.camera_profile
        return meta


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_image(img: LinearImage, path) -> None:
    """Write ``img`` as an LRIM raster plus JSON sidecar."""
    if np.any(img.data < 0):
        raise ImageFormatError("negative sample")
    path = Path(path)
    header = _HEADER.pack(MAGIC, img.width, img.height, 3)
    payload = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
    try:
        path.write_bytes(header + payload)
        sidecar_path(path).write_text(json.dumps(img.metadata(), indent=2) + "\n")
    except OSError as exc:
        raise ImageFormatError(f"cannot write {path}: {exc}") from exc


def read_image(path) -> LinearImage:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise ImageFormatError(f"missing sidecar {side}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ImageFormatError("truncated header")
    magic, width, height, channels = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ImageFormatError(f"bad magic {magic!r}")
    if channels != 3:
        raise ImageFormatError(f"expected 3 channels, got {channels}")
    n = width * height * channels
    if len(raw) != _HEADER.size + 4 * n:
        raise ImageFormatError("payload length does not match header dimensions")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(3, height, width)
    data = data.astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise ImageFormatError("non-finite sample")
    if np.any(data < 0):
        raise ImageFormatError("negative sample")

    meta = json.loads(side.read_text())
    if meta.get("width") != width or meta.get("height") != height:
        raise ImageFormatError("dimension mismatch between raster and sidecar")
    white = meta.get("white_xy")
    return LinearImage(
        data=data,
        color_space=ColorSpace(meta["color_space"]),
        white_xy=tuple(white) if white is not None else None,
        exposure=ExposureMeta.from_json(meta["exposure"]) if "exposure" in meta else None,
        pose=PoseMeta.from_json(meta["pose"]) if "pose" in meta else None,
        scene_class=SceneClass(meta["scene_class"]) if "scene_class" in meta else None,
        camera_profile=meta.get("camera_profile"),
    )


def encode_srgb(x):
    """Piecewise sRGB transfer curve on values clipped to [0, 1]."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def to_preview_srgb(img: LinearImage) -> np.ndarray:
    """Gamma-encode a linear-sRGB image into an (H, W, 3) uint8 array."""
    if img.color_space is not ColorSpace.LINEAR_SRGB:
        raise ValueError(f"preview needs linear_srgb input, got {img.color_space.value}")
    enc = encode_srgb(img.data)
    return np.round(enc * 255.0).astype(np.uint8).transpose(1, 2, 0)
