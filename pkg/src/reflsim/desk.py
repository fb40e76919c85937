"""Procedural scene-referred source images for desk-scale runs.

Scenes are built from random reflectance layouts lit by a Planckian
illuminant, so their XYZ values carry the illuminant color and an absolute
luminance level (outdoor scenes are much brighter than indoor ones).  Each
raster is "captured" with an auto-exposure that puts its linear-sRGB mean
near a mid-grey target and clips at 1.0, as a normalized RAW would be.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from . import color_science as cs
from .dataset import Corpus, SourceEntry, SourceKind, corpus_stats_from_images
from .image_core import ColorSpace, ExposureMeta, LinearImage, PoseMeta, SceneClass, write_image
from .search import CorpusStats

AE_TARGET = 0.13


def _reflectance(rng: np.random.Generator, h: int, w: int, outdoor: bool) -> np.ndarray:
    """(3, H, W) linear-sRGB reflectances in [0, 1]."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.uniform(0.15, 0.45, size=3)
    img = np.ones((3, h, w)) * base[:, None, None]
    img *= 1 + 0.4 * (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy)[None]
    for _ in range(rng.integers(8, 18)):
        color = rng.uniform(0.03, 0.9, size=3)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        if rng.random() < 0.5:
            mask = ((np.arange(h)[:, None] - cy) / ry) ** 2 + ((np.arange(w)[None] - cx) / rx) ** 2 <= 1
        else:
            mask = (np.abs(np.arange(h)[:, None] - cy) <= ry) & (np.abs(np.arange(w)[None] - cx) <= rx)
        img[:, mask] = color[:, None]
    texture = ndimage.gaussian_filter(rng.normal(size=(h, w)), rng.uniform(0.7, 2.0))
    img *= np.clip(1 + 0.35 * texture / texture.std(), 0.2, None)[None]
    if outdoor:
        horizon = int(h * rng.uniform(0.3, 0.55))
        sky = np.array([0.55, 0.7, 1.0])[:, None, None] * (1.6 - 0.6 * yy[None, :horizon])
        img[:, :horizon] = sky * rng.uniform(1.5, 3.0)
    return np.clip(img, 0.0, None)


def _lights(rng: np.random.Generator, h: int, w: int, count: int, strength: float) -> np.ndarray:
    """Small bright blobs (lamps, sun glints) as a luminance multiplier."""
    out = np.ones((h, w))
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        rad = rng.uniform(0.015, 0.04) * max(h, w)
        d2 = (np.arange(h)[:, None] - cy) ** 2 + (np.arange(w)[None] - cx) ** 2
        out += strength * np.exp(-0.5 * d2 / rad**2)
    return out


def scene_xyz(rng: np.random.Generator, h: int, w: int, outdoor: bool, kelvin: float,
              level: float, lights: int) -> np.ndarray:
    """Unexposed scene XYZ (luminance units) under a Planckian illuminant."""
    refl = _reflectance(rng, h, w, outdoor)
    white = cs.temperature_to_xy(kelvin)
    srgb_to_xyz_d50 = np.linalg.inv(cs.xyz_d50_to_srgb())
    m = cs.map_white_matrix(cs.D50_XY, white) @ srgb_to_xyz_d50
    xyz = cs.apply_matrix(m, refl) * level
    return np.clip(xyz * _lights(rng, h, w, lights, rng.uniform(15, 60))[None], 0.0, None)


def capture(rng: np.random.Generator, xyz: np.ndarray, white_xy) -> tuple[np.ndarray, ExposureMeta]:
    """Auto-expose and clip a scene; returns the normalized raster and its exposure."""
    mean = cs.apply_matrix(cs.xyz_to_srgb_matrix(white_xy), xyz).mean()
    e = AE_TARGET * np.exp(rng.normal(0.0, 0.3)) / mean
    f_number = float(rng.choice([1.8, 2.8, 4.0]))
    iso = float(rng.choice([100.0, 200.0, 400.0, 800.0]))
    meta = ExposureMeta(shutter_s=e * f_number**2 / iso, iso_gain=iso, f_number=f_number)
    return np.clip(xyz * meta.value, 0.0, 1.0), meta


def make_raster(rng: np.random.Generator, outdoor: bool, size=(128, 192)) -> LinearImage:
    h, w = size
    kelvin = rng.uniform(5000, 7500) if outdoor else rng.uniform(2700, 4200)
    level = np.exp(rng.uniform(np.log(20), np.log(100))) if outdoor \
        else np.exp(rng.uniform(np.log(0.5), np.log(3)))
    white = cs.temperature_to_xy(kelvin)
    xyz = scene_xyz(rng, h, w, outdoor, kelvin, level, lights=int(rng.integers(0, 3)))
    data, meta = capture(rng, xyz, white)
    pose = PoseMeta(float(np.clip(rng.normal(0, 8), -40, 40)), float(rng.normal(0, 2.5)),
                    float(rng.uniform(50, 70)))
    return LinearImage(data.astype(np.float32), ColorSpace.XYZ, white_xy=white, exposure=meta,
                       pose=pose, scene_class=SceneClass.OUTDOOR if outdoor else SceneClass.INDOOR)


def make_ibl(rng: np.random.Generator, height: int = 256) -> LinearImage:
    w = 2 * height
    kelvin = 6504.0
    xyz = scene_xyz(rng, height, w, False, kelvin, 1.0, lights=4)
    # Wrap-continuous in longitude is not needed for sampling correctness.
    return LinearImage(xyz.astype(np.float32), ColorSpace.XYZ, white_xy=cs.temperature_to_xy(kelvin),
                       scene_class=SceneClass.INDOOR)


def make_desk_corpus(out_dir, n_outdoor: int = 2, n_indoor: int = 5, n_ibl: int = 1,
                     seed: int = 0, calibration_images: int = 40) -> Path:
    """Write a small labeled corpus, its profile and exposure stats; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(n_outdoor + n_indoor):
        outdoor = k < n_outdoor
        portrait = rng.random() < 0.25
        img = make_raster(rng, outdoor, size=(192, 128) if portrait else (128, 192))
        sid = f"{'out' if outdoor else 'in'}{k:02d}"
        path = out_dir / "images" / f"{sid}.lrim"
        write_image(img, path)
        entries.append(SourceEntry(sid, path, img.scene_class, SourceKind.RASTER, img.pose,
                                   img.exposure, cs.DEFAULT_PROFILE.name))
    for k in range(n_ibl):
        img = make_ibl(rng)
        sid = f"ibl{k:02d}"
        path = out_dir / "images" / f"{sid}.lrim"
        write_image(img, path)
        entries.append(SourceEntry(sid, path, SceneClass.INDOOR, SourceKind.IBL))
    corpus = Corpus(entries, {cs.DEFAULT_PROFILE.name: cs.DEFAULT_PROFILE})
    manifest = out_dir / "corpus.jsonl"
    corpus.save(manifest)
    calibration_stats(rng, calibration_images).save(out_dir / "stats.json")
    return manifest


def calibration_stats(rng: np.random.Generator, n: int = 40) -> CorpusStats:
    """Exposure statistics over extra renders drawn like the corpus rasters."""
    return corpus_stats_from_images(
        make_raster(rng, outdoor=k % 3 == 0, size=(64, 96)) for k in range(n))
