"""Source pairing, context crops and the simulate -> search -> emit pipeline."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import color_science as cs
from . import geometry as geo
from .config import SimulationConfig
from .culling import CullReason, CullSignal
from .image_core import (ExposureMeta, ImageFormatError, LinearImage, PoseMeta, SceneClass,
                         read_image, write_image)
from .photometric import AwbEstimator, GrayWorldAwb, SimulatedExample, is_saturated, unexpose, simulate_example
from .search import CorpusStats, CullDecision, cull, ssim_weighted, well_exposed

log = logging.getLogger(__name__)

MIN_CROP = 8


class SourceKind(str, enum.Enum):
    RASTER = "raster"
    IBL = "ibl"


@dataclass(frozen=True)
class SourceEntry:
    id: str
    path: Path
    scene_class: SceneClass
    kind: SourceKind = SourceKind.RASTER
    pose: PoseMeta | None = None
    exposure: ExposureMeta | None = None
    camera_profile: str | None = None

    def to_json(self, base: Path | None = None) -> dict:
        path = Path(self.path)
        if base is not None:
            try:
                path = path.relative_to(base)
            except ValueError:
                pass
        d = {"id": self.id, "path": str(path), "scene_class": self.scene_class.value,
             "kind": self.kind.value}
        if self.pose is not None:
            d["pose"] = self.pose.to_json()
        if self.exposure is not None:
            d["exposure"] = self.exposure.to_json()
        if self.camera_profile is not None:
            d["camera_profile"] = self.camera_profile
        return d

    @classmethod
    def from_json(cls, d: dict, base: Path | None = None) -> "SourceEntry":
        path = Path(d["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        return cls(
            id=str(d["id"]), path=path, scene_class=SceneClass(d["scene_class"]),
            kind=SourceKind(d.get("kind", "raster")),
            pose=PoseMeta.from_json(d["pose"]) if d.get("pose") else None,
            exposure=ExposureMeta.from_json(d["exposure"]) if d.get("exposure") else None,
            camera_profile=d.get("camera_profile"),
        )


class Corpus:
    """Labeled source images plus the camera profiles they reference.

    Images load lazily and are cached; the cache is shared across worker
    threads.
    """

    def __init__(self, entries: Iterable[SourceEntry], profiles: dict | None = None):
        self.entries = list(entries)
        self.by_id = {e.id: e for e in self.entries}
        if len(self.by_id) != len(self.entries):
            raise ValueError("duplicate source ids in corpus")
        self.profiles = dict(profiles or {})
        self._images: dict[str, LinearImage] = {}
        self._lock = threading.Lock()
        self._indoor_median: float | None = None
        for e in self.entries:
            if e.kind is SourceKind.RASTER and e.exposure is None:
                raise ValueError(f"raster source {e.id} has no exposure metadata")

    @classmethod
    def load(cls, manifest_path) -> "Corpus":
        manifest_path = Path(manifest_path)
        base = manifest_path.parent
        entries = [SourceEntry.from_json(json.loads(line), base)
                   for line in manifest_path.read_text().splitlines() if line.strip()]
        profiles = {}
        for name in {e.camera_profile for e in entries if e.camera_profile}:
            profiles[name] = cs.CameraProfile.load(base / "profiles" / f"{name}.json")
        return cls(entries, profiles)

    def save(self, manifest_path) -> None:
        manifest_path = Path(manifest_path)
        base = manifest_path.parent
        lines = [json.dumps(e.to_json(base)) for e in self.entries]
        manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""))
        if self.profiles:
            (base / "profiles").mkdir(exist_ok=True)
            for name, prof in self.profiles.items():
                prof.save(base / "profiles" / f"{name}.json")

    def profile_for(self, entry: SourceEntry) -> cs.CameraProfile | None:
        if entry.camera_profile is None:
            return None
        return self.profiles.get(entry.camera_profile, cs.DEFAULT_PROFILE)

    def image(self, source_id: str) -> LinearImage:
        with self._lock:
            img = self._images.get(source_id)
        if img is not None:
            return img
        entry = self.by_id[source_id]
        img = read_image(entry.path)
        if entry.kind is SourceKind.IBL:
            if img.width != 2 * img.height:
                raise ImageFormatError(f"IBL {entry.id} is not 2:1 equirectangular")
            # Panoramas are HDR; nothing in them counts as clipped.
            img = img.replace(saturation_level=(np.inf, np.inf, np.inf))
            img = geo.calibrate_ibl_exposure(img, self.indoor_median())
        with self._lock:
            self._images.setdefault(source_id, img)
            return self._images[source_id]

    def indoor_median(self) -> float:
        """Median unexposed luminance across indoor raster sources."""
        if self._indoor_median is None:
            values = []
            for e in self.entries:
                if e.kind is SourceKind.RASTER and e.scene_class is SceneClass.INDOOR:
                    img = read_image(e.path)
                    values.append(np.asarray(img.data[1], np.float64).ravel() / e.exposure.value)
            if not values:
                raise ValueError("no indoor raster images to calibrate IBL exposure against")
            self._indoor_median = float(np.median(np.concatenate(values)))
        return self._indoor_median


def build_pairs(corpus: Corpus | list[SourceEntry], seed: int = 0,
                include_outdoor_pairs: bool = False) -> list[tuple[str, str]]:
    """Ordered (transmission, reflection) source-id pairs in seeded random order."""
    entries = corpus.entries if isinstance(corpus, Corpus) else list(corpus)
    outdoor = [e.id for e in entries if e.scene_class is SceneClass.OUTDOOR]
    indoor = [e.id for e in entries if e.scene_class is SceneClass.INDOOR]
    if not outdoor or not indoor:
        raise ValueError("empty class: corpus needs both indoor and outdoor sources")
    pairs = [(o, i) for o in outdoor for i in indoor]
    pairs += [(i, o) for i in indoor for o in outdoor]
    pairs += [(a, b) for a in indoor for b in indoor if a != b]
    if include_outdoor_pairs:
        pairs += [(a, b) for a in outdoor for b in outdoor if a != b]
    order = np.random.default_rng(seed).permutation(len(pairs))
    return [pairs[k] for k in order]


def pose_compatible(i: SourceEntry, j: SourceEntry,
                    config: SimulationConfig | None = None) -> bool:
    config = config or SimulationConfig()
    poses = [e.pose for e in (i, j) if e.kind is SourceKind.RASTER]
    if any(p is None for p in poses):
        return False
    for p in poses:
        if p.vfov_deg == 0:
            return False
        if abs(p.inclination_deg) > config.max_inclination_deg:
            return False
        if abs(p.roll_deg) > config.max_roll_deg:
            return False
    if len(poses) == 2:
        return abs(poses[0].inclination_deg - poses[1].inclination_deg) \
            <= config.max_delta_inclination_deg
    return True


def split_halves(img: LinearImage) -> tuple[LinearImage, LinearImage]:
    """Two maximal non-overlapping squares: left/right for landscape, top/bottom for portrait."""
    h, w = img.height, img.width
    if w >= h:
        s = min(h, w // 2)
        r0 = (h - s) // 2
        boxes = [(r0, 0), (r0, w - s)]
    else:
        s = min(w, h // 2)
        c0 = (w - s) // 2
        boxes = [(0, c0), (h - s, c0)]
    if s < MIN_CROP:
        raise ValueError(f"image too small for two {MIN_CROP}px crops")
    return tuple(img.with_data(img.data[:, r:r + s, c:c + s]) for r, c in boxes)


def make_context_crops(i_img: LinearImage, j_img: LinearImage, a: int, b: int):
    """Return (t_src, r_src, c_src): t = i_a, r = j_b, c = j_(1-b)."""
    i_halves = split_halves(i_img)
    j_halves = split_halves(j_img)
    return i_halves[a], j_halves[b], j_halves[1 - b]


def example_seed(master_seed: int, i: str, j: str, a: int, b: int, scenario_index: int) -> int:
    key = f"{master_seed}:{i}:{j}:{a}:{b}:{scenario_index}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class AttemptSpec:
    index: int
    seed: int
    i: str
    j: str
    a: int
    b: int


@dataclass
class AttemptResult:
    spec: AttemptSpec
    scenario: geo.CaptureScenario
    decision: CullDecision
    example: SimulatedExample | None = None
    mean_ssim: float | None = None
    std_ssim: float | None = None
    error: str | None = None
    message: str = ""

    @property
    def decision_name(self) -> str:
        if self.error is not None:
            return "Error"
        return "Keep" if self.decision.keep else self.decision.reason.value


def plan_attempts(corpus: Corpus, config: SimulationConfig, master_seed: int,
                  budget: int | None = None) -> list[AttemptSpec]:
    if budget is not None and budget <= 0:
        return []
    specs = []
    for i, j in build_pairs(corpus, master_seed, config.include_outdoor_pairs):
        for a in (0, 1):
            for b in (0, 1):
                for s in range(config.scenarios_per_pair):
                    if budget is not None and len(specs) >= budget:
                        return specs
                    seed = example_seed(master_seed, i, j, a, b, s)
                    specs.append(AttemptSpec(len(specs), seed, i, j, a, b))
    return specs


def _capture_pose(i: SourceEntry, j: SourceEntry, scenario: geo.CaptureScenario) -> PoseMeta:
    for e in (i, j):
        if e.kind is SourceKind.RASTER and e.pose is not None:
            return PoseMeta(e.pose.inclination_deg, e.pose.roll_deg, scenario.vfov_deg)
    return PoseMeta(0.0, 0.0, scenario.vfov_deg)


def _source_views(corpus: Corpus, entry: SourceEntry, pose: PoseMeta, azimuth: float,
                  res: int, config: SimulationConfig):
    """Both non-overlapping views of a source at ``res``, plus a saturation flag per view."""
    img = corpus.image(entry.id)
    if entry.kind is SourceKind.IBL:
        views = [geo.ibl_crop(img, pose, azimuth + k * pose.vfov_deg, (res, res),
                              config.ibl_max_oversample) for k in (0, 1)]
        return views, [False, False]
    halves = split_halves(img)
    sat = [is_saturated(h, config.saturation_fraction) for h in halves]
    return [geo.resize(h, res, res) for h in halves], sat


def _unexposed(view: LinearImage, entry: SourceEntry) -> LinearImage:
    if entry.exposure is None:
        return view
    return unexpose(view, entry.exposure)


def simulate_attempt(corpus: Corpus, spec: AttemptSpec, config: SimulationConfig,
                     stats: CorpusStats | None = None,
                     awb: AwbEstimator | None = None) -> AttemptResult:
    """Run one candidate end to end; everything is derived from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    scenario = geo.sample_scenario(rng, config, rng_seed=spec.seed)
    i_entry, j_entry = corpus.by_id[spec.i], corpus.by_id[spec.j]

    def culled(reason, message=""):
        return AttemptResult(spec, scenario, CullDecision.culled(reason), message=message)

    if not pose_compatible(i_entry, j_entry, config):
        return culled(CullReason.GEOMETRY_CULL, "pose gate")
    res = config.resolution
    pose = _capture_pose(i_entry, j_entry, scenario)
    try:
        imap = geo.incidence_map(scenario, pose, (res, res), config.max_missed_pixels)
    except CullSignal as sig:
        return culled(sig.reason, str(sig))

    i_views, i_sat = _source_views(corpus, i_entry, pose, scenario.ibl_azimuth_deg, res, config)
    j_views, j_sat = _source_views(corpus, j_entry, pose, scenario.ibl_azimuth_deg, res, config)
    t_src, r_src, c_src = i_views[spec.a], j_views[spec.b], j_views[1 - spec.b]
    saturated = i_sat[spec.a] or j_sat[spec.b]
    t_src = _unexposed(t_src, i_entry)
    r_src = _unexposed(r_src, j_entry)
    c_src = _unexposed(c_src, j_entry)

    alpha = geo.fresnel_alpha(imap.theta, scenario.refractive_index)
    t = t_src.with_data(np.asarray(t_src.data, np.float64) * (1.0 - alpha))
    r = geo.double_reflection(r_src, imap, scenario, alpha)
    r = geo.defocus_blur(r, geo.defocus_diameter(scenario))

    profile = corpus.profile_for(i_entry) or corpus.profile_for(j_entry) or cs.DEFAULT_PROFILE
    try:
        example = simulate_example(t, (r, c_src), scenario, profile, awb or GrayWorldAwb(),
                                   saturated=saturated, fraction=config.saturation_fraction)
    except CullSignal as sig:
        return culled(sig.reason, str(sig))

    report = ssim_weighted(example.m, example.t, config)
    exposed = True if stats is None else well_exposed(example.m, stats, config.exposure_k)
    decision = cull(report, exposed, config, example.white_shift_mired)
    return AttemptResult(spec, scenario, decision, example, report.mean_ssim, report.std_ssim)


class DatasetManifest:
    """Append-only JSON-lines record of attempted examples."""

    def __init__(self, path=None, records: list | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = list(records or [])
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record) + "\n"
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(line)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        return cls(path, records)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.records)

    def kept(self) -> list[dict]:
        return [r for r in self.records if r["decision"] == "Keep"]

    def histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for r in self.records:
            hist[r["decision"]] = hist.get(r["decision"], 0) + 1
        return dict(sorted(hist.items()))

    def sorted_by_seed(self) -> list[dict]:
        return sorted(self.records, key=lambda r: (r["seed"], r["i"], r["j"], r["a"], r["b"]))


OUTPUT_KEYS = ("m", "t", "r", "c")


def example_dir(out_dir: Path, seed: int) -> Path:
    return Path(out_dir) / "examples" / f"{seed:016x}"


def write_example(example: SimulatedExample, directory: Path, previews: bool = False) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for key in OUTPUT_KEYS:
        path = directory / f"{key}.lrim"
        write_image(getattr(example, key), path)
        paths[key] = path
        if previews:
            from .report import save_preview
            save_preview(getattr(example, key), directory / f"{key}.png")
    return paths


def make_record(result: AttemptResult, outputs: dict | None = None) -> dict:
    spec = result.spec
    ex = result.example
    record = {
        "seed": spec.seed, "i": spec.i, "j": spec.j, "a": spec.a, "b": spec.b,
        "scenario": result.scenario.to_json(),
        "decision": result.decision_name,
        "stats": {
            "mean_ssim": result.mean_ssim,
            "std_ssim": result.std_ssim,
            "e_prime": ex.e_prime if ex is not None else None,
            "white_xy_awb": list(ex.white_xy_awb) if ex is not None else None,
        },
    }
    if outputs:
        record["outputs"] = {k: str(v) for k, v in outputs.items()}
    if result.error is not None:
        record["error"] = result.error
    return record


def run_attempt(corpus: Corpus, spec: AttemptSpec, config: SimulationConfig,
                stats: CorpusStats | None, out_dir: Path | None, awb=None,
                emit_all: bool = False, previews: bool = False) -> dict:
    """Simulate one attempt, write its files if wanted, and return the manifest record."""
    try:
        result = simulate_attempt(corpus, spec, config, stats, awb)
    except (OSError, ValueError) as exc:
        scenario = geo.sample_scenario(np.random.default_rng(spec.seed), config, spec.seed)
        result = AttemptResult(spec, scenario, CullDecision(True), error=f"{type(exc).__name__}: {exc}")
        log.warning("attempt %d (seed %d) failed: %s", spec.index, spec.seed, exc)
        return make_record(result)
    outputs = None
    if out_dir is not None and result.example is not None and (result.decision.keep or emit_all):
        directory = example_dir(out_dir, spec.seed)
        try:
            paths = write_example(result.example, directory, previews)
            outputs = {k: p.relative_to(out_dir) for k, p in paths.items()}
        except (OSError, ValueError) as exc:
            result.error = f"{type(exc).__name__}: {exc}"
    return make_record(result, outputs)


def generate(corpus: Corpus, config: SimulationConfig, budget: int | None = None,
             master_seed: int = 0, out_dir=None, threads: int = 1,
             stats: CorpusStats | None = None, awb: AwbEstimator | None = None,
             emit_all: bool = False, previews: bool = False,
             progress=None) -> DatasetManifest:
    """Generate, cull and emit examples; records are appended in attempt order."""
    awb = awb or GrayWorldAwb()
    if threads > 1 and not getattr(awb, "reentrant", False):
        raise ValueError("AWB estimator is not reentrant; use threads=1")
    manifest_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = out_dir / "manifest.jsonl"
        manifest_path.write_text("")
    manifest = DatasetManifest(manifest_path)
    specs = plan_attempts(corpus, config, master_seed, budget)

    def work(spec):
        return run_attempt(corpus, spec, config, stats, out_dir, awb, emit_all, previews)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = pool.map(work, specs)
            for n, record in enumerate(records, 1):
                manifest.append(record)
                if progress:
                    progress(n, len(specs), record)
    else:
        for n, spec in enumerate(specs, 1):
            record = work(spec)
            manifest.append(record)
            if progress:
                progress(n, len(specs), record)
    return manifest


def replay(record: dict, corpus: Corpus, config: SimulationConfig,
           stats: CorpusStats | None = None, awb=None) -> AttemptResult:
    """Re-run the attempt described by a manifest record."""
    spec = AttemptSpec(-1, int(record["seed"]), record["i"], record["j"],
                       int(record["a"]), int(record["b"]))
    return simulate_attempt(corpus, spec, config, stats, awb)


def split_sources(source_ids: Iterable[str], seed: int = 0,
                  fractions: tuple[float, float, float] = (0.8, 0.15, 0.05)) -> dict[str, str]:
    """Assign each source id to train/val/test."""
    ids = sorted(source_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    names = {}
    for rank, k in enumerate(order):
        names[ids[k]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return names


def partition_manifest(records: Iterable[dict], splits: dict[str, str]) -> dict[str, list[dict]]:
    """Group records by split; records whose sources straddle splits are dropped."""
    out: dict[str, list[dict]] = {"train": [], "val": [], "test": []}
    for rec in records:
        si, sj = splits.get(rec["i"]), splits.get(rec["j"])
        if si is not None and si == sj:
            out[si].append(rec)
    return out


def corpus_stats_from_images(images: Iterable[LinearImage]) -> CorpusStats:
    """Exposure statistics over per-image linear-sRGB means (each rendered with its own white)."""
    means = []
    for img in images:
        to_srgb = cs.xyz_to_srgb_matrix(img.white_xy)
        means.append(float(cs.apply_matrix(to_srgb, np.asarray(img.data, np.float64)).mean()))
    if len(means) < 30:
        raise ValueError(f"exposure statistics need at least 30 images, got {len(means)}")
    return CorpusStats.from_means(means)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    rasters = [corpus.image(e.id) for e in corpus.entries if e.kind is SourceKind.RASTER]
    return corpus_stats_from_images(rasters)
