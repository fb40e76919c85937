"""Command-line entry points.

Exit codes: 0 success (or keep), 2 culled example, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import color_science as cs
from .config import SimulationConfig
from .dataset import (AttemptSpec, Corpus, DatasetManifest, SourceEntry, SourceKind,
                      corpus_stats, example_seed, generate, make_record, simulate_attempt,
                      write_example)
from .image_core import PoseMeta, SceneClass, read_image
from .search import CorpusStats

DEFAULT_SEED = 20190901
EXIT_OK, EXIT_ERROR, EXIT_CULL = 0, 1, 2

log = logging.getLogger("reflsim")


def _config(args) -> SimulationConfig:
    config = SimulationConfig.load(args.config) if args.config else SimulationConfig()
    if getattr(args, "resolution", None):
        config = config.replace(resolution=args.resolution)
    return config


def _stats(args) -> CorpusStats | None:
    return CorpusStats.load(args.stats) if getattr(args, "stats", None) else None


def _single_source(path: Path, source_id: str, fallback_class: SceneClass,
                   profile: str | None) -> SourceEntry:
    img = read_image(path)
    kind = SourceKind.IBL if img.exposure is None and img.width == 2 * img.height \
        else SourceKind.RASTER
    pose = img.pose
    if kind is SourceKind.RASTER and pose is None:
        pose = PoseMeta(0.0, 0.0, 60.0)
        log.info("%s has no pose; assuming a level camera", path)
    return SourceEntry(source_id, path, img.scene_class or fallback_class, kind, pose,
                       img.exposure, img.camera_profile or profile)


def cmd_synth(args) -> int:
    config = _config(args)
    profile = cs.CameraProfile.load(args.profile) if args.profile else cs.DEFAULT_PROFILE
    entries = [_single_source(Path(args.i), "i", SceneClass.INDOOR, profile.name),
               _single_source(Path(args.j), "j", SceneClass.INDOOR, profile.name)]
    corpus = Corpus(entries, {profile.name: profile})
    a, b = (int(v) for v in np.random.default_rng(args.seed).integers(0, 2, size=2))
    spec = AttemptSpec(0, example_seed(args.seed, "i", "j", a, b, 0), "i", "j", a, b)

    result = simulate_attempt(corpus, spec, config, _stats(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = None
    if result.example is not None:
        paths = write_example(result.example, out, previews=True)
        outputs = {k: p.relative_to(out) for k, p in paths.items()}
    manifest_path = out / "manifest.jsonl"
    manifest_path.write_text("")
    DatasetManifest(manifest_path).append(make_record(result, outputs))
    if result.decision.keep:
        print(f"Keep (seed {spec.seed}, a={a}, b={b})")
        return EXIT_OK
    print(result.decision.reason.value)
    return EXIT_CULL


def cmd_generate(args) -> int:
    config = _config(args)
    corpus = Corpus.load(args.corpus)
    stats = _stats(args)
    start = time.perf_counter()

    def progress(n, total, record):
        if args.verbose or n == total or n % 50 == 0:
            print(f"[{n}/{total}] {record['decision']}", file=sys.stderr)

    manifest = generate(corpus, config, budget=args.budget, master_seed=args.seed,
                        out_dir=args.out, threads=args.threads, stats=stats,
                        emit_all=args.emit_all, previews=args.previews, progress=progress)
    elapsed = time.perf_counter() - start
    hist = manifest.histogram()
    print(f"{len(manifest)} attempts in {elapsed:.1f}s; kept {hist.get('Keep', 0)}")
    for name, count in hist.items():
        print(f"{name}\t{count}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import validate_manifest
    report = validate_manifest(args.manifest, _config(args))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for v in report.violations:
        print(f"violation: {v}")
    print(f"checked {report.checked} kept examples, {len(report.violations)} violations")
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_stats(args) -> int:
    stats = corpus_stats(Corpus.load(args.corpus))
    if args.out:
        stats.save(args.out)
    print(json.dumps(stats.to_json()))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_report
    paths = render_report(DatasetManifest.load(args.manifest), args.out, _config(args))
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return EXIT_OK


def cmd_preview(args) -> int:
    from .report import save_preview
    img = read_image(args.image)
    if img.white_xy is None and img.color_space.value != "linear_srgb":
        raise ValueError("image has no white point; cannot render to sRGB")
    if img.color_space.value == "xyz":
        img = img.with_data(cs.apply_matrix(cs.xyz_to_srgb_matrix(img.white_xy),
                                            np.asarray(img.data, np.float64)))
        if img.exposure is None:
            img = img.with_data(img.data * (0.18 / max(float(np.median(img.data)), 1e-12)))
        img = img.replace(color_space="linear_srgb")
    out = Path(args.out) if args.out else Path(args.image).with_suffix(".png")
    save_preview(img, out)
    print(out)
    return EXIT_OK


def cmd_make_desk_corpus(args) -> int:
    from .desk import make_desk_corpus
    path = make_desk_corpus(args.out, n_outdoor=args.outdoor, n_indoor=args.indoor,
                            n_ibl=args.ibl, seed=args.seed)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="simulation config JSON")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--resolution", type=int, help="output side length in pixels")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="reflsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="simulate one example from two images")
    p.add_argument("i", help="transmission source image")
    p.add_argument("j", help="reflection source image")
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="corpus exposure statistics JSON")
    p.add_argument("--profile", help="camera profile JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("generate", parents=[common], help="generate a dataset from a corpus")
    p.add_argument("corpus", help="corpus manifest (JSON lines)")
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, help="maximum number of attempts")
    p.add_argument("--stats", help="corpus exposure statistics JSON")
    p.add_argument("--emit-all", action="store_true", help="write culled examples too")
    p.add_argument("--previews", action="store_true", help="write PNG previews")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", parents=[common], help="re-check kept examples")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="corpus exposure statistics")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", parents=[common], help="summary table and figures")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("preview", parents=[common], help="render an image to 8-bit PNG")
    p.add_argument("image")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("make-desk-corpus", parents=[common], help="write a procedural corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--outdoor", type=int, default=2)
    p.add_argument("--indoor", type=int, default=5)
    p.add_argument("--ibl", type=int, default=1)
    p.set_defaults(func=cmd_make_desk_corpus)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
