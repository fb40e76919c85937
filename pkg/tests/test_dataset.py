import json
from pathlib import Path

import numpy as np
import pytest

from reflsim.config import SimulationConfig
from reflsim.dataset import (Corpus, DatasetManifest, SourceEntry, SourceKind, build_pairs,
                             corpus_stats, corpus_stats_from_images, example_seed, generate,
                             make_context_crops, partition_manifest, plan_attempts,
                             pose_compatible, replay, split_halves, split_sources)
from reflsim.image_core import ExposureMeta, LinearImage, PoseMeta, SceneClass, read_image
from reflsim.validate import additivity_error, validate_manifest

EXPO = ExposureMeta(0.01, 100, 2.0)


def entry(id, cls, pose=(0.0, 0.0, 60.0), kind=SourceKind.RASTER):
    return SourceEntry(id, Path(f"{id}.lrim"), SceneClass(cls), kind,
                       PoseMeta(*pose) if pose else None, EXPO if kind is SourceKind.RASTER else None)


def test_pair_set_formula():
    es = [entry("o1", "outdoor"), entry("i1", "indoor"), entry("i2", "indoor")]
    pairs = build_pairs(es, seed=3)
    assert sorted(pairs) == sorted([("o1", "i1"), ("o1", "i2"), ("i1", "o1"), ("i2", "o1"),
                                    ("i1", "i2"), ("i2", "i1")])
    assert build_pairs(es, seed=3) == pairs


def test_pairs_exclude_self_and_outdoor_pairs():
    es = [entry(f"o{k}", "outdoor") for k in range(3)] + [entry(f"i{k}", "indoor") for k in range(3)]
    pairs = build_pairs(es)
    assert all(i != j for i, j in pairs)
    assert not any(i.startswith("o") and j.startswith("o") for i, j in pairs)
    with_oo = build_pairs(es, include_outdoor_pairs=True)
    assert len(with_oo) == len(pairs) + 6


def test_empty_class():
    with pytest.raises(ValueError, match="empty class"):
        build_pairs([entry("i1", "indoor"), entry("i2", "indoor")])


def test_pose_gate():
    cfg = SimulationConfig()
    assert pose_compatible(entry("a", "indoor", (10, 0, 60)), entry("b", "indoor", (20, 0, 60)), cfg)
    assert not pose_compatible(entry("a", "indoor", (10, 0, 60)), entry("b", "indoor", (26, 0, 60)), cfg)
    assert not pose_compatible(entry("a", "indoor", (0, 12, 60)), entry("b", "indoor"), cfg)
    assert not pose_compatible(entry("a", "indoor"), entry("b", "indoor", (0, -12, 60)), cfg)
    assert not pose_compatible(entry("a", "indoor", (46, 0, 60)), entry("b", "indoor", (40, 0, 60)), cfg)
    assert not pose_compatible(entry("a", "indoor", (0, 0, 0)), entry("b", "indoor"), cfg)
    ibl = entry("p", "indoor", None, SourceKind.IBL)
    assert pose_compatible(entry("a", "indoor", (30, 0, 60)), ibl, cfg)


def _img(h, w):
    return LinearImage(np.arange(3 * h * w, dtype=float).reshape(3, h, w))


def test_landscape_split_left_right():
    img = _img(10, 24)
    left, right = split_halves(img)
    assert left.data.shape == right.data.shape == (3, 10, 10)
    assert np.array_equal(left.data, img.data[:, :, :10])
    assert np.array_equal(right.data, img.data[:, :, 14:])
    i_img = _img(12, 30)
    t, r, c = make_context_crops(i_img, img, 0, 0)
    assert np.array_equal(r.data, left.data) and np.array_equal(c.data, right.data)
    assert not set(r.data.ravel()) & set(c.data.ravel())


def test_portrait_split_top_bottom():
    img = _img(24, 10)
    top, bottom = split_halves(img)
    assert np.array_equal(top.data, img.data[:, :10])
    assert np.array_equal(bottom.data, img.data[:, 14:])


def test_four_crop_combinations_distinct():
    i_img, j_img = _img(10, 24), _img(12, 30)
    triples = {tuple(float(x.data.sum()) for x in make_context_crops(i_img, j_img, a, b))
               for a in (0, 1) for b in (0, 1)}
    assert len(triples) == 4


def test_too_small():
    with pytest.raises(ValueError, match="too small"):
        split_halves(_img(4, 6))


def test_example_seed_is_stable():
    s = example_seed(1, "a", "b", 0, 1, 0)
    assert s == example_seed(1, "a", "b", 0, 1, 0)
    assert 0 <= s < 2**64
    assert len({example_seed(1, "a", "b", a, b, k) for a in (0, 1) for b in (0, 1) for k in (0, 1)}) == 8


def test_attempt_count(desk_corpus, small_config):
    n_pairs = len(build_pairs(desk_corpus))
    assert len(plan_attempts(desk_corpus, small_config, 0)) == n_pairs * 4 * 2
    assert len(plan_attempts(desk_corpus, small_config, 0, budget=17)) == 17
    assert plan_attempts(desk_corpus, small_config, 0, budget=0) == []


def test_budget_zero(desk_corpus, small_config, tmp_path):
    m = generate(desk_corpus, small_config, budget=0, out_dir=tmp_path)
    assert len(m) == 0 and (tmp_path / "manifest.jsonl").read_text() == ""


@pytest.fixture(scope="module")
def generated(desk_corpus, desk_stats, tmp_path_factory):
    cfg = SimulationConfig(resolution=64)
    out = tmp_path_factory.mktemp("gen")
    m = generate(desk_corpus, cfg, budget=120, master_seed=11, out_dir=out, stats=desk_stats)
    return out, m


def test_manifest_schema(generated):
    out, m = generated
    assert len(m) == 120
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 120
    for line in lines:
        rec = json.loads(line)
        assert set(rec) <= {"seed", "i", "j", "a", "b", "scenario", "decision", "outputs", "stats", "error"}
        assert set(rec["stats"]) == {"mean_ssim", "std_ssim", "e_prime", "white_xy_awb"}
        assert ("outputs" in rec) == (rec["decision"] == "Keep")
    assert m.kept()


def test_kept_examples_revalidate(generated):
    out, m = generated
    report = validate_manifest(out / "manifest.jsonl")
    assert report.ok and report.checked == len(m.kept())
    for rec in m.kept():
        imgs = {k: read_image(out / p) for k, p in rec["outputs"].items()}
        assert additivity_error(imgs["m"].data, imgs["t"].data, imgs["r"].data) < 1e-5
        assert len({i.white_xy for i in imgs.values()}) == 1
        assert imgs["m"].white_xy == pytest.approx(tuple(rec["stats"]["white_xy_awb"]))


def test_rerun_is_bitwise_identical(generated, desk_corpus, desk_stats, tmp_path):
    out, _ = generated
    generate(desk_corpus, SimulationConfig(resolution=64), budget=120, master_seed=11,
             out_dir=tmp_path, stats=desk_stats)
    assert (tmp_path / "manifest.jsonl").read_bytes() == (out / "manifest.jsonl").read_bytes()
    for f in (out / "examples").rglob("*"):
        if f.is_file():
            assert (tmp_path / f.relative_to(out)).read_bytes() == f.read_bytes()


def test_replay_reproduces_rasters(generated, desk_corpus, desk_stats):
    out, m = generated
    for rec in m.kept()[:5]:
        res = replay(rec, desk_corpus, SimulationConfig(resolution=64), desk_stats)
        for key in "mtrc":
            stored = read_image(out / rec["outputs"][key]).data
            assert np.array_equal(getattr(res.example, key).data.astype(np.float32), stored)


def test_threads_match_serial(desk_corpus, desk_stats, generated):
    _, serial = generated
    par = generate(desk_corpus, SimulationConfig(resolution=64), budget=120, master_seed=11,
                   threads=4, stats=desk_stats)
    assert par.sorted_by_seed() == [{k: v for k, v in r.items() if k != "outputs"}
                                    for r in serial.sorted_by_seed()]


def test_missing_source_becomes_error_record(tmp_path, desk_corpus, small_config):
    broken = [e if e.scene_class is SceneClass.INDOOR or e.kind is SourceKind.IBL
              else SourceEntry(e.id, tmp_path / "missing.lrim", e.scene_class, e.kind, e.pose,
                               e.exposure, e.camera_profile)
              for e in desk_corpus.entries]
    corpus = Corpus(broken, desk_corpus.profiles)
    m = generate(corpus, small_config, budget=40, master_seed=2)
    hist = m.histogram()
    assert hist.get("Error", 0) > 0 and len(m) == 40
    assert all("error" in r for r in m if r["decision"] == "Error")


def test_corpus_round_trip(desk_dir, tmp_path):
    c = Corpus.load(desk_dir / "corpus.jsonl")
    c.save(tmp_path / "corpus.jsonl")
    again = Corpus.load(tmp_path / "corpus.jsonl")
    assert [e.id for e in again.entries] == [e.id for e in c.entries]
    assert again.profiles == c.profiles


def test_ibl_is_calibrated_to_indoor_median(desk_corpus):
    ibl = [e for e in desk_corpus.entries if e.kind is SourceKind.IBL][0]
    img = desk_corpus.image(ibl.id)
    assert float(np.median(img.data[1])) == pytest.approx(desk_corpus.indoor_median(), rel=1e-6)


def test_splits_and_partition():
    ids = [f"s{k}" for k in range(40)]
    splits = split_sources(ids, seed=1)
    counts = {name: list(splits.values()).count(name) for name in ("train", "val", "test")}
    assert counts == {"train": 32, "val": 6, "test": 2}
    recs = [{"i": "s0", "j": "s1"}, {"i": "s2", "j": "s2"}]
    parts = partition_manifest(recs, splits)
    for name, group in parts.items():
        for r in group:
            assert splits[r["i"]] == splits[r["j"]] == name


def test_corpus_stats(desk_corpus):
    with pytest.raises(ValueError, match="at least 30"):
        corpus_stats(desk_corpus)
    imgs = [LinearImage(np.full((3, 2, 2), v), white_xy=(0.3457, 0.3585)) for v in np.linspace(0.1, 0.3, 30)]
    s = corpus_stats_from_images(imgs)
    assert s.n == 30 and s.sigma > 0


def test_manifest_load_and_histogram(generated):
    out, m = generated
    again = DatasetManifest.load(out / "manifest.jsonl")
    assert again.records == m.records
    assert sum(again.histogram().values()) == len(m)
