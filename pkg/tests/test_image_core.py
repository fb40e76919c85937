import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reflsim.image_core import (ColorSpace, ExposureMeta, ImageFormatError, LinearImage, PoseMeta,
                                SceneClass, encode_srgb, read_image, sidecar_path, to_preview_srgb,
                                write_image)


def _write_raw(path, data, meta):
    """Independent writer for the container: 16-byte header then little-endian float32 planes."""
    c, h, w = data.shape
    header = b"LRIM" + np.array([w, h, c], dtype="<u4").tobytes()
    path.write_bytes(header + np.asarray(data, dtype="<f4").tobytes())
    sidecar_path(path).write_text(json.dumps(meta))


def test_constant_image_reads_back(tmp_path):
    p = tmp_path / "c.lrim"
    _write_raw(p, np.full((3, 2, 2), 0.5), {"width": 2, "height": 2, "color_space": "xyz",
                                           "white_xy": [1 / 3, 1 / 3]})
    img = read_image(p)
    assert img.data.size == 12 and np.all(img.data == 0.5)
    assert img.white_xy == pytest.approx((1 / 3, 1 / 3))
    assert img.color_space is ColorSpace.XYZ


def test_nan_sample_rejected(tmp_path):
    p = tmp_path / "n.lrim"
    data = np.zeros((3, 2, 2))
    data[1, 0, 1] = np.nan
    _write_raw(p, data, {"width": 2, "height": 2, "color_space": "xyz"})
    with pytest.raises(ImageFormatError, match="non-finite sample"):
        read_image(p)


@pytest.mark.parametrize("mutate, message", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:-4], "payload"),
    (lambda b: b[:10], "truncated"),
])
def test_corrupt_containers(tmp_path, mutate, message):
    p = tmp_path / "x.lrim"
    write_image(LinearImage(np.ones((3, 2, 3))), p)
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ImageFormatError, match=message):
        read_image(p)


def test_sidecar_dimension_mismatch(tmp_path):
    p = tmp_path / "x.lrim"
    write_image(LinearImage(np.ones((3, 2, 3))), p)
    sidecar_path(p).write_text(json.dumps({"width": 4, "height": 2, "color_space": "xyz"}))
    with pytest.raises(ImageFormatError, match="dimension"):
        read_image(p)


def test_negative_sample_rejected_on_both_paths(tmp_path):
    p = tmp_path / "neg.lrim"
    data = np.ones((3, 2, 2))
    data[0, 0, 0] = -1
    with pytest.raises(ImageFormatError, match="negative"):
        write_image(LinearImage(data), p)
    _write_raw(p, data, {"width": 2, "height": 2, "color_space": "xyz"})
    with pytest.raises(ImageFormatError, match="negative"):
        read_image(p)


def test_zero_image_writes_zero_samples(tmp_path):
    p = tmp_path / "z.lrim"
    write_image(LinearImage(np.zeros((3, 4, 5))), p)
    raw = p.read_bytes()
    assert len(raw) == 16 + 4 * 60
    assert not any(raw[16:])


def test_absent_white_is_omitted_from_sidecar(tmp_path):
    p = tmp_path / "w.lrim"
    write_image(LinearImage(np.ones((3, 2, 2))), p)
    meta = json.loads(sidecar_path(p).read_text())
    assert "white_xy" not in meta
    assert meta == {"width": 2, "height": 2, "color_space": "xyz"}


def test_full_metadata_round_trip(tmp_path):
    img = LinearImage(np.random.default_rng(0).random((3, 5, 7)).astype(np.float32),
                      ColorSpace.XYZ, white_xy=(0.31, 0.33),
                      exposure=ExposureMeta(0.01, 200, 2.8), pose=PoseMeta(3.0, -1.0, 60.0),
                      scene_class=SceneClass.OUTDOOR)
    p = tmp_path / "f.lrim"
    write_image(img, p)
    assert read_image(p) == img


_shapes = st.tuples(st.integers(1, 6), st.integers(1, 6))


@settings(max_examples=40, deadline=None)
@given(shape=_shapes, seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e4))
def test_round_trip_bitwise(tmp_path_factory, shape, seed, scale):
    d = tmp_path_factory.mktemp("rt")
    data = (np.random.default_rng(seed).random((3, *shape)) * scale).astype(np.float32)
    img = LinearImage(data, ColorSpace.LINEAR_SRGB, white_xy=(0.3457, 0.3585))
    p, q = d / "a.lrim", d / "b.lrim"
    write_image(img, p)
    back = read_image(p)
    assert np.array_equal(back.data, data)
    write_image(back, q)
    assert p.read_bytes() == q.read_bytes()
    assert sidecar_path(p).read_text() == sidecar_path(q).read_text()


def test_camera_space_requires_profile():
    with pytest.raises(ImageFormatError):
        LinearImage(np.ones((3, 1, 1)), ColorSpace.CAMERA)
    LinearImage(np.ones((3, 1, 1)), ColorSpace.CAMERA, camera_profile="p")


def test_data_is_read_only():
    img = LinearImage(np.ones((3, 2, 2)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 2


def test_exposure_value():
    assert ExposureMeta(0.02, 200, 2.0).value == pytest.approx(1.0)
    assert ExposureMeta(0.01, 100, 2.0).value == pytest.approx(0.25)


def _preview(v):
    return to_preview_srgb(LinearImage(np.full((3, 1, 1), v), ColorSpace.LINEAR_SRGB))[0, 0, 0]


def test_preview_endpoints():
    assert _preview(0.0) == 0
    assert _preview(1.0) == 255
    assert _preview(7.0) == 255


def test_preview_knee_branches_agree():
    knee = 0.0031308
    linear_branch = 12.92 * knee
    power_branch = 1.055 * knee ** (1 / 2.4) - 0.055
    assert abs(linear_branch - power_branch) * 255 < 1
    assert abs(int(_preview(knee)) - linear_branch * 255) <= 1


def test_preview_rejects_other_spaces():
    with pytest.raises(ValueError):
        to_preview_srgb(LinearImage(np.ones((3, 1, 1))))


def test_encode_matches_reference_curve():
    x = np.linspace(0, 1, 1001)
    ref = np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)
    assert np.allclose(encode_srgb(x), ref, atol=0, rtol=1e-15)
