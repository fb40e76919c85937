import numpy as np
import pytest

from reflsim import color_science as cs
from reflsim.culling import CullReason, CullSignal
from reflsim.geometry import CaptureScenario
from reflsim.image_core import ColorSpace, ExposureMeta, LinearImage
from reflsim.photometric import (GrayWorldAwb, compute_exposure, is_saturated, simulate_example,
                                 unexpose, white_balance_transform)

TAU = ((0.4 + 0.055) / 1.055) ** 2.4
IDENTITY = cs.CameraProfile(tuple(np.eye(3).ravel()), tuple(np.eye(3).ravel()), 6504, 2856,
                            name="identity")
SCENARIO = CaptureScenario(0, 60, 1.5, 10, 1000, False, 10, 10, 1.6, 26)


class FixedAwb:
    reentrant = True

    def __init__(self, white):
        self.white = np.asarray(white, float)

    def estimate(self, img):
        return self.white


def xyz_image(data, white=cs.D50_XY):
    return LinearImage(np.asarray(data, float), ColorSpace.XYZ, white_xy=white)


def srgb_mean(img):
    return cs.apply_matrix(cs.xyz_to_srgb_matrix(img.white_xy), img.data).mean()


def angle(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.arccos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))


def test_unexpose_unit_exposure_is_identity():
    img = xyz_image(np.random.default_rng(0).random((3, 4, 4)))
    out = unexpose(img, ExposureMeta(0.02, 200, 2.0))
    assert np.allclose(out.data, img.data, rtol=1e-15)
    assert out.exposure is None


def test_unexpose_quarter_exposure_scales_by_four():
    img = xyz_image(np.random.default_rng(1).random((3, 4, 4)))
    meta = ExposureMeta(0.01, 100, 2.0)
    out = unexpose(img, meta)
    assert np.allclose(out.data, img.data * 4, rtol=1e-15)
    assert out.saturation_level == pytest.approx((4, 4, 4))
    assert np.allclose(out.data * meta.value, img.data, rtol=1e-15)


def test_unexpose_requires_metadata():
    with pytest.raises(ValueError):
        unexpose(xyz_image(np.ones((3, 1, 1))))


def test_exposure_to_encoded_point_four():
    rng = np.random.default_rng(2)
    base = rng.random((3, 8, 8))
    m = xyz_image(base)
    m = m.with_data(base * TAU / srgb_mean(m))
    assert compute_exposure(m, m, m, saturated=False) == pytest.approx(1.0, abs=1e-12)
    m2 = m.with_data(m.data * 2)
    assert compute_exposure(m2, m2, m2, saturated=False) == pytest.approx(0.5, abs=1e-12)


def test_saturated_branch_uses_dimmer_maximum():
    srgb_to_xyz = np.linalg.inv(cs.xyz_d50_to_srgb())
    t_rgb = np.zeros((3, 2, 2))
    t_rgb[:, 0, 0] = 2.0
    r_rgb = np.zeros((3, 2, 2))
    r_rgb[:, 1, 1] = 4.0
    t = xyz_image(cs.apply_matrix(srgb_to_xyz, t_rgb))
    r = xyz_image(cs.apply_matrix(srgb_to_xyz, r_rgb))
    m = t.with_data(t.data + r.data)
    assert compute_exposure(m, t, r, saturated=True) == pytest.approx(0.5, rel=1e-12)
    # Swapping the roles of t and r leaves the min() unchanged.
    assert compute_exposure(m, r.replace(white_xy=t.white_xy), t, saturated=True) \
        == pytest.approx(0.5, rel=1e-12)


def test_saturation_detection():
    img = xyz_image(np.full((3, 2, 2), 0.5))
    assert not is_saturated(img)
    assert is_saturated(img.with_data(np.full((3, 2, 2), 0.9995)))
    hdr = img.replace(saturation_level=(np.inf,) * 3).with_data(np.full((3, 2, 2), 1e6))
    assert not is_saturated(hdr)


def test_degenerate_mixture_is_culled():
    z = xyz_image(np.zeros((3, 2, 2)))
    with pytest.raises(CullSignal) as exc:
        compute_exposure(z, z, z, saturated=False)
    assert exc.value.reason is CullReason.OVER_UNDER_EXPOSED


def test_identity_profile_collapses_to_bradford():
    white_t = tuple(float(v) for v in cs.mired_to_xy(250.0))
    t = xyz_image(np.random.default_rng(3).random((3, 4, 4)), white_t)
    cap = white_balance_transform(t, t, IDENTITY, FixedAwb(cs.xy_to_xyz(white_t)))
    assert cap.white_xy_awb == pytest.approx(white_t, abs=1e-15)
    assert np.abs(cap.wb_transform - cs.map_white_matrix(white_t, cs.D50_XY)).max() < 1e-12


@pytest.mark.parametrize("awb_kelvin", [2200, 2600, 7000, 9000])
def test_fixed_point_when_color_matrix_is_shared(awb_kelvin):
    # Both whites fall outside the calibration range on the same side, so the
    # same clamped matrix is used for t and for the AWB estimate.
    p = cs.DEFAULT_PROFILE
    t_kelvin = 2500 if awb_kelvin < 5000 else 8000
    white_t = cs.temperature_to_xy(t_kelvin)
    t = xyz_image(np.random.default_rng(4).random((3, 4, 4)), white_t)
    awb_xy = cs.temperature_to_xy(awb_kelvin)
    neutral = cs.find_xyz_to_cam(awb_xy, p) @ cs.xy_to_xyz(awb_xy)
    cap = white_balance_transform(t, t, p, FixedAwb(neutral))
    assert angle(cap.wb_transform @ cs.xy_to_xyz(cap.white_xy_awb), cs.xy_to_xyz(cs.D50_XY)) < 1e-6


def test_estimated_white_maps_to_d50_in_input_frame(rng):
    # The white the AWB found, expressed as input XYZ, is what lands on D50.
    p = cs.DEFAULT_PROFILE
    for _ in range(50):
        white_t = cs.temperature_to_xy(rng.uniform(2500, 9000))
        t = xyz_image(rng.random((3, 4, 4)), white_t)
        awb_xy = cs.temperature_to_xy(rng.uniform(2200, 12000))
        neutral = cs.find_xyz_to_cam(awb_xy, p) @ cs.xy_to_xyz(awb_xy) * rng.uniform(0.97, 1.03, 3)
        cap = white_balance_transform(t, t, p, FixedAwb(neutral))
        src = np.linalg.solve(cap.xyz_to_cam, cap.xyz_to_cam_awb @ cs.xy_to_xyz(cap.white_xy_awb))
        assert angle(cap.wb_transform @ src, cs.xy_to_xyz(cs.D50_XY)) < 1e-6


def test_transform_is_scale_invariant_under_gray_world():
    t = xyz_image(np.random.default_rng(5).random((3, 6, 6)), cs.temperature_to_xy(4000))
    a = white_balance_transform(t, t, cs.DEFAULT_PROFILE, GrayWorldAwb())
    b = white_balance_transform(t.with_data(t.data * 7.5), t, cs.DEFAULT_PROFILE, GrayWorldAwb())
    assert np.abs(a.wb_transform - b.wb_transform).max() < 1e-12
    assert a.white_xy_awb == b.white_xy_awb


def test_awb_failure():
    t = xyz_image(np.ones((3, 2, 2)))
    with pytest.raises(CullSignal) as exc:
        white_balance_transform(t, t, cs.DEFAULT_PROFILE, FixedAwb([1, -1, 1]))
    assert exc.value.reason is CullReason.AWB_FAILURE


def _parts(seed, white=None):
    rng = np.random.default_rng(seed)
    white = white or cs.temperature_to_xy(rng.uniform(3000, 7000))
    return [xyz_image(rng.random((3, 8, 8)) * s, white) for s in (1.0, 0.3, 0.5)]


def test_zero_reflection_gives_m_equal_t():
    t, _, c = _parts(6)
    r = t.with_data(np.zeros_like(t.data))
    ex = simulate_example(t, (r, c), SCENARIO, cs.DEFAULT_PROFILE, saturated=False)
    assert np.array_equal(ex.m.data, ex.t.data)
    assert len({img.white_xy for img in (ex.m, ex.t, ex.r, ex.c)}) == 1


@pytest.mark.parametrize("seed", range(5))
def test_outputs_are_additive(seed):
    t, r, c = _parts(seed)
    ex = simulate_example(t, (r, c), SCENARIO, cs.DEFAULT_PROFILE, saturated=False)
    err = np.abs(ex.m.data - ex.t.data - ex.r.data).max() / ex.m.data.max()
    assert err < 1e-5
    assert ex.m.color_space is ColorSpace.LINEAR_SRGB
    # Same matrix on every component.
    mat = ex.capture.output_matrix
    assert np.allclose(ex.c.data, np.maximum(cs.apply_matrix(mat, c.data), 0), rtol=1e-12)
    assert ex.e_prime > 0


def test_unsaturated_exposure_hits_target():
    t, r, c = _parts(7)
    ex = simulate_example(t, (r, c), SCENARIO, cs.DEFAULT_PROFILE, saturated=False)
    m = t.with_data((t.data + r.data) * ex.e_prime)
    assert srgb_mean(m) == pytest.approx(TAU, abs=1e-6)


def test_shape_mismatch():
    t, r, c = _parts(8)
    with pytest.raises(ValueError):
        simulate_example(t, (r.with_data(r.data[:, :4]), c), SCENARIO, cs.DEFAULT_PROFILE)
