import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactile_moment.baseline import (baseline_torque, planar_wrench, pointwise_force,
                                     raw_baseline_tilt)
from tactile_moment.errors import DegenerateField
from tactile_moment.field import DisplacementField, GridSpec, gradient
from tactile_moment.simulator import AppliedWrench, ContactPatch, synth_field


def brute_baseline(field, c=(1.0, 1.0, 1.0)):
    g = field.grid
    cx0 = g.origin[0] + (g.width - 1) * g.pitch / 2
    cy0 = g.origin[1] + (g.height - 1) * g.pitch / 2
    tau = np.zeros(3)
    n = 0
    for i in range(g.height):
        for j in range(g.width):
            if not field.valid[i, j]:
                continue
            u, v = field.vectors[i, j]
            f = np.array([c[0] * u, c[1] * v, c[2] * np.sqrt(u * u + v * v)])
            arm = np.array([g.origin[0] + j * g.pitch - cx0, g.origin[1] + i * g.pitch - cy0, 0.0])
            tau += np.cross(arm, f)
            n += 1
    return tau / n


def test_zero_field():
    tau = baseline_torque(DisplacementField.zeros(GridSpec(5, 5)))
    assert np.all(tau.tau == 0)
    shear, tz = planar_wrench(DisplacementField.zeros(GridSpec(5, 5)))
    assert np.all(shear == 0) and tz == 0


def test_uniform_shear_on_masked_grid_confounds_tilt():
    g = GridSpec(5, 5)
    valid = np.ones(g.shape, bool)
    valid[:2, :] = False  # asymmetric about the image centre
    f = DisplacementField(g, np.broadcast_to([3.0, 4.0], (5, 5, 2)), valid)
    pf = pointwise_force(f)
    np.testing.assert_allclose(pf.f[valid], np.broadcast_to([3, 4, 5], (15, 3)))
    tau = baseline_torque(f)
    np.testing.assert_allclose(tau.tau, brute_baseline(f), atol=1e-14)
    assert abs(tau.tilt[0]) > 1.0


def test_matches_brute_force_with_constants(rng):
    g = GridSpec(7, 6, 0.5, (2.0, -1.0))
    valid = rng.random(g.shape) > 0.3
    f = DisplacementField(g, rng.normal(size=(6, 7, 2)), valid)
    c = (2.0, 0.5, 3.0)
    np.testing.assert_allclose(baseline_torque(f, c).tau, brute_baseline(f, c), atol=1e-13)


def test_moment_arm_uses_full_grid_center():
    g = GridSpec(4, 4)
    valid = np.zeros(g.shape, bool)
    valid[3, 3] = True
    f = DisplacementField(g, np.broadcast_to([0.0, 1.0], (4, 4, 2)), valid)
    # the only node sits at (3, 3); the full-grid centre is (1.5, 1.5)
    np.testing.assert_allclose(baseline_torque(f).tau, [1.5, -1.5, 1.5])


vecs = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(6, 8, 2)))


@settings(max_examples=30, deadline=None)
@given(vecs)
def test_normal_component_ignores_sign(vec):
    g = GridSpec(8, 6)
    f = DisplacementField(g, vec)
    np.testing.assert_array_equal(pointwise_force(f).f[..., 2], pointwise_force(-f).f[..., 2])
    assert np.all(pointwise_force(f).f[..., 2] >= 0)


@settings(max_examples=30, deadline=None)
@given(vecs, st.floats(-3, 3), st.floats(-3, 3))
def test_shear_is_translation_equivariant(vec, cu, cv):
    g = GridSpec(8, 6)
    f = DisplacementField(g, vec)
    s0, _ = planar_wrench(f)
    s1, _ = planar_wrench(DisplacementField(g, vec + [cu, cv]))
    np.testing.assert_allclose(s1, s0 + [cu, cv], atol=1e-12)


def test_uniform_translation_planar():
    g = GridSpec.centered(9, 9)
    shear, tz = planar_wrench(DisplacementField(g, np.broadcast_to([2.0, 0.0], (9, 9, 2))))
    np.testing.assert_allclose(shear, [2.0, 0.0])
    assert abs(tz) < 1e-12


def test_rotation_about_mask_centroid():
    g = GridSpec(9, 7, 0.5, (1.0, 1.0))
    X, Y = g.coords()
    valid = np.ones(g.shape, bool)
    valid[:, :2] = False
    cx, cy = X[valid].mean(), Y[valid].mean()
    w = 0.3
    f = DisplacementField(g, np.stack([-w * (Y - cy), w * (X - cx)], -1), valid)
    shear, tz = planar_wrench(f)
    np.testing.assert_allclose(shear, [0, 0], atol=1e-14)
    expected = w * ((X[valid] - cx) ** 2 + (Y[valid] - cy) ** 2).sum() / valid.sum()
    assert tz == pytest.approx(expected, rel=1e-12) and tz > 0


def test_radial_field_has_no_twist():
    g = GridSpec.centered(21, 21, 0.5)
    X, Y = g.coords()
    f = gradient(np.exp(-(X**2 + Y**2) / 8), g)
    _, tz = planar_wrench(f)
    assert abs(tz) < 1e-9


def test_degenerate():
    g = GridSpec(3, 3)
    f = DisplacementField.zeros(g, valid=np.zeros(g.shape, bool))
    with pytest.raises(DegenerateField):
        baseline_torque(f)
    with pytest.raises(DegenerateField):
        planar_wrench(f)


def test_zeroed_pure_tilt_is_invisible_to_the_norm():
    # |v| of a tilt field is mirror-symmetric about the tilt axis on a symmetric patch
    g = GridSpec.centered(32, 32, 0.6)
    f = synth_field(AppliedWrench(tau=(10, 0, 0)), ContactPatch.disc(6), g)
    assert np.abs(raw_baseline_tilt(f)).max() < 1e-12


@pytest.mark.parametrize("tau, k", [((10, 0, 0), 0), ((-10, 0, 0), 0), ((0, 10, 0), 1),
                                    ((0, -10, 0), 1)])
def test_tilt_sign_from_rest(tau, k):
    # measured from the undeformed gel, the grasp field breaks the mirror symmetry
    g = GridSpec.centered(32, 32, 0.6)
    f = synth_field(AppliedWrench(f=(0, 0, 5), tau=tau), ContactPatch.disc(6), g)
    assert np.sign(raw_baseline_tilt(f)[k]) == np.sign(tau[k])
    assert abs(raw_baseline_tilt(f)[k]) > 1e-3


def _sweep_rmse(method, ref_index, axis="x"):
    from tactile_moment.calibration import evaluate, fit
    from tactile_moment.pipeline import TactilePipeline
    from tactile_moment.simulator import TriangleProfile, grasp_sequence

    g = GridSpec.centered(32, 32, 0.6)
    k = 0 if axis == "x" else 1

    def run(seed):
        prof = TriangleProfile(axis=axis, peak=25, frames=120)
        seq = grasp_sequence(prof.script(), ContactPatch.disc(6), g, 0.02,
                             np.random.default_rng(seed))
        pipe = TactilePipeline(method=method)
        pipe.rezero(seq.frames[ref_index])
        return (np.array([pipe.process(f).raw[k] for f in seq.frames[2:]]),
                seq.truth.wrench[2:, 3 + k])

    cal = fit({axis: run(1)}, method=method)
    return evaluate(cal, {axis: run(2)}).axes[axis].rmse


@pytest.mark.xfail(strict=True, reason="noise-only linear simulator: the norm averages noise "
                   "better than the divergence; see decisions ledger")
def test_baseline_worse_than_dipole_on_pure_tilt():
    assert _sweep_rmse("baseline", 0) > _sweep_rmse("dipole", 1)
