import numpy as np
import pytest

from conftest import random_transform
from spinenav.errors import DegenerateMotion, InsufficientData, ValidationError
from spinenav.geometry import FrameGraph, FrameId, RigidTransform, axis_angle
from spinenav.handeye import rotation_system, solve_handeye


def make_dataset(rng, n, x=None, z=None):
    """A_i = Z B_i X^-1 for random B_i."""
    x = x or random_transform(rng, 500.0)
    z = z or random_transform(rng, 200.0)
    b = [random_transform(rng, 300.0) for _ in range(n)]
    a = [z @ bi @ x.inverse() for bi in b]
    return a, b, x, z


def perturb(t, rng, sigma_t):
    return RigidTransform(t.rotation, t.translation + sigma_t * rng.normal(size=3))


def test_identity_fixed_point(rng):
    b = [random_transform(rng) for _ in range(5)]
    res = solve_handeye(b, b)
    assert res.x.allclose(RigidTransform.identity(), 1e-9)
    assert res.z.allclose(RigidTransform.identity(), 1e-9)


@pytest.mark.parametrize("n", [3, 5, 20])
def test_exact_recovery(n):
    for seed in range(10):
        a, b, x, z = make_dataset(np.random.default_rng(seed), n)
        res = solve_handeye(a, b)
        assert res.x.rotation_error(x) < 1e-8 and res.z.rotation_error(z) < 1e-8
        assert res.x.translation_error(x) < 1e-6 and res.z.translation_error(z) < 1e-6
        assert res.rotation_residual < 1e-10
        assert res.translation_residual < 1e-8


def test_kronecker_system_annihilates_truth(rng):
    a, b, x, z = make_dataset(rng, 4)
    m = rotation_system([t.rotation for t in a], [t.rotation for t in b])
    v = np.concatenate([x.rotation.ravel(order="F"), z.rotation.ravel(order="F")])
    assert np.linalg.norm(m @ v) < 1e-12


def test_single_axis_motion_is_degenerate():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, z = random_transform(rng), random_transform(rng)
        axis = rng.normal(size=3)
        b = [RigidTransform(axis_angle(axis, rng.uniform(-3, 3)), rng.uniform(-100, 100, 3)) for _ in range(6)]
        a = [z @ bi @ x.inverse() for bi in b]
        with pytest.raises(DegenerateMotion):
            solve_handeye(a, b)


def test_input_validation(rng):
    a, b, *_ = make_dataset(rng, 4)
    with pytest.raises(ValidationError):
        solve_handeye(a, b[:3])
    with pytest.raises(InsufficientData):
        solve_handeye(a[:2], b[:2])


def test_translation_noise_scaling():
    sigma = 0.5
    ratios = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        a, b, *_ = make_dataset(rng, 10)
        a = [perturb(t, rng, sigma) for t in a]
        b = [perturb(t, rng, sigma) for t in b]
        ratios.append(solve_handeye(a, b).translation_residual / sigma)
    assert 1 / 4 <= np.mean(ratios) <= 4
    assert max(ratios) <= 4


def test_solution_reproduces_measurements_through_frame_graph(rng):
    a, b, *_ = make_dataset(rng, 8)
    res = solve_handeye(a, b)
    # A_i = T_Tool_OT, B_i = T_KukaEE_S, X = T_OT_S, Z = T_Tool_KukaEE
    for ai, bi in zip(a, b):
        g = FrameGraph(
            {
                (FrameId.OT, FrameId.S): res.x,
                (FrameId.TOOL, FrameId.KUKA_EE): res.z,
                (FrameId.KUKA_EE, FrameId.S): bi,
            }
        )
        predicted = g.resolve(FrameId.TOOL, FrameId.OT)
        assert predicted.rotation_error(ai) < 1e-9
        assert predicted.translation_error(ai) < 1e-6
