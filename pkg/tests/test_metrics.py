import math

import numpy as np
import pytest
from scipy.optimize import least_squares

from conftest import random_transform
from spinenav.errors import CollinearPoints, NameMismatch
from spinenav.geometry import FrameId
from spinenav.metrics import LandmarkSet, PipelineReport, Stat, build_report, fit_circle, landmark_error
from spinenav.trajectory import Timeline


def arc_points(radius, arc_length, n, rng=None, sigma=0.0):
    phi = np.linspace(0.0, arc_length / radius, n)
    pts = np.column_stack([radius * np.sin(phi), radius * (1 - np.cos(phi)), np.zeros(n)])
    if rng is not None:
        pts = pts + sigma * rng.normal(size=pts.shape)
    return pts


class TestLandmarkError:
    def test_three_four_five(self):
        ref = LandmarkSet({"a": [0, 0, 0], "b": [10, 0, 0]})
        meas = LandmarkSet({"a": [3, 4, 0], "b": [10, 0, 0]})
        err = landmark_error(meas, ref)
        assert err.per_point == {"a": 5.0, "b": 0.0}
        assert err.mean == pytest.approx(2.5)
        assert err.std == pytest.approx(math.sqrt(12.5))  # sample std of (5, 0)

    def test_name_mismatch(self):
        with pytest.raises(NameMismatch):
            landmark_error(LandmarkSet({"a": [0, 0, 0]}), LandmarkSet({"b": [0, 0, 0]}))

    def test_frame_mismatch(self):
        with pytest.raises(NameMismatch):
            landmark_error(LandmarkSet({"a": [0, 0, 0]}, FrameId.S), LandmarkSet({"a": [0, 0, 0]}))

    def test_symmetric_and_rigid_invariant(self, rng):
        a = LandmarkSet({k: rng.normal(size=3) * 20 for k in "pqrst"})
        b = LandmarkSet({k: v + rng.normal(size=3) for k, v in a.points.items()})
        g = random_transform(rng, 200.0)
        e_ab, e_ba = landmark_error(a, b), landmark_error(b, a)
        e_g = landmark_error(a.transformed(g), b.transformed(g))
        assert e_ab.per_point == e_ba.per_point
        for k in e_ab.per_point:
            assert e_g.per_point[k] == pytest.approx(e_ab.per_point[k], abs=1e-9)

    def test_dict_round_trip(self, rng):
        a = LandmarkSet({k: rng.normal(size=3) for k in "xyz"}, FrameId.S)
        back = LandmarkSet.from_dict(a.to_dict())
        assert back.frame == FrameId.S and np.array_equal(back.array(), a.array())


class TestFitCircle:
    @pytest.mark.parametrize("radius", [35.0, 69.5])
    def test_exact_arc(self, radius):
        fit = fit_circle(arc_points(radius, 35.0, 70))
        assert fit.radius == pytest.approx(radius, abs=1e-9)
        assert np.allclose(fit.center, [0.0, radius, 0.0], atol=1e-9)
        assert abs(abs(fit.plane_normal[2]) - 1) < 1e-12
        assert fit.rms_residual < 1e-9

    def test_matches_geometric_oracle(self, rng):
        # independent oracle: geometric least squares on the in-plane distances
        pts = arc_points(69.5, 35.0, 70, rng, 0.05)
        fit = fit_circle(pts)

        def resid(x):
            return np.hypot(pts[:, 0] - x[0], pts[:, 1] - x[1]) - x[2]

        sol = least_squares(resid, [0.0, 60.0, 60.0], xtol=1e-14, ftol=1e-14).x
        assert fit.radius == pytest.approx(sol[2], abs=0.05)

    def test_monte_carlo_noise(self):
        errs = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            errs.append(abs(fit_circle(arc_points(35.0, 35.0, 70, rng, 0.5)).radius - 35.0))
        assert np.mean(errs) < 3.0

    def test_collinear_raises(self):
        line = np.column_stack([np.linspace(0, 10, 20), np.zeros(20), np.zeros(20)])
        with pytest.raises(CollinearPoints):
            fit_circle(line)
        with pytest.raises(CollinearPoints):
            fit_circle(line[:2])

    def test_nearly_straight_raises(self):
        with pytest.raises(CollinearPoints):
            fit_circle(arc_points(1e9, 35.0, 50))

    def test_rigid_equivariance(self, rng):
        pts = arc_points(35.0, 35.0, 60, rng, 0.2)
        g = random_transform(rng, 300.0)
        a, b = fit_circle(pts), fit_circle(g.apply(pts))
        assert b.radius == pytest.approx(a.radius, abs=1e-8)
        assert np.allclose(b.center, g.apply(a.center), atol=1e-7)
        assert b.rms_residual == pytest.approx(a.rms_residual, abs=1e-9)


def test_report_round_trip():
    records = [
        {"trial": 0, "icp_rmse": 0.5, "total_calibration_error": 3.1, "fitted_radius": 70.0, "trajectory_error": 1.0},
        {"trial": 1, "icp_rmse": 0.7, "total_calibration_error": 3.5, "fitted_radius": 68.0, "trajectory_error": 2.0},
        {"trial": 2, "error": "DegenerateMotion: x"},
    ]
    rep = build_report("L3", records, 69.5, Timeline(27.0, 14.0, 24.8, 65.8))
    assert rep.trials == 3 and rep.failed_trials == 1
    assert rep.icp_error.mean == pytest.approx(0.6)
    assert rep.radius_error.mean == pytest.approx(1.0)
    assert rep.procedure_time == pytest.approx(65.8)
    text = rep.to_json()
    assert PipelineReport.from_json(text).to_json() == text
    assert "L3" in rep.summary()


def test_stat_single_value_has_zero_std():
    assert Stat.of([2.0]) == Stat(2.0, 0.0)
