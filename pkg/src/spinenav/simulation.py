"""End-to-end simulation of the calibration / registration / drilling loop.

Each trial runs three separated stages:

``_acquire``   synthesises measurements from the hidden ground truth;
``_estimate``  runs the calibration and registration pipeline on those
               measurements only (it never sees the ground truth);
``_score``     compares the estimated chain against the ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from spinenav.errors import InvalidParams, SpinenavError, ValidationError
from spinenav.geometry import FrameGraph, FrameId, RigidTransform, axis_angle, look_at, random_rotation, rot_x, rot_z
from spinenav.handeye import solve_handeye
from spinenav.metrics import LandmarkSet, PipelineReport, build_report, fit_circle, landmark_error
from spinenav.phantom import Phantom, bundled_phantoms, generate_phantom, load_phantom
from spinenav.pivot import solve_pivot
from spinenav.registration import IcpParams, PointCloud, register_dual_stage
from spinenav.spatial import NearestNeighborIndex
from spinenav.trajectory import (
    Centerline,
    ExecutionProfile,
    JShapePlan,
    check_safety,
    execution_timeline,
    plan_jshape,
    sample_arc,
)

PICK_LANDMARKS = ("spinous_tip", "left_transverse_tip", "right_transverse_tip")
TUNNEL_DIAMETER = 8.0  # mm


@dataclass(frozen=True)
class NoiseModel:
    # Defaults are tuned so default reports land in the error range seen in
    # bench phantom drilling; they are not tracker datasheet values.
    optical_translation_sigma: float = 0.12  # mm, per axis
    optical_rotation_sigma: float = 0.004  # rad, rotation-vector magnitude
    digitizer_sigma: float = 0.3  # mm, per axis
    magnetic_sigma: float = 0.7  # mm, per axis
    seed: int = 0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "seed" and not v >= 0:
                raise ValidationError(f"{k} must be >= 0")

    @classmethod
    def zero(cls, seed: int = 0) -> NoiseModel:
        return cls(0.0, 0.0, 0.0, 0.0, seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NoiseModel:
        return cls(**d)


def simulate_measurement(
    true_pose: RigidTransform, noise: NoiseModel, rng: np.random.Generator | None = None
) -> RigidTransform:
    """Tracker reading of ``true_pose``.

    The translation gets isotropic Gaussian noise; the rotation is pre-multiplied
    by a rotation about a uniformly random axis whose angle is Gaussian. Random
    draws are consumed even at zero sigma so streams stay aligned across noise
    levels.
    """
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    dt = rng.normal(size=3)
    axis = rng.normal(size=3)
    angle = rng.normal()
    if noise.optical_translation_sigma == 0 and noise.optical_rotation_sigma == 0:
        return true_pose
    r = axis_angle(axis, noise.optical_rotation_sigma * angle) @ true_pose.rotation
    return RigidTransform(r, true_pose.translation + noise.optical_translation_sigma * dt)


@dataclass(frozen=True)
class Acquisition:
    pivot_poses: int = 10
    pivot_max_angle: float = math.radians(25.0)
    # hand-eye motion range is tuned together with NoiseModel defaults
    handeye_poses: int = 20
    handeye_max_angle: float = math.radians(25.0)
    handeye_workspace: float = 100.0  # mm half-width of the end-effector position box
    digitized_points: int = 80
    stylus_length: float = 150.0  # mm
    magnetic_sample_spacing: float = 0.025  # mm; ~40 Hz readout at 1 mm/s pull-back
    tunnel_diameter: float = TUNNEL_DIAMETER

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> Acquisition:
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Hidden frames: ``(OT, S)``, ``(Tool, KukaEE)``, ``(S, CT)``, ``(KukaEE, Tip)``."""

    frames: FrameGraph
    pivot_point: np.ndarray  # S frame

    @property
    def x_tip(self) -> np.ndarray:
        return self.frames.resolve(FrameId.KUKA_EE, FrameId.TIP).translation

    def to_dict(self) -> dict:
        return {"frames": self.frames.to_list(), "pivot_point": [float(v) for v in self.pivot_point]}

    @classmethod
    def from_dict(cls, d: dict) -> GroundTruth:
        return cls(FrameGraph.from_list(d["frames"]), np.asarray(d["pivot_point"], dtype=float))


def default_ground_truth() -> GroundTruth:
    """Fixed bench layout: phantom prone in front of the robot, tracker ~1.8 m away."""
    # CT axes in S: +x_CT -> +y_S, +y_CT (anterior) -> -z_S, +z_CT -> -x_S
    r_s_ct = rot_z(math.radians(8.0)) @ np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    phantom_center = np.array([650.0, -40.0, 180.0])
    t_s_ct = RigidTransform(r_s_ct, phantom_center)
    eye = np.array([1400.0, 1300.0, 1100.0])
    t_s_ot = RigidTransform(look_at(eye, phantom_center), eye)
    t_ee_tool = RigidTransform(rot_z(math.radians(45.0)) @ rot_x(math.radians(30.0)), [70.0, -20.0, 110.0])
    t_ee_tip = RigidTransform.from_translation([1.5, -2.0, 185.0])
    frames = FrameGraph(
        {
            (FrameId.OT, FrameId.S): t_s_ot.inverse(),
            (FrameId.TOOL, FrameId.KUKA_EE): t_ee_tool.inverse(),
            (FrameId.S, FrameId.CT): t_s_ct,
            (FrameId.KUKA_EE, FrameId.TIP): t_ee_tip,
        }
    )
    return GroundTruth(frames, np.array([550.0, 150.0, 60.0]))


def default_plan(phantom: Phantom, profile: ExecutionProfile | None = None, **trajectory) -> JShapePlan:
    """J-shape starting ``approach_buffer`` mm outside the pedicle entry.

    The arc bends medially (toward the midline) in the axial plane.
    """
    profile = profile or ExecutionProfile()
    traj = dict(bundled_phantoms().get(phantom.label, {}).get("trajectory", {}))
    traj.update(trajectory)
    for k in ("bone_straight_length", "arc_radius", "arc_length"):
        if k not in traj:
            raise InvalidParams(f"trajectory needs {k}")
    d = phantom.canal_direction
    return JShapePlan(
        entry_point=phantom.entry_point - profile.approach_buffer * d,
        entry_direction=d,
        straight_length=float(traj["bone_straight_length"]) + profile.approach_buffer,
        arc_radius=float(traj["arc_radius"]),
        arc_length=float(traj["arc_length"]),
        bend_plane_normal=[0.0, 0.0, -1.0],
        sample_spacing=float(traj.get("sample_spacing", 0.5)),
    )


@dataclass(frozen=True, eq=False)
class SimConfig:
    phantom: Phantom
    plan: JShapePlan
    profile: ExecutionProfile = field(default_factory=ExecutionProfile)
    noise: NoiseModel = field(default_factory=NoiseModel)
    trials: int = 3
    ground_truth_frames: GroundTruth = field(default_factory=default_ground_truth)
    acquisition: Acquisition = field(default_factory=Acquisition)
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")

    @classmethod
    def for_phantom(cls, label: str, **overrides) -> SimConfig:
        phantom = load_phantom(label)
        profile = overrides.pop("profile", ExecutionProfile())
        plan = overrides.pop("plan", None) or default_plan(phantom, profile)
        return cls(phantom=phantom, plan=plan, profile=profile, **overrides)

    def with_noise(self, **changes) -> SimConfig:
        return replace(self, noise=replace(self.noise, **changes))

    def to_dict(self) -> dict:
        bundled = bundled_phantoms().get(self.phantom.label, {}).get("params")
        phantom = {"label": self.phantom.label}
        if bundled is None or {k: float(v) for k, v in bundled.items()} != self.phantom.params:
            phantom["params"] = dict(self.phantom.params)
        return {
            "phantom": phantom,
            "plan": self.plan.to_dict(),
            "profile": self.profile.to_dict(),
            "noise": self.noise.to_dict(),
            "trials": self.trials,
            "ground_truth": self.ground_truth_frames.to_dict(),
            "acquisition": self.acquisition.to_dict(),
            "icp": self.icp.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        """Parse a config; every section except ``phantom`` is optional."""
        known = {"phantom", "plan", "profile", "noise", "trials", "ground_truth", "acquisition", "icp"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        if "phantom" not in d:
            raise ValidationError("config needs a phantom section")
        ph = d["phantom"]
        if isinstance(ph, str):
            ph = {"label": ph}
        phantom = generate_phantom(ph["label"], ph["params"]) if "params" in ph else load_phantom(ph["label"])
        profile = ExecutionProfile.from_dict(d["profile"]) if "profile" in d else ExecutionProfile()
        plan = JShapePlan.from_dict(d["plan"]) if d.get("plan") else default_plan(phantom, profile)
        return cls(
            phantom=phantom,
            plan=plan,
            profile=profile,
            noise=NoiseModel.from_dict(d["noise"]) if "noise" in d else NoiseModel(),
            trials=int(d.get("trials", 3)),
            ground_truth_frames=GroundTruth.from_dict(d["ground_truth"]) if "ground_truth" in d else default_ground_truth(),
            acquisition=Acquisition.from_dict(d["acquisition"]) if "acquisition" in d else Acquisition(),
            icp=IcpParams(**d["icp"]) if "icp" in d else IcpParams(),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> SimConfig:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Measurements:
    pivot_poses: list  # measured T_S_KukaEE
    handeye_a: list  # measured T_Tool_OT
    handeye_b: list  # measured T_KukaEE_S
    digitized_ot: np.ndarray  # surface samples in OT
    picks_ot: np.ndarray  # the three picked landmarks, digitized in OT


@dataclass(frozen=True, eq=False)
class Estimates:
    frames: FrameGraph
    pivot: object
    handeye: object
    registration: object


def _trial_streams(seed: int, trial: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def _nominal_down() -> np.ndarray:
    return rot_x(math.pi)  # tool axis pointing to -z_S


def _digitize(points_ot, t_ot_s, acq: Acquisition, noise: NoiseModel, rng) -> np.ndarray:
    """Tracked-stylus readings of surface points (optical + tip-contact noise)."""
    tip_offset = np.array([0.0, 0.0, acq.stylus_length])
    out = np.empty((len(points_ot), 3))
    for i, p in enumerate(points_ot):
        r = t_ot_s.rotation @ _nominal_down() @ random_rotation(rng, math.radians(20.0))
        pose = RigidTransform(r, p - r @ tip_offset)
        measured = simulate_measurement(pose, noise, rng)
        out[i] = measured.apply(tip_offset) + noise.digitizer_sigma * rng.normal(size=3)
    return out


def _acquire(config: SimConfig, rngs) -> Measurements:
    truth = config.ground_truth_frames
    acq = config.acquisition
    noise = config.noise
    rng_pivot, rng_he, rng_dig, _ = rngs
    x_tip = truth.x_tip

    pivot_poses = []
    for _ in range(acq.pivot_poses):
        r = _nominal_down() @ random_rotation(rng_pivot, acq.pivot_max_angle)
        pose = RigidTransform(r, truth.pivot_point - r @ x_tip)
        pivot_poses.append(simulate_measurement(pose, noise, rng_pivot))

    t_ot_s = truth.frames.resolve(FrameId.OT, FrameId.S)
    t_tool_ee = truth.frames.resolve(FrameId.TOOL, FrameId.KUKA_EE)
    center = np.array([600.0, 0.0, 450.0])
    a_poses, b_poses = [], []
    for _ in range(acq.handeye_poses):
        r = _nominal_down() @ random_rotation(rng_he, acq.handeye_max_angle)
        t_s_ee = RigidTransform(r, center + rng_he.uniform(-acq.handeye_workspace, acq.handeye_workspace, 3))
        t_ot_tool = t_ot_s @ t_s_ee @ t_tool_ee.inverse()
        a_poses.append(simulate_measurement(t_ot_tool, noise, rng_he).inverse())
        b_poses.append(simulate_measurement(t_s_ee, noise, rng_he).inverse())

    t_ot_ct = truth.frames.resolve(FrameId.OT, FrameId.CT)
    surface = config.phantom.surface.points
    chosen = np.sort(rng_dig.choice(len(surface), size=min(acq.digitized_points, len(surface)), replace=False))
    digitized = _digitize(t_ot_ct.apply(surface[chosen]), t_ot_s, acq, noise, rng_dig)
    picks_ct = config.phantom.landmarks.array(list(PICK_LANDMARKS))
    picks = _digitize(t_ot_ct.apply(picks_ct), t_ot_s, acq, noise, rng_dig)
    return Measurements(pivot_poses, a_poses, b_poses, digitized, picks)


def _estimate(m: Measurements, phantom: Phantom, icp: IcpParams, index: NearestNeighborIndex) -> Estimates:
    pivot = solve_pivot(m.pivot_poses)
    he = solve_handeye(m.handeye_a, m.handeye_b)
    t_s_ot = he.x.inverse()
    digitized = PointCloud(t_s_ot.apply(m.digitized_ot), FrameId.S)
    picks_s = t_s_ot.apply(m.picks_ot)
    picks_ct = phantom.landmarks.array(list(PICK_LANDMARKS))
    reg = register_dual_stage(digitized, phantom.surface, picks_s, picks_ct, icp, index)
    frames = FrameGraph(
        {
            (FrameId.OT, FrameId.S): he.x,
            (FrameId.TOOL, FrameId.KUKA_EE): he.z,
            (FrameId.CT, FrameId.S): reg.transform,
            (FrameId.KUKA_EE, FrameId.TIP): RigidTransform.from_translation(pivot.x_tip),
        }
    )
    return Estimates(frames, pivot, he, reg)


def _tip_correction(est: Estimates, truth: GroundTruth, direction_ct) -> tuple[RigidTransform, np.ndarray]:
    """Where the real tip ends up relative to where the estimate put it.

    The robot orients the drill along ``direction_ct`` and places the
    end-effector so the *estimated* tip sits on the commanded point; the
    returned translation is ``R_cmd (x_tip_true - x_tip_est)`` in S.
    """
    t_s_ct = est.frames.resolve(FrameId.S, FrameId.CT)
    r_cmd = look_at([0.0, 0.0, 0.0], t_s_ct.rotation @ direction_ct)
    x_tip_est = est.frames.resolve(FrameId.KUKA_EE, FrameId.TIP).translation
    offset = r_cmd @ (truth.x_tip - x_tip_est)
    return t_s_ct, offset


def _score(est: Estimates, config: SimConfig, rng_mag: np.random.Generator) -> dict:
    truth = config.ground_truth_frames
    phantom = config.phantom
    plan = config.plan
    acq = config.acquisition
    t_s_ct_true = truth.frames.resolve(FrameId.S, FrameId.CT)
    t_s_ct_est, tip_offset = _tip_correction(est, truth, plan.entry_direction)

    # landmark verification: tip commanded to each landmark through the estimated chain
    ref = phantom.verification_landmarks()
    reached = LandmarkSet({k: t_s_ct_est.apply(v) + tip_offset for k, v in ref.points.items()}, FrameId.S)
    truth_s = ref.transformed(t_s_ct_true, FrameId.S)
    lm = landmark_error(reached, truth_s)

    # executed path: planned geometry carried through estimated then true frames
    executed = t_s_ct_true.inverse() @ RigidTransform.from_translation(tip_offset) @ t_s_ct_est
    planned = plan_jshape(plan)
    drilled = planned.transformed(executed)
    deviation = np.linalg.norm(drilled.positions - planned.positions, axis=1)
    safety = check_safety(
        drilled, phantom.canal_point, phantom.canal_direction, phantom.canal_diameter, acq.tunnel_diameter
    )

    arc_truth = executed.apply(sample_arc(plan, acq.magnetic_sample_spacing))
    readout = arc_truth + config.noise.magnetic_sigma * rng_mag.normal(size=arc_truth.shape)
    circle = fit_circle(readout)

    return {
        "landmark_errors": lm.per_point,
        "total_calibration_error": lm.mean,
        "total_calibration_error_std": lm.std,
        "trajectory_error": float(deviation.max()),
        "entry_error": float(deviation[0]),
        "fitted_radius": circle.radius,
        "circle_rms_residual": circle.rms_residual,
        "safety_margin": safety.min_margin,
        "safety_pass": safety.passed,
        "tip_error": float(np.linalg.norm(truth.x_tip - est.pivot.x_tip)),
    }


def run_trial(config: SimConfig, trial: int, index: NearestNeighborIndex | None = None) -> dict:
    """One simulated experiment; errors are recorded in the returned dict."""
    index = index or NearestNeighborIndex(config.phantom.surface.points)
    rngs = _trial_streams(config.noise.seed, trial)
    record: dict = {"trial": trial}
    stage = "acquisition"
    try:
        m = _acquire(config, rngs)
        stage = "estimation"
        est = _estimate(m, config.phantom, config.icp, index)
        stage = "scoring"
        scores = _score(est, config, rngs[3])
    except SpinenavError as exc:
        record["error"] = f"{type(exc).__name__} during {stage}: {exc}"
        return record
    record.update(
        {
            "pivot_residual_rms": est.pivot.residual_rms,
            "pivot_condition_number": est.pivot.condition_number,
            "handeye_rotation_residual": est.handeye.rotation_residual,
            "handeye_translation_residual": est.handeye.translation_residual,
            "icp_rmse": est.registration.rmse,
            "icp_iterations": est.registration.iterations,
            "icp_converged": est.registration.converged,
            "icp_correspondences": est.registration.correspondence_count,
            **scores,
        }
    )
    return record


def run_pipeline(config: SimConfig) -> PipelineReport:
    index = NearestNeighborIndex(config.phantom.surface.points)
    records = [run_trial(config, i, index) for i in range(config.trials)]
    timeline = execution_timeline(config.plan, config.profile)
    return build_report(config.phantom.label, records, config.plan.arc_radius, timeline)


def simulate_drilled_centerline(config: SimConfig, trial: int = 0) -> Centerline | None:
    """Drilled centreline (CT frame) of one trial, for trajectory dumps."""
    index = NearestNeighborIndex(config.phantom.surface.points)
    rngs = _trial_streams(config.noise.seed, trial)
    try:
        est = _estimate(_acquire(config, rngs), config.phantom, config.icp, index)
    except SpinenavError:
        return None
    truth = config.ground_truth_frames
    t_s_ct_est, offset = _tip_correction(est, truth, config.plan.entry_direction)
    t_s_ct_true = truth.frames.resolve(FrameId.S, FrameId.CT)
    executed = t_s_ct_true.inverse() @ RigidTransform.from_translation(offset) @ t_s_ct_est
    return plan_jshape(config.plan).transformed(executed)
