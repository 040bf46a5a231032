"""J-shape drilling trajectories.

A J-shape is a straight segment along the pedicle canal followed by a
tangent-continuous circular arc into the vertebral body. With junction
``J``, entry direction ``d`` and bend direction ``u = d x n`` (``n`` the
bend-plane normal), the arc is

    c(phi) = J + R sin(phi) d + R (1 - cos(phi)) u,   0 <= phi <= L_arc / R

and its centre is ``J + R u``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from spinenav.errors import InvalidPlan, ValidationError
from spinenav.geometry import RigidTransform

_UNIT_TOL = 1e-9


def _vec(v) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JShapePlan:
    entry_point: np.ndarray  # CT frame, mm
    entry_direction: np.ndarray
    straight_length: float
    arc_radius: float
    arc_length: float
    bend_plane_normal: np.ndarray
    sample_spacing: float = 0.5

    def __post_init__(self):
        for name in ("entry_point", "entry_direction", "bend_plane_normal"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        d, n = self.entry_direction, self.bend_plane_normal
        if any(v.shape != (3,) for v in (self.entry_point, d, n)):
            raise InvalidPlan("entry point, direction and bend normal must be 3-vectors")
        if abs(np.linalg.norm(d) - 1) > _UNIT_TOL or abs(np.linalg.norm(n) - 1) > _UNIT_TOL:
            raise InvalidPlan("entry_direction and bend_plane_normal must be unit vectors")
        if abs(float(d @ n)) >= _UNIT_TOL:
            raise InvalidPlan("bend_plane_normal must be orthogonal to entry_direction")
        if not self.straight_length > 0:
            raise InvalidPlan("straight_length must be positive")
        if not self.arc_radius > 0:
            raise InvalidPlan("arc_radius must be positive")
        # zero arc length is accepted as a straight-only plan
        if not 0 <= self.arc_length <= math.pi * self.arc_radius:
            raise InvalidPlan("arc_length must lie in [0, pi * arc_radius]")
        if not self.sample_spacing > 0:
            raise InvalidPlan("sample_spacing must be positive")

    @property
    def bend_direction(self) -> np.ndarray:
        return np.cross(self.entry_direction, self.bend_plane_normal)

    @property
    def junction(self) -> np.ndarray:
        return self.entry_point + self.straight_length * self.entry_direction

    @property
    def arc_center(self) -> np.ndarray:
        return self.junction + self.arc_radius * self.bend_direction

    @property
    def total_length(self) -> float:
        return self.straight_length + self.arc_length

    def transformed(self, g: RigidTransform) -> JShapePlan:
        return JShapePlan(
            entry_point=g.apply(self.entry_point),
            entry_direction=g.rotation @ self.entry_direction,
            straight_length=self.straight_length,
            arc_radius=self.arc_radius,
            arc_length=self.arc_length,
            bend_plane_normal=g.rotation @ self.bend_plane_normal,
            sample_spacing=self.sample_spacing,
        )

    def to_dict(self) -> dict:
        return {
            "entry_point": [float(v) for v in self.entry_point],
            "entry_direction": [float(v) for v in self.entry_direction],
            "straight_length": float(self.straight_length),
            "arc_radius": float(self.arc_radius),
            "arc_length": float(self.arc_length),
            "bend_plane_normal": [float(v) for v in self.bend_plane_normal],
            "sample_spacing": float(self.sample_spacing),
        }

    @classmethod
    def from_dict(cls, d: dict) -> JShapePlan:
        try:
            return cls(
                entry_point=d["entry_point"],
                entry_direction=d["entry_direction"],
                straight_length=float(d["straight_length"]),
                arc_radius=float(d["arc_radius"]),
                arc_length=float(d["arc_length"]),
                bend_plane_normal=d["bend_plane_normal"],
                sample_spacing=float(d.get("sample_spacing", 0.5)),
            )
        except KeyError as exc:
            raise InvalidPlan(f"plan is missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class Centerline:
    positions: np.ndarray  # (N, 3) mm
    tangents: np.ndarray  # (N, 3) unit
    arclength: np.ndarray  # (N,) mm
    straight_length: float

    def __len__(self) -> int:
        return len(self.arclength)

    @property
    def straight_mask(self) -> np.ndarray:
        return self.arclength <= self.straight_length

    @property
    def arc_mask(self) -> np.ndarray:
        return self.arclength >= self.straight_length

    def polyline_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.positions, axis=0), axis=1)))

    def transformed(self, g: RigidTransform) -> Centerline:
        return Centerline(
            g.apply(self.positions), self.tangents @ g.rotation.T, self.arclength.copy(), self.straight_length
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "x", "y", "z", "tx", "ty", "tz"])
        for s, p, t in zip(self.arclength, self.positions, self.tangents):
            w.writerow([repr(float(s)), *(repr(float(v)) for v in p), *(repr(float(v)) for v in t)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, straight_length: float | None = None) -> Centerline:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["s", "x", "y", "z", "tx", "ty", "tz"]:
            raise ValidationError("centerline CSV needs header s,x,y,z,tx,ty,tz")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, 7)
        if straight_length is None:
            # the straight part is where the tangent still equals the first tangent
            same = np.all(np.abs(data[:, 4:] - data[0, 4:]) < 1e-12, axis=1)
            straight_length = float(data[np.flatnonzero(same)[-1], 0]) if len(data) else 0.0
        return cls(data[:, 1:4], data[:, 4:], data[:, 0], straight_length)


@dataclass(frozen=True)
class ExecutionProfile:
    straight_speed: float = 1.0  # mm/s
    curved_speed: float = 2.5  # mm/s
    drill_speed: float = 8250.0  # rpm
    retraction_speed: float = 2.5  # mm/s
    approach_buffer: float = 10.0  # mm of air between standoff and bone entry

    def __post_init__(self):
        for k in ("straight_speed", "curved_speed", "drill_speed", "retraction_speed"):
            if not getattr(self, k) > 0:
                raise ValidationError(f"{k} must be positive")
        if self.approach_buffer < 0:
            raise ValidationError("approach_buffer must be >= 0")

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> ExecutionProfile:
        return cls(**{k: float(v) for k, v in d.items()})


def _arc_point(plan: JShapePlan, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d, u, r = plan.entry_direction, plan.bend_direction, plan.arc_radius
    s, c = np.sin(phi)[:, None], np.cos(phi)[:, None]
    pos = plan.junction + r * s * d + r * (1.0 - c) * u
    tan = c * d + s * u
    return pos, tan


def plan_jshape(plan: JShapePlan) -> Centerline:
    """Sample the planned centreline at no more than ``sample_spacing`` apart."""
    plan.validate()
    ds = plan.sample_spacing
    n_straight = max(1, math.ceil(plan.straight_length / ds))
    s_straight = np.linspace(0.0, plan.straight_length, n_straight + 1)
    pos = [plan.entry_point + s_straight[:, None] * plan.entry_direction]
    tan = [np.tile(plan.entry_direction, (len(s_straight), 1))]
    arcl = [s_straight]
    if plan.arc_length > 0:
        n_arc = max(1, math.ceil(plan.arc_length / ds))
        s_arc = np.linspace(0.0, plan.arc_length, n_arc + 1)[1:]
        p, t = _arc_point(plan, s_arc / plan.arc_radius)
        pos.append(p)
        tan.append(t)
        arcl.append(plan.straight_length + s_arc)
    return Centerline(np.vstack(pos), np.vstack(tan), np.concatenate(arcl), plan.straight_length)


def sample_arc(plan: JShapePlan, spacing: float) -> np.ndarray:
    """Dense points along the curved segment only, endpoints included."""
    n = max(2, math.ceil(plan.arc_length / spacing) + 1)
    pos, _ = _arc_point(plan, np.linspace(0.0, plan.arc_length, n) / plan.arc_radius)
    return pos


@dataclass(frozen=True)
class Timeline:
    straight_duration: float
    curved_duration: float
    retraction_duration: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def execution_timeline(plan: JShapePlan, profile: ExecutionProfile) -> Timeline:
    straight = plan.straight_length / profile.straight_speed
    curved = plan.arc_length / profile.curved_speed
    retraction = (plan.straight_length + plan.arc_length) / profile.retraction_speed
    return Timeline(straight, curved, retraction, straight + curved + retraction)


@dataclass(frozen=True)
class SafetyCheck:
    min_margin: float  # mm; negative means the tunnel wall leaves the canal
    breach: float  # mm, max(0, -min_margin)
    passed: bool


# Medial pedicle perforations below this depth are considered safe.
BREACH_LIMIT = 4.0


def check_safety(
    centerline: Centerline,
    canal_point,
    canal_direction,
    canal_diameter: float,
    tunnel_diameter: float,
) -> SafetyCheck:
    """Clearance between the drilled tunnel and the pedicle canal wall.

    Only the straight samples are checked; the arc leaves the pedicle.
    """
    if not canal_diameter > tunnel_diameter:
        raise ValidationError("canal_diameter must exceed tunnel_diameter")
    a = np.asarray(canal_point, dtype=float)
    d = np.asarray(canal_direction, dtype=float)
    d = d / np.linalg.norm(d)
    rel = centerline.positions[centerline.straight_mask] - a
    offsets = np.linalg.norm(np.cross(rel, d), axis=1)
    half_gap = (canal_diameter - tunnel_diameter) / 2
    min_margin = float(np.min(half_gap - offsets))
    breach = max(0.0, -min_margin)
    return SafetyCheck(min_margin, breach, breach < BREACH_LIMIT)
