"""Rigid transforms, rotation helpers and the coordinate-frame graph.

Conventions used throughout the package:

* lengths are millimetres, angles radians;
* frames are right-handed;
* ``T_a_b`` (stored in a :class:`FrameGraph` as edge ``(a, b)``) maps
  coordinates expressed in frame ``b`` into frame ``a``:
  ``p_a = R @ p_b + t``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy.spatial.transform import Rotation

from spinenav.errors import AmbiguousPath, NoPath, SingularMatrix, ValidationError

# Frobenius drift of R^T R from identity above which a rotation is re-projected.
DRIFT_TOLERANCE = 1e-12
# Inputs further than this from SO(3) are rejected rather than repaired.
ROTATION_REJECT_TOLERANCE = 1e-6
# Redundant frame-graph edges may disagree with the existing route by this much.
CONSISTENCY_TOLERANCE = 1e-6


def _drift(r: np.ndarray) -> float:
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def orthonormalize(m) -> np.ndarray:
    """Nearest proper rotation to ``m`` (polar factor via SVD).

    When ``det(m) < 0`` the direction of the smallest singular value is
    flipped so the result always has determinant +1.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got shape {m.shape}")
    u, s, vt = np.linalg.svd(m)
    if s[-1] < 1e-12:
        raise SingularMatrix(f"smallest singular value {s[-1]:.3e} < 1e-12")
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] *= -1
        r = u @ vt
    return r


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): ``p -> rotation @ p + translation`` (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValidationError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValidationError("transform contains non-finite values")
        drift = _drift(r)
        if drift > ROTATION_REJECT_TOLERANCE or np.linalg.det(r) < 0:
            raise ValidationError(f"not a proper rotation (drift {drift:.3e})")
        if drift > DRIFT_TOLERANCE:
            r = orthonormalize(r)
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, q, t) -> RigidTransform:
        """Build from a scalar-first unit quaternion ``(w, x, y, z)``."""
        q = np.asarray(q, dtype=float)
        return cls(Rotation.from_quat(q, scalar_first=True).as_matrix(), t)

    def quaternion(self) -> np.ndarray:
        """Scalar-first unit quaternion with ``w >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat(scalar_first=True)
        return -q if q[0] < 0 else q

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        """Transform a single point ``(3,)`` or an array of points ``(N, 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotation_error(self, other: RigidTransform) -> float:
        return float(np.linalg.norm(self.rotation - other.rotation))

    def translation_error(self, other: RigidTransform) -> float:
        return float(np.linalg.norm(self.translation - other.translation))

    def allclose(self, other: RigidTransform, atol: float = 1e-9) -> bool:
        return self.rotation_error(other) <= atol and self.translation_error(other) <= atol

    def to_dict(self) -> dict:
        return {
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RigidTransform:
        return cls(np.asarray(d["rotation"], dtype=float), np.asarray(d["translation"], dtype=float))

    def __repr__(self) -> str:
        rv = Rotation.from_matrix(self.rotation).as_rotvec()
        return f"RigidTransform(rotvec={np.round(rv, 6).tolist()}, translation={np.round(self.translation, 6).tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a ∘ b``: applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    return RigidTransform(r, t)


def apply(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        return np.eye(3)
    return Rotation.from_rotvec(axis / n * angle).as_matrix()


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator, max_angle: float | None = None) -> np.ndarray:
    """Uniform random rotation, or a uniform-axis rotation up to ``max_angle``."""
    if max_angle is None:
        return Rotation.random(random_state=rng).as_matrix()
    axis = rng.normal(size=3)
    return axis_angle(axis, rng.uniform(0.0, max_angle))


def random_transform(rng: np.random.Generator, translation_scale: float = 100.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-translation_scale, translation_scale, 3))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation whose +z column points from ``eye`` to ``target``."""
    z = np.asarray(target, dtype=float) - np.asarray(eye, dtype=float)
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=float), z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross([1.0, 0.0, 0.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


class FrameId(str, enum.Enum):
    OT = "OT"  # optical tracker
    S = "S"  # robot base / world
    CT = "CT"  # scan frame
    KUKA_EE = "KukaEE"  # manipulator end-effector
    TOOL = "Tool"  # tracked rigid body on the drill
    TIP = "Tip"  # drill tip

    def __str__(self) -> str:
        return self.value


class FrameGraph:
    """Immutable set of frame-to-frame transforms.

    Edge ``(a, b)`` holds ``T_a_b``. The reverse direction resolves to the
    inverse. Redundant edges are allowed only when they agree with the route
    already present.
    """

    def __init__(self, edges: Mapping[tuple[FrameId, FrameId], RigidTransform] | None = None):
        self._edges: dict[tuple[FrameId, FrameId], RigidTransform] = {}
        self._adj: dict[FrameId, list[tuple[FrameId, tuple[FrameId, FrameId], bool]]] = {}
        for (a, b), t in (edges or {}).items():
            self._add(FrameId(a), FrameId(b), t)

    def _add(self, a: FrameId, b: FrameId, t: RigidTransform) -> None:
        if a == b:
            if not t.allclose(RigidTransform.identity(), CONSISTENCY_TOLERANCE):
                raise AmbiguousPath(f"self-edge on {a} is not the identity")
            return
        if self.connected(a, b):
            existing = self.resolve(a, b)
            disagreement = max(existing.rotation_error(t), existing.translation_error(t))
            if disagreement > CONSISTENCY_TOLERANCE:
                raise AmbiguousPath(
                    f"edge {a}->{b} disagrees with existing route by {disagreement:.3e}"
                )
            if (a, b) in self._edges:
                return
        self._edges[(a, b)] = t
        self._adj.setdefault(a, []).append((b, (a, b), False))
        self._adj.setdefault(b, []).append((a, (a, b), True))

    def insert(self, a: FrameId, b: FrameId, t: RigidTransform) -> FrameGraph:
        """Return a new graph with ``T_a_b`` added."""
        g = FrameGraph(self._edges)
        g._add(FrameId(a), FrameId(b), t)
        return g

    @property
    def edges(self) -> Mapping[tuple[FrameId, FrameId], RigidTransform]:
        return MappingProxyType(self._edges)

    def frames(self) -> set[FrameId]:
        return set(self._adj)

    def _path(self, a: FrameId, b: FrameId) -> list[tuple[tuple[FrameId, FrameId], bool]] | None:
        if a == b:
            return []
        prev: dict[FrameId, tuple[FrameId, tuple[FrameId, FrameId], bool]] = {}
        seen = {a}
        queue = deque([a])
        while queue:
            node = queue.popleft()
            for nxt, key, inverted in self._adj.get(node, []):
                if nxt in seen:
                    continue
                seen.add(nxt)
                prev[nxt] = (node, key, inverted)
                if nxt == b:
                    steps = []
                    cur = b
                    while cur != a:
                        parent, k, inv = prev[cur]
                        steps.append((k, inv))
                        cur = parent
                    return steps[::-1]
                queue.append(nxt)
        return None

    def connected(self, a: FrameId, b: FrameId) -> bool:
        return self._path(FrameId(a), FrameId(b)) is not None

    def resolve(self, a: FrameId, b: FrameId) -> RigidTransform:
        """``T_a_b`` composed along the graph."""
        a, b = FrameId(a), FrameId(b)
        steps = self._path(a, b)
        if steps is None:
            raise NoPath(f"no path between {a} and {b}")
        out = RigidTransform.identity()
        for key, inverted in steps:
            t = self._edges[key]
            out = compose(out, t.inverse() if inverted else t)
        return out

    def to_list(self) -> list[dict]:
        return [
            {"parent": a.value, "child": b.value, **t.to_dict()} for (a, b), t in self._edges.items()
        ]

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> FrameGraph:
        edges = {}
        for item in items:
            edges[(FrameId(item["parent"]), FrameId(item["child"]))] = RigidTransform.from_dict(item)
        return cls(edges)
