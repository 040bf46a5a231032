"""Simultaneous hand-eye / robot-world calibration, ``A_i X = Z B_i``.

Closed-form two-step solution:

1. Rotations. ``R_Ai R_X = R_Z R_Bi`` is linear in the 18 entries of
   ``(R_X, R_Z)``. With column-major vectorisation,
   ``(I ⊗ R_Ai) vec(R_X) - (R_Bi^T ⊗ I) vec(R_Z) = 0``; the stacked system's
   right singular vector of the smallest singular value gives both rotations
   up to a common scale, which is removed by projecting each block onto SO(3).
2. Translations. With the rotations fixed,
   ``R_Ai t_X - t_Z = R_Z t_Bi - t_Ai`` is an ordinary ``3n x 6`` least-squares
   problem.

In the simulator ``A_i`` is the tracker frame seen from the tracked tool
(``T_Tool_OT``), ``B_i`` the robot base seen from the end-effector
(``T_KukaEE_S``), so ``X = T_OT_S`` and ``Z = T_Tool_KukaEE``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spinenav.errors import DegenerateMotion, InsufficientData, ValidationError
from spinenav.geometry import RigidTransform, orthonormalize

# Second-smallest singular value of the rotation system below this means the
# null space is not one-dimensional (rotations about a single common axis).
DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class HandEyeResult:
    x: RigidTransform
    z: RigidTransform
    rotation_residual: float  # mean Frobenius norm of R_Ai R_X - R_Z R_Bi
    translation_residual: float  # RMS over pairs of |A_i X - Z B_i| translation part (mm)
    singular_values: tuple[float, float]  # smallest two of the rotation system

    def to_dict(self) -> dict:
        return {
            "x": self.x.to_dict(),
            "z": self.z.to_dict(),
            "rotation_residual": float(self.rotation_residual),
            "translation_residual": float(self.translation_residual),
            "singular_values": [float(v) for v in self.singular_values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> HandEyeResult:
        return cls(
            x=RigidTransform.from_dict(d["x"]),
            z=RigidTransform.from_dict(d["z"]),
            rotation_residual=float(d["rotation_residual"]),
            translation_residual=float(d["translation_residual"]),
            singular_values=tuple(float(v) for v in d["singular_values"]),
        )


def rotation_system(a_rots: Sequence[np.ndarray], b_rots: Sequence[np.ndarray]) -> np.ndarray:
    eye = np.eye(3)
    blocks = [np.hstack([np.kron(eye, ra), -np.kron(rb.T, eye)]) for ra, rb in zip(a_rots, b_rots)]
    return np.vstack(blocks)


def handeye_residuals(
    a_poses: Sequence[RigidTransform],
    b_poses: Sequence[RigidTransform],
    x: RigidTransform,
    z: RigidTransform,
) -> tuple[float, float]:
    rot = []
    trans = []
    for a, b in zip(a_poses, b_poses):
        lhs = a @ x
        rhs = z @ b
        rot.append(np.linalg.norm(lhs.rotation - rhs.rotation))
        trans.append(np.sum((lhs.translation - rhs.translation) ** 2))
    return float(np.mean(rot)), float(np.sqrt(np.mean(trans)))


def solve_handeye(a_poses: Sequence[RigidTransform], b_poses: Sequence[RigidTransform]) -> HandEyeResult:
    a_poses, b_poses = list(a_poses), list(b_poses)
    if len(a_poses) != len(b_poses):
        raise ValidationError(f"pose streams differ in length ({len(a_poses)} vs {len(b_poses)})")
    n = len(a_poses)
    if n < 3:
        raise InsufficientData(f"hand-eye calibration needs at least 3 pose pairs, got {n}")

    m = rotation_system([a.rotation for a in a_poses], [b.rotation for b in b_poses])
    _, s, vt = np.linalg.svd(m)
    if s[-2] < DEGENERACY_THRESHOLD:
        raise DegenerateMotion(
            f"rotation axes do not span two directions (second-smallest singular value {s[-2]:.3e})"
        )
    v = vt[-1]
    rx = v[:9].reshape(3, 3, order="F")
    rz = v[9:].reshape(3, 3, order="F")
    if np.linalg.det(rx) < 0:
        rx, rz = -rx, -rz
    rx = orthonormalize(rx)
    rz = orthonormalize(rz)

    c = np.zeros((3 * n, 6))
    d = np.zeros(3 * n)
    for i, (a, b) in enumerate(zip(a_poses, b_poses)):
        c[3 * i : 3 * i + 3, :3] = a.rotation
        c[3 * i : 3 * i + 3, 3:] = -np.eye(3)
        d[3 * i : 3 * i + 3] = rz @ b.translation - a.translation
    sol, *_ = np.linalg.lstsq(c, d, rcond=None)

    x = RigidTransform(rx, sol[:3])
    z = RigidTransform(rz, sol[3:])
    rot_res, trans_res = handeye_residuals(a_poses, b_poses, x, z)
    return HandEyeResult(x, z, rot_res, trans_res, (float(s[-2]), float(s[-1])))
