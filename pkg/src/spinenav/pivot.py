"""Pivot calibration of the drill tip.

With the tip resting in a fixed divot, every end-effector pose
``(R_i, p_i)`` (in the robot base frame) satisfies
``R_i @ x_tip + p_i = x_pivot``. Stacking the poses gives the linear system

    [R_i  -I] [x_tip; x_pivot] = -p_i

which is solved in the least-squares sense through the SVD of the stacked
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spinenav.errors import DegenerateMotion, InsufficientData
from spinenav.geometry import RigidTransform

MAX_CONDITION_NUMBER = 1e6


@dataclass(frozen=True)
class PivotResult:
    x_tip: np.ndarray  # tip in the end-effector frame (mm)
    x_pivot: np.ndarray  # pivot point in the base frame (mm)
    residual_rms: float
    condition_number: float
    n_poses: int

    def to_dict(self) -> dict:
        return {
            "x_tip": [float(v) for v in self.x_tip],
            "x_pivot": [float(v) for v in self.x_pivot],
            "residual_rms": float(self.residual_rms),
            "condition_number": float(self.condition_number),
            "n_poses": int(self.n_poses),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PivotResult:
        return cls(
            x_tip=np.asarray(d["x_tip"], dtype=float),
            x_pivot=np.asarray(d["x_pivot"], dtype=float),
            residual_rms=float(d["residual_rms"]),
            condition_number=float(d["condition_number"]),
            n_poses=int(d["n_poses"]),
        )


def pivot_system(poses: Sequence[RigidTransform]) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``3n x 6`` matrix and right-hand side."""
    n = len(poses)
    a = np.zeros((3 * n, 6))
    b = np.zeros(3 * n)
    for i, pose in enumerate(poses):
        a[3 * i : 3 * i + 3, :3] = pose.rotation
        a[3 * i : 3 * i + 3, 3:] = -np.eye(3)
        b[3 * i : 3 * i + 3] = -pose.translation
    return a, b


def solve_pivot(poses: Sequence[RigidTransform]) -> PivotResult:
    poses = list(poses)
    if len(poses) < 3:
        raise InsufficientData(f"pivot calibration needs at least 3 poses, got {len(poses)}")
    a, b = pivot_system(poses)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    if not cond <= MAX_CONDITION_NUMBER:
        raise DegenerateMotion(
            f"pivot poses lack rotational diversity (condition number {cond:.3e} > {MAX_CONDITION_NUMBER:.0e})"
        )
    x = vt.T @ ((u.T @ b) / s)
    residual = a @ x - b
    return PivotResult(
        x_tip=x[:3],
        x_pivot=x[3:],
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        condition_number=cond,
        n_poses=len(poses),
    )
