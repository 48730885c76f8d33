"""Pose and unit-vector arithmetic shared by every other module.

Quaternions are (w, x, y, z), right-handed. Everything here is pure and
operates on immutable values, so it is safe to call from anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-6


class DegenerateVectorError(ValueError):
    """Raised when a zero-norm vector cannot be normalized."""


class DimensionMismatchError(ValueError):
    """Raised when two embeddings of different width are combined."""


def normalize(v) -> np.ndarray:
    """Return v / ||v||_2. Raises DegenerateVectorError on zero norm."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not np.isfinite(n):
        raise DegenerateVectorError(f"cannot normalize vector with norm {n}")
    return v / n


def cosine_sim(a, b) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape {a.shape} vs {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


@dataclass(frozen=True)
class Pose:
    """Position (meters) plus unit quaternion (w, x, y, z)."""

    t: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if t.shape != (3,) or q.shape != (4,):
            raise ValueError(f"bad pose shapes t={t.shape} q={q.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q))):
            raise ValueError("pose components must be finite")
        if abs(np.linalg.norm(q) - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {np.linalg.norm(q)} not unit")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        self.t.flags.writeable = False
        self.q.flags.writeable = False

    def as_vector(self) -> np.ndarray:
        """[t_x, t_y, t_z, q_w, q_x, q_y, q_z], the network input order."""
        return np.concatenate([self.t, self.q])

    @staticmethod
    def from_vector(v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return Pose(t=v[:3], q=normalize(v[3:7]))

    def forward_axis(self) -> np.ndarray:
        """Unit camera-forward direction: the rotated +x axis."""
        w, x, y, z = self.q
        return np.array(
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y + w * z),
                2.0 * (x * z - w * y),
            ]
        )


def pose_distance(a: Pose, b: Pose) -> float:
    """Euclidean distance between positions; orientation is ignored."""
    return float(np.linalg.norm(a.t - b.t))


def quat_abs_dot(q1, q2) -> float:
    """|q1 . q2| in [0, 1]; absolute because q and -q are the same rotation."""
    d = abs(float(np.asarray(q1, dtype=float) @ np.asarray(q2, dtype=float)))
    return min(d, 1.0)


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a * b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def yaw_quat(yaw: float) -> np.ndarray:
    """Unit quaternion for a rotation of `yaw` radians about +z."""
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


def perturb_pose(x: Pose, sigma_pos: float, sigma_yaw: float, rng: np.random.Generator) -> Pose:
    """Gaussian ground-plane offset plus a random yaw rotation composed onto q.

    Traversable poses live on the ground, so only x and y are jittered;
    height is preserved.
    """
    if sigma_pos < 0 or sigma_yaw < 0:
        raise ValueError("perturbation sigmas must be non-negative")
    t = x.t + sigma_pos * np.array([rng.standard_normal(), rng.standard_normal(), 0.0])
    yaw = sigma_yaw * rng.standard_normal()
    q = normalize(quat_mul(yaw_quat(yaw), x.q))
    return Pose(t=t, q=q)
