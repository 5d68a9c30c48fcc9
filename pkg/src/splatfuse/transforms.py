"""Similarity transforms (uniform scale, rotation, translation) and quaternion helpers.

Quaternions are scalar-first ``[w, x, y, z]`` everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise DegenerateGeometryError("cannot normalize zero or non-finite quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b (both scalar-first)."""
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


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Unit quaternion of a rotation matrix, canonical sign (w >= 0).

    Uses the eigenvector-of-K formulation, which is stable for all traces.
    """
    R = np.asarray(R, dtype=np.float64)
    Rxx, Ryx, Rzx, Rxy, Ryy, Rzy, Rxz, Ryz, Rzz = R.flat
    K = (
        np.array(
            [
                [Rxx - Ryy - Rzz, 0, 0, 0],
                [Ryx + Rxy, Ryy - Rxx - Rzz, 0, 0],
                [Rzx + Rxz, Rzy + Ryz, Rzz - Rxx - Ryy, 0],
                [Ryz - Rzy, Rzx - Rxz, Rxy - Ryx, Rxx + Ryy + Rzz],
            ]
        )
        / 3.0
    )
    eigvals, eigvecs = np.linalg.eigh(K)
    q = eigvecs[[3, 0, 1, 2], np.argmax(eigvals)]
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_rotation_angle_deg(a, b) -> float:
    """Angle in degrees of the relative rotation between two unit quaternions."""
    dot = abs(float(np.dot(quat_normalize(a), quat_normalize(b))))
    return float(np.degrees(2.0 * np.arccos(min(1.0, dot))))


@dataclass(frozen=True)
class Sim3Transform:
    """x' = scale * R(rotation) @ x + translation.

    scale is strictly positive; rotation is a unit quaternion (renormalized
    on construction, rejected if it deviates from unit norm by more than 1e-3).
    """

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise DegenerateGeometryError(f"scale must be positive, got {self.scale}")
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-3:
            raise DegenerateGeometryError(f"quaternion norm {n} too far from 1")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(t).all():
            raise DegenerateGeometryError("non-finite translation")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", q / n)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls(1.0, np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_scale(cls, scale: float) -> "Sim3Transform":
        return cls(scale, np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a batch (n, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation_matrix.T + self.translation

    def compose(self, other: "Sim3Transform") -> "Sim3Transform":
        """self after other: (self.compose(other))(x) == self(other(x))."""
        q = quat_normalize(quat_multiply(self.rotation, other.rotation))
        t = self.scale * self.rotation_matrix @ other.translation + self.translation
        return Sim3Transform(self.scale * other.scale, q, t)

    def inverse(self) -> "Sim3Transform":
        q_inv = quat_conjugate(self.rotation)
        R_inv = quat_to_matrix(q_inv)
        return Sim3Transform(
            1.0 / self.scale, q_inv, -(1.0 / self.scale) * R_inv @ self.translation
        )

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        M = np.eye(4)
        M[:3, :3] = self.scale * self.rotation_matrix
        M[:3, 3] = self.translation
        return M

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "scale": self.scale,
            "quaternion": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "matrix": self.matrix().tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Sim3Transform":
        return cls(
            float(d["scale"]),
            np.asarray(d["quaternion"], dtype=np.float64),
            np.asarray(d["translation"], dtype=np.float64),
        )
