"""Small rotation helpers shared by the scene, encoder and simulator.

Quaternions are stored scalar-last ``(x, y, z, w)``, matching
``scipy.spatial.transform.Rotation``. Euler angles are intrinsic XYZ.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_quat(yaw: float) -> np.ndarray:
    return np.array([0.0, 0.0, math.sin(0.5 * yaw), math.cos(0.5 * yaw)])


def quat_to_matrix(q) -> np.ndarray:
    return Rotation.from_quat(q).as_matrix()


def matrix_to_quat(m) -> np.ndarray:
    return Rotation.from_matrix(m).as_quat()


def euler_to_matrix(angles) -> np.ndarray:
    return Rotation.from_euler("XYZ", angles).as_matrix()


def matrix_to_euler(m) -> np.ndarray:
    return wrap_angle(Rotation.from_matrix(m).as_euler("XYZ"))


def quat_mul(a, b) -> np.ndarray:
    return (Rotation.from_quat(a) * Rotation.from_quat(b)).as_quat()


def angular_velocity(q_prev, q_next, dt: float) -> np.ndarray:
    """World-frame angular velocity taking ``q_prev`` to ``q_next`` in ``dt``."""
    rel = Rotation.from_quat(q_next) * Rotation.from_quat(q_prev).inv()
    return rel.as_rotvec() / dt


def rotate_towards(q_from, q_to, max_angle: float) -> np.ndarray:
    """Step from ``q_from`` toward ``q_to`` by at most ``max_angle`` radians."""
    r_from = Rotation.from_quat(q_from)
    rel = Rotation.from_quat(q_to) * r_from.inv()
    rv = rel.as_rotvec()
    ang = float(np.linalg.norm(rv))
    if ang <= max_angle:
        return np.asarray(q_to, dtype=float).copy()
    return (Rotation.from_rotvec(rv * (max_angle / ang)) * r_from).as_quat()


def heading_of(q, prev: float | None = None, tol: float = 1e-6) -> float:
    """Ground-plane heading of the body x-axis; falls back when vertical."""
    fwd = Rotation.from_quat(q).apply([1.0, 0.0, 0.0])
    if math.hypot(fwd[0], fwd[1]) < tol:
        return 0.0 if prev is None else prev
    return math.atan2(fwd[1], fwd[0])


def tan_norm(m: np.ndarray) -> np.ndarray:
    """6D rotation encoding: the rotated x (tangent) and z (normal) axes."""
    return np.concatenate([m[:, 0], m[:, 2]])
