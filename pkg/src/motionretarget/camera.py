"""Pinhole camera: intrinsics, optional rigid pose, projection and its Jacobian."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_DEPTH = 1e-6


class BehindCameraError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    # world -> camera: x_cam = R @ x_world + t
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise ValueError("camera R must be a rotation matrix")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))

    @classmethod
    def from_dict(cls, d: dict) -> CameraIntrinsics:
        pose = d.get("pose") or {}
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            R=pose.get("R", np.eye(3)), t=pose.get("t", np.zeros(3)),
        )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("fx", "fy", "cx", "cy", "width", "height")}
        if not (np.array_equal(self.R, np.eye(3)) and not self.t.any()):
            d["pose"] = {"R": self.R.tolist(), "t": self.t.tolist()}
        return d

    def to_camera(self, p_world):
        return np.asarray(p_world, dtype=float) @ self.R.T + self.t

    def to_world(self, p_cam):
        return (np.asarray(p_cam, dtype=float) - self.t) @ self.R


def load_camera(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(json.loads(Path(path).read_text()))


def project(p, K: CameraIntrinsics):
    """Project camera-frame points (..., 3) to pixels (..., 2)."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise BehindCameraError("point at or behind the camera plane")
    return np.stack([K.fx * p[..., 0] / z + K.cx, K.fy * p[..., 1] / z + K.cy], axis=-1)


def project_jacobian(p, K: CameraIntrinsics):
    """d pixel / d p for camera-frame points, shape (..., 2, 3)."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise BehindCameraError("point at or behind the camera plane")
    J = np.zeros(p.shape[:-1] + (2, 3))
    J[..., 0, 0] = K.fx / z
    J[..., 0, 2] = -K.fx * x / z**2
    J[..., 1, 1] = K.fy / z
    J[..., 1, 2] = -K.fy * y / z**2
    return J


def project_world(p_world, K: CameraIntrinsics):
    return project(K.to_camera(p_world), K)


def backproject(pixel, depth, K: CameraIntrinsics):
    """Camera-frame 3D point at the given depth along a pixel's ray."""
    pixel = np.asarray(pixel, dtype=float)
    depth = np.asarray(depth, dtype=float)
    x = (pixel[..., 0] - K.cx) / K.fx * depth
    y = (pixel[..., 1] - K.cy) / K.fy * depth
    return np.stack([x, y, depth], axis=-1)
