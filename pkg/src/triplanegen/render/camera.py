"""Pinhole cameras and ray generation.

Convention: +x right, +y down, +z forward in camera space; pixel-center
rays (u + 0.5). Poses are rigid world-from-camera 4x4 matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray  # (4, 4) rigid transform

    def __post_init__(self):
        self.cam_to_world = np.asarray(self.cam_to_world, dtype=np.float64)
        if self.cam_to_world.shape != (4, 4):
            raise ValueError(f"pose must be 4x4, got {self.cam_to_world.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        r = self.cam_to_world[:3, :3]
        if np.abs(r.T @ r - np.eye(3)).max() >= 1e-5:
            raise ValueError("rotation block is not orthonormal")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def position(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    def rays_for_pixels(self, px: np.ndarray, py: np.ndarray):
        """Pixel indices (column px, row py) -> world (origins, unit dirs)."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        d_cam = np.stack([
            (px + 0.5 - self.cx) / self.fx,
            (py + 0.5 - self.cy) / self.fy,
            np.ones_like(px),
        ], axis=-1)
        d_world = d_cam @ self.cam_to_world[:3, :3].T
        d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
        origins = np.broadcast_to(self.position, d_world.shape).copy()
        return origins, d_world

    def all_rays(self):
        """Rays for every pixel in row-major order: (H*W, 3) each."""
        py, px = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return self.rays_for_pixels(px.reshape(-1), py.reshape(-1))


def look_at(position: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-from-camera pose with +z looking from position toward target."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, upv)
    norm = np.linalg.norm(right)
    if norm < 1e-9:  # looking along up; pick an arbitrary perpendicular
        upv = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, upv)
        norm = np.linalg.norm(right)
    right /= norm
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = position
    return pose
