"""Procedural multi-view datasets: analytically ray-traced ellipsoids and
boxes with exact silhouettes, Lambert shading under a fixed world light
(view-independent, so all views are photometrically consistent), posed
cameras on a ring, and ground-truth surface point clouds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..autodiff import RandomSource
from ..render.camera import Camera, look_at
from ..render.volume import PosedView

LIGHT_DIR = np.array([0.5, -0.8, 0.6]) / np.linalg.norm([0.5, -0.8, 0.6])
AMBIENT = 0.35
DIFFUSE = 0.65

CAMERA_RADIUS = 4.0
FOV_DEGREES = 40.0


@dataclass
class Ellipsoid:
    center: np.ndarray  # (3,)
    radii: np.ndarray  # (3,) semi-axes
    albedo: np.ndarray  # (3,) in [0,1]

    kind = "ellipsoid"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        """First hit along each ray: (t, hit, normals)."""
        o = (origins - self.center) / self.radii
        d = dirs / self.radii
        a = (d * d).sum(axis=1)
        b = (o * d).sum(axis=1)
        c = (o * o).sum(axis=1) - 1.0
        disc = b * b - a * c
        hit = disc >= 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = (-b - sq) / a
        hit &= t > 1e-9
        pts = origins + t[:, None] * dirs
        normals = (pts - self.center) / (self.radii**2)
        norm = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = np.divide(normals, norm, out=np.zeros_like(normals), where=norm > 0)
        return t, hit, normals

    def sample_surface(self, k: int, rng: RandomSource) -> np.ndarray:
        """Area-uniform points via rejection on the sphere parametrization."""
        rx, ry, rz = self.radii
        w_max = max(ry * rz, rx * rz, rx * ry)
        out = []
        need = k
        while need > 0:
            n = max(need * 2, 64)
            u = rng.normal((n, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            w = np.sqrt((ry * rz * u[:, 0]) ** 2 + (rx * rz * u[:, 1]) ** 2
                        + (rx * ry * u[:, 2]) ** 2) / w_max
            keep = rng.uniform((n,)) < w
            pts = self.center + self.radii * u[keep]
            out.append(pts[:need])
            need -= len(pts[:need])
        return np.concatenate(out, axis=0)

    def params(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(),
                "radii": self.radii.tolist(), "albedo": self.albedo.tolist()}


@dataclass
class BoxShape:
    center: np.ndarray
    half_extents: np.ndarray  # (3,)
    albedo: np.ndarray

    kind = "box"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        lo = self.center - self.half_extents
        hi = self.center + self.half_extents
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo[None, :] - origins) * inv
            t2 = (hi[None, :] - origins) * inv
        tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
        parallel_outside = (np.abs(dirs) < 1e-12) & ((origins < lo) | (origins > hi))
        tmin = np.where(parallel_outside, np.inf, tmin)
        axis = tmin.argmax(axis=1)
        t_near = tmin.max(axis=1)
        t_far = tmax.min(axis=1)
        hit = (t_far >= t_near) & (t_near > 1e-9)
        rows = np.arange(len(dirs))
        normals = np.zeros_like(dirs)
        normals[rows, axis] = -np.sign(dirs[rows, axis])
        return t_near, hit, normals

    def sample_surface(self, k: int, rng: RandomSource) -> np.ndarray:
        hx, hy, hz = self.half_extents
        areas = np.array([hy * hz, hx * hz, hx * hy]) * 4.0  # per axis-pair, x2 faces
        probs = np.repeat(areas, 2)
        probs = probs / probs.sum()
        counts = rng.multinomial(k, probs)
        pts = []
        for face, cnt in enumerate(counts):
            if cnt == 0:
                continue
            axis, sign = face // 2, 1.0 if face % 2 == 0 else -1.0
            p = rng.uniform((cnt, 3), -1.0, 1.0) * self.half_extents
            p[:, axis] = sign * self.half_extents[axis]
            pts.append(p + self.center)
        return np.concatenate(pts, axis=0)

    def params(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(),
                "half_extents": self.half_extents.tolist(), "albedo": self.albedo.tolist()}


def shape_from_params(params: dict):
    if params["kind"] == "ellipsoid":
        return Ellipsoid(np.array(params["center"]), np.array(params["radii"]),
                         np.array(params["albedo"]))
    if params["kind"] == "box":
        return BoxShape(np.array(params["center"]), np.array(params["half_extents"]),
                        np.array(params["albedo"]))
    raise ValueError(f"unknown shape kind {params['kind']!r}")


def ring_cameras(n_views: int, image_size: int = 64, radius: float = CAMERA_RADIUS,
                 fov_deg: float = FOV_DEGREES, phase: float = 0.0) -> list[Camera]:
    """Cameras on a ring with alternating elevation, all looking at the origin.

    phase offsets every azimuth (radians); held-out rings use a nonzero
    phase so they never coincide with training cameras.
    """
    focal = image_size / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
    cams = []
    for i in range(n_views):
        azim = 2.0 * math.pi * i / n_views + phase
        elev = math.radians((-25.0, 5.0, 35.0)[i % 3])
        pos = radius * np.array([
            math.cos(azim) * math.cos(elev),
            math.sin(azim) * math.cos(elev),
            math.sin(elev),
        ])
        pose = look_at(pos, np.zeros(3))
        cams.append(Camera(focal, focal, image_size / 2.0, image_size / 2.0,
                           image_size, image_size, pose))
    return cams


def render_shape(shape, cam: Camera) -> np.ndarray:
    """Exact RGBA float render, shading view-independent: (H, W, 4) in [0,1]."""
    origins, dirs = cam.all_rays()
    t, hit, normals = shape.intersect(origins, dirs)
    shade = AMBIENT + DIFFUSE * np.maximum(0.0, normals @ LIGHT_DIR)
    rgb = shape.albedo[None, :] * shade[:, None]
    rgb[~hit] = 0.0
    alpha = hit.astype(np.float64)
    img = np.concatenate([rgb, alpha[:, None]], axis=1)
    return img.reshape(cam.height, cam.width, 4)


def render_views(shape, cameras: list[Camera]) -> list[PosedView]:
    views = []
    for cam in cameras:
        img = render_shape(shape, cam)
        views.append(PosedView(camera=cam, rgb=img[:, :, :3] * img[:, :, 3:4],
                               mask=img[:, :, 3]))
    return views


# -- family specifications ----------------------------------------------


def random_shape(family: str, rng: RandomSource):
    """Draw one object. Ellipsoid axes vary so shapes differ after point-cloud
    normalization; 'spheres' draws loosely spherical ellipsoids."""
    albedo = rng.uniform((3,), 0.25, 0.95)
    if family == "spheres":
        base = float(rng.uniform((), 0.45, 0.8))
        radii = base * rng.uniform((3,), 0.7, 1.3)
        radii = np.clip(radii, 0.3, 0.9)
        return Ellipsoid(np.zeros(3), radii, albedo), 0
    if family == "boxes":
        half = rng.uniform((3,), 0.25, 0.7)
        return BoxShape(np.zeros(3), half, albedo), 1
    raise ValueError(f"unknown family {family!r}")


def exact_sphere(radius: float, albedo=(0.8, 0.3, 0.3)) -> Ellipsoid:
    return Ellipsoid(np.zeros(3), np.full(3, float(radius)), np.asarray(albedo, dtype=np.float64))


# -- disk layout ----------------------------------------------------------


def save_view(dir_path: Path, index: int, view: PosedView) -> None:
    """RGBA 8-bit PNG (alpha = mask) + JSON with row-major intrinsics/pose."""
    rgba = np.zeros((view.camera.height, view.camera.width, 4), dtype=np.uint8)
    straight = np.divide(view.rgb, view.mask[:, :, None],
                         out=np.zeros_like(view.rgb), where=view.mask[:, :, None] > 0)
    rgba[:, :, :3] = np.clip(np.round(straight * 255.0), 0, 255).astype(np.uint8)
    rgba[:, :, 3] = np.clip(np.round(view.mask * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(rgba, mode="RGBA").save(dir_path / f"view_{index:03d}.png")
    record = {
        "intrinsics": view.camera.intrinsics.reshape(-1).tolist(),
        "world_from_camera": view.camera.cam_to_world.reshape(-1).tolist(),
        "width": view.camera.width,
        "height": view.camera.height,
    }
    (dir_path / f"view_{index:03d}.json").write_text(json.dumps(record, indent=1))


def synth_dataset(out_dir, family: str, count: int, seed: int,
                  n_views: int = 16, image_size: int = 64,
                  surface_points: int = 4096) -> dict:
    """Write a dataset: per-object view renders, poses, ground-truth surface
    points (.xyz text), and a manifest. Returns the manifest dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RandomSource(seed)
    cameras = ring_cameras(n_views, image_size=image_size)
    if family == "mixed":
        families = ["spheres" if i % 2 == 0 else "boxes" for i in range(count)]
    elif family in ("spheres", "boxes"):
        families = [family] * count
    else:
        raise ValueError(f"unknown family {family!r}")
    objects = []
    for i, fam in enumerate(families):
        orng = rng.child(f"object{i}")
        shape, label = random_shape(fam, orng)
        obj_id = f"{fam[:-1]}_{i:04d}"
        obj_dir = out_dir / obj_id
        obj_dir.mkdir(exist_ok=True)
        views = render_views(shape, cameras)
        for vi, view in enumerate(views):
            save_view(obj_dir, vi, view)
        pts = shape.sample_surface(surface_points, orng.child("surface"))
        np.savetxt(obj_dir / "surface.xyz", pts, fmt="%.6f")
        objects.append({
            "id": obj_id,
            "class_label": label,
            "shape": shape.params(),
            "views": [f"{obj_id}/view_{vi:03d}.png" for vi in range(n_views)],
            "surface": f"{obj_id}/surface.xyz",
        })
    manifest = {
        "family": family,
        "seed": seed,
        "image_size": image_size,
        "n_views": n_views,
        "objects": objects,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
