"""Procedural scenes: Lambertian spheres ray-traced in closed form.

Cameras sit evenly spaced on a ring around the origin (world +y is up) and
look at the origin, using the axis convention of :mod:`fednerf.nerf.camera`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import seeding
from ..errors import ContractError
from ..nerf import CameraPose, PosedImage, camera_rays, look_at
from .dataset import write_dataset


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: tuple[float, float, float]


def _default_spheres():
    return [
        Sphere((0.0, 0.0, 0.0), 0.6, (0.9, 0.35, 0.2)),
        Sphere((0.75, 0.25, 0.35), 0.35, (0.25, 0.8, 0.3)),
        Sphere((-0.55, -0.2, -0.55), 0.4, (0.25, 0.4, 0.95)),
        Sphere((-0.2, 0.55, 0.6), 0.25, (0.95, 0.9, 0.3)),
    ]


@dataclass(frozen=True)
class SceneSpec:
    spheres: list = field(default_factory=_default_spheres)
    light_dir: tuple[float, float, float] = (0.4, 0.8, 0.45)
    ambient: float = 0.15
    ring_radius: float = 4.0
    elevations_deg: tuple = (20.0,)
    n_train_views_total: int = 16
    n_test_views: int = 1
    width: int = 32
    height: int = 32
    fov_deg: float = 40.0
    jitter_azimuth: bool = False

    def __post_init__(self):
        spheres = [s if isinstance(s, Sphere) else Sphere(tuple(s["center"]), float(s["radius"]),
                                                          tuple(s["albedo"]))
                   for s in self.spheres]
        object.__setattr__(self, "spheres", spheres)
        light = np.asarray(self.light_dir, dtype=np.float64)
        object.__setattr__(self, "light_dir", tuple(light / np.linalg.norm(light)))
        object.__setattr__(self, "elevations_deg", tuple(self.elevations_deg))
        for s in spheres:
            if not s.radius > 0:
                raise ContractError(f"sphere at {s.center} has radius {s.radius}", "radius")
        extent = max(np.linalg.norm(s.center) + s.radius for s in spheres) if spheres else 0.0
        if extent >= self.ring_radius:
            raise ContractError(f"camera ring radius {self.ring_radius} does not enclose the scene "
                                f"(extent {extent:.3f})", "ring_radius")
        if self.n_train_views_total < 1 or self.n_test_views < 0:
            raise ContractError("need at least one training view", "n_train_views_total")

    @property
    def n_views(self) -> int:
        return self.n_train_views_total + self.n_test_views

    @property
    def focal(self) -> float:
        return 0.5 * self.width / np.tan(0.5 * np.radians(self.fov_deg))

    def to_json(self) -> dict:
        d = asdict(self)
        d["spheres"] = [asdict(s) for s in self.spheres]
        return d

    @classmethod
    def load(cls, path) -> "SceneSpec":
        raw = json.loads(Path(path).read_text())
        return cls(**raw)


def ring_poses(spec: SceneSpec, seed: int = 0) -> list[CameraPose]:
    offset = 0.0
    if spec.jitter_azimuth:
        offset = seeding.stream(seed, seeding.INIT, 0, 0).uniform(0, 2 * np.pi / spec.n_views)
    poses = []
    for i in range(spec.n_views):
        az = offset + 2 * np.pi * i / spec.n_views
        el = np.radians(spec.elevations_deg[i % len(spec.elevations_deg)])
        eye = spec.ring_radius * np.array([np.cos(el) * np.cos(az), np.sin(el), np.cos(el) * np.sin(az)])
        poses.append(CameraPose(look_at(eye), spec.focal, spec.width, spec.height))
    return poses


def trace(spec: SceneSpec, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Shade rays against the spheres; misses are black."""
    n = len(origins)
    best_t = np.full(n, np.inf)
    color = np.zeros((n, 3))
    light = np.asarray(spec.light_dir)
    for s in spec.spheres:
        c = np.asarray(s.center)
        oc = origins - c
        b = np.einsum("ij,ij->i", oc, dirs)
        disc = b * b - (np.einsum("ij,ij->i", oc, oc) - s.radius ** 2)
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t = np.where(-b - sq > 1e-9, -b - sq, -b + sq)
        closer = hit & (t > 1e-9) & (t < best_t)
        if not closer.any():
            continue
        points = origins[closer] + t[closer, None] * dirs[closer]
        normals = (points - c) / s.radius
        lambert = np.clip(normals @ light, 0.0, None)
        shade = spec.ambient + (1.0 - spec.ambient) * lambert
        color[closer] = np.asarray(s.albedo) * shade[:, None]
        best_t[closer] = t[closer]
    return np.clip(color, 0.0, 1.0)


def render_view(spec: SceneSpec, pose: CameraPose) -> PosedImage:
    origins, dirs = camera_rays(pose)
    return PosedImage(pose, trace(spec, origins, dirs).reshape(pose.height, pose.width, 3))


def generate_scene(spec: SceneSpec, out_dir, seed: int = 0) -> Path:
    """Render every ring view and write PPM images plus ``transforms.json``."""
    images = [render_view(spec, pose) for pose in ring_poses(spec, seed)]
    return write_dataset(images, out_dir)
