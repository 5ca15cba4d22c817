"""Pinhole cameras and posed images.

Axis convention: in camera space +x points right, +y up and the camera looks
down -z. Pixel ``(row, col) = (0, 0)`` is the top-left corner of the image and
rays pass through pixel centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True, eq=False)
class CameraPose:
    c2w: np.ndarray
    focal: float
    width: int
    height: int

    def __post_init__(self):
        c2w = np.array(self.c2w, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "c2w", c2w)
        if self.width <= 0 or self.height <= 0:
            raise ContractError("image size must be positive", "width/height")
        if not self.focal > 0:
            raise ContractError("focal length must be positive", "focal")
        rot = c2w[:3, :3]
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-4:
            raise ContractError("rotation block of c2w is not orthonormal", "c2w")
        if not np.array_equal(c2w[3], [0.0, 0.0, 0.0, 1.0]):
            raise ContractError("bottom row of c2w must be (0, 0, 0, 1)", "c2w")

    @property
    def position(self) -> np.ndarray:
        return self.c2w[:3, 3]


@dataclass(frozen=True, eq=False)
class PosedImage:
    pose: CameraPose
    pixels: np.ndarray  # (height, width, 3), linear RGB in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", px)
        if px.shape != (self.pose.height, self.pose.width, 3):
            raise ContractError(
                f"pixels have shape {px.shape}, pose expects {(self.pose.height, self.pose.width, 3)}",
                "pixels",
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ContractError("pixel values must lie in [0, 1]", "pixels")


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world matrix for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    z = -forward
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    c2w = np.eye(4)
    c2w[:3, 0], c2w[:3, 1], c2w[:3, 2], c2w[:3, 3] = x, y, z, eye
    return c2w


def camera_rays(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions for every pixel, in row-major pixel order."""
    rows, cols = np.meshgrid(np.arange(pose.height), np.arange(pose.width), indexing="ij")
    dirs_cam = np.stack(
        [
            (cols + 0.5 - 0.5 * pose.width) / pose.focal,
            -(rows + 0.5 - 0.5 * pose.height) / pose.focal,
            -np.ones_like(rows, dtype=np.float64),
        ],
        axis=-1,
    ).reshape(-1, 3)
    dirs = dirs_cam @ pose.c2w[:3, :3].T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.position, dirs.shape).copy()
    return origins, dirs
