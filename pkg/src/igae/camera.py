"""Pinhole cameras, per-pixel rays and stratified depth samples.

Camera frame: +x right, +y down, +z forward. ``rotation`` maps camera axes to
world axes (its columns are the camera axes in world coordinates) and world
up is +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Rng


@dataclass
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray
    fov_y: float
    height: int
    width: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def matrix(self) -> np.ndarray:
        """4x4 camera-to-world matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m, fov_y: float, height: int, width: int) -> "CameraPose":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3], fov_y, height, width)

    def check(self, tol: float = 1e-6):
        R = self.rotation
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(self.translation))):
            raise ValueError("camera pose contains non-finite values")
        if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1) > tol:
            raise ValueError("camera rotation is not a proper orthonormal matrix")


@dataclass
class RaySet:
    origins: np.ndarray  # [n, 3]
    directions: np.ndarray  # [n, 3], unit
    near: float
    far: float
    pixels: np.ndarray  # [n, 2] (row, col)
    extent: tuple[int, int]

    def __len__(self) -> int:
        return len(self.origins)


@dataclass
class DepthSamples:
    t: np.ndarray  # [n, S]
    deltas: np.ndarray  # [n, S]


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


def focal_length(fov_y: float, h: int) -> float:
    return 0.5 * h / np.tan(0.5 * fov_y)


def generate_rays(pose: CameraPose, extent: tuple[int, int], scene_radius: float = 1.0,
                  eps: float = 1e-3) -> RaySet:
    """One ray per pixel centre of an h x w grid spanning the pose's field of view."""
    h, w = int(extent[0]), int(extent[1])
    if h < 1 or w < 1:
        raise ValueError(f"ray extent must be positive, got {extent}")
    pose.check()
    f = focal_length(pose.fov_y, h)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    x = (cols + 0.5 - 0.5 * w) / f
    y = (rows + 0.5 - 0.5 * h) / f
    d_cam = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
    d = d_cam @ pose.rotation.T
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(pose.translation, d.shape).copy()
    dist = float(np.linalg.norm(pose.translation))
    near = max(dist - scene_radius - eps, eps)
    far = dist + scene_radius + eps
    pix = np.stack([rows.ravel(), cols.ravel()], axis=1)
    return RaySet(o, d, near, far, pix, (h, w))


def sample_stratified(rays: RaySet, S: int, rng: Rng | None = None, jitter: bool = False) -> DepthSamples:
    """One depth per equal-width bin of [near, far]; bin midpoints unless jittered."""
    if S < 2:
        raise ValueError(f"need at least 2 samples per ray, got {S}")
    n = len(rays)
    width = (rays.far - rays.near) / S
    lo = rays.near + width * np.arange(S)
    if jitter:
        if rng is None:
            raise ValueError("jittered sampling needs an Rng")
        u = rng.uniform(size=(n, S))
    else:
        u = np.full((n, S), 0.5)
    t = lo[None, :] + width * u
    deltas = np.empty_like(t)
    deltas[:, :-1] = t[:, 1:] - t[:, :-1]
    deltas[:, -1] = rays.far - t[:, -1]
    return DepthSamples(t, deltas)


def sample_poses_on_sphere(count: int, radius: float, rng: Rng, fov_y: float = np.deg2rad(40.0),
                           extent: tuple[int, int] = (64, 64),
                           elev_range: tuple[float, float] = (-30.0, 85.0)) -> list[CameraPose]:
    """Cameras on a sphere looking at the origin; azimuth uniform, area-uniform elevation band."""
    if count < 1 or radius <= 0:
        raise ValueError("count must be >= 1 and radius > 0")
    az = rng.uniform(0.0, 2 * np.pi, size=count)
    lo, hi = np.sin(np.deg2rad(elev_range[0])), np.sin(np.deg2rad(elev_range[1]))
    el = np.arcsin(rng.uniform(lo, hi, size=count))
    poses = []
    for a, e in zip(az, el):
        eye = radius * np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
        poses.append(CameraPose(look_at(eye), eye, fov_y, extent[0], extent[1]))
    return poses


def heldout_mask(count: int, every: int = 8) -> np.ndarray:
    """Every ``every``-th view (starting at 0) is held out."""
    return (np.arange(count) % every) == 0
