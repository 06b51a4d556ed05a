"""Differentiable volume rendering of fields into RGB or latent images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .camera import CameraPose, RaySet, generate_rays, sample_stratified
from .tensor import Rng, Tensor


@dataclass
class RenderedImage:
    values: Tensor  # [h, w, C]
    acc: np.ndarray  # [h, w], 1 - final transmittance
    kind: str


class BackgroundModel:
    """White for RGB; a learnable per-channel vector for latents."""

    def __init__(self, kind: str, channels: int, init=None):
        self.kind = kind
        self.channels = channels
        if kind == "rgb":
            self.vector = Tensor(np.ones(channels))
        else:
            init = np.zeros(channels) if init is None else np.asarray(init).reshape(channels)
            self.vector = Tensor(init, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.vector] if self.vector.requires_grad else []


def composite_ray(sigma, channels, deltas, bg) -> Tensor:
    """Single-ray compositing: sigma [S], channels [S, C], deltas [S], bg [C] -> [C]."""
    sigma = sigma if isinstance(sigma, Tensor) else Tensor(sigma)
    channels = channels if isinstance(channels, Tensor) else Tensor(channels)
    deltas = deltas if isinstance(deltas, Tensor) else Tensor(deltas)
    S = sigma.shape[0]
    if S < 1:
        raise ValueError("need at least one sample")
    if np.any(np.asarray(deltas.data) <= 0):
        raise ValueError("deltas must be positive")
    out, _ = T.composite(sigma.reshape(1, S), channels.reshape(1, S, -1), deltas.reshape(1, S), bg)
    return out.reshape(-1)


class QueryCounter:
    """Wraps a field and counts queried points and rendered rays."""

    def __init__(self, field):
        self.field = field
        self.points = 0
        self.rays = 0

    def __getattr__(self, name):
        return getattr(self.field, name)

    def query(self, pts):
        self.points += len(pts)
        return self.field.query(pts)


def render_rays(field, rays: RaySet, S: int, bg: BackgroundModel, rng: Rng | None = None,
                jitter: bool = False) -> tuple[Tensor, np.ndarray]:
    """Composite every ray independently -> ([n, C] tensor, [n] accumulated opacity)."""
    if bg.channels != field.channels:
        raise ValueError(f"background has {bg.channels} channels, field {field.channels}")
    ds = sample_stratified(rays, S, rng, jitter)
    n = len(rays)
    pts = rays.origins[:, None, :] + rays.directions[:, None, :] * ds.t[:, :, None]
    sigma, ch = field.query(pts.reshape(-1, 3).astype(T.default_dtype()))
    if isinstance(field, QueryCounter):
        field.rays += n
    C = field.channels
    return T.composite(sigma.reshape(n, S), ch.reshape(n, S, C), Tensor(ds.deltas), bg.vector)


def render_image(field, pose: CameraPose, extent: tuple[int, int], S: int, bg: BackgroundModel,
                 rng: Rng | None = None, jitter: bool = False, scene_radius: float | None = None
                 ) -> RenderedImage:
    """Render an h x w image of ``field`` from ``pose`` (h x w rays, S samples each)."""
    radius = field.bounds if scene_radius is None else scene_radius
    rays = generate_rays(pose, extent, scene_radius=radius)
    vals, acc = render_rays(field, rays, S, bg, rng, jitter)
    h, w = extent
    return RenderedImage(vals.reshape(h, w, field.channels), acc.reshape(h, w), field.kind)


def render_batch(field, poses: list[CameraPose], extent: tuple[int, int], S: int,
                 bg: BackgroundModel, rng: Rng | None = None, jitter: bool = False) -> Tensor:
    """Render several poses of one field in a single graph; returns [B, C, h, w]."""
    rays = [generate_rays(p, extent, scene_radius=field.bounds) for p in poses]
    merged = RaySet(
        np.concatenate([r.origins for r in rays]),
        np.concatenate([r.directions for r in rays]),
        rays[0].near, rays[0].far,
        np.concatenate([r.pixels for r in rays]),
        extent,
    )
    if any(abs(r.near - merged.near) > 1e-6 or abs(r.far - merged.far) > 1e-6 for r in rays):
        # poses at different distances: render separately
        outs = [render_rays(field, r, S, bg, rng, jitter)[0] for r in rays]
        vals = T.concat(outs, axis=0)
    else:
        vals, _ = render_rays(field, merged, S, bg, rng, jitter)
    h, w = extent
    return T.transpose(vals.reshape(len(poses), h, w, field.channels), (0, 3, 1, 2))
