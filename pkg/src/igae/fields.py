"""Scene fields mapping 3-D points to (density, channels).

Two backends: a Tri-Plane (three axis-aligned feature planes decoded by a small
MLP, which may be shared between scenes) and a positional-encoding MLP.
Channels are RGB (sigmoid head) or autoencoder latents (identity head).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Rng, Tensor

KINDS = ("rgb", "latent")

# (first axis, second axis) projected onto each plane
PLANE_AXES = ((0, 1), (0, 2), (1, 2))
PLANE_NAMES = ("xy", "xz", "yz")


class Mlp:
    """Stack of linear layers with SiLU between them (none after the last)."""

    def __init__(self, sizes: list[int], rng: Rng, zero_last: bool = False):
        self.sizes = list(sizes)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            if last and zero_last:
                W = T.zeros((a, b), requires_grad=True)
            else:
                W = T.kaiming_uniform((a, b), a, rng)
            self.weights.append(W)
            self.biases.append(T.zeros((b,), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = T.linear(x, W, b)
            if i < n - 1:
                x = T.silu(x)
        return x

    def parameters(self) -> list[Tensor]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        named = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}.{i}.weight"] = W
            named[f"{prefix}.{i}.bias"] = b
        return named


def _heads(raw: Tensor, kind: str, mask: np.ndarray | None) -> tuple[Tensor, Tensor]:
    n, width = raw.shape
    sigma = T.softplus(raw[:, 0])
    ch = raw[:, 1:width]
    ch = T.sigmoid(ch) if kind == "rgb" else ch
    if mask is not None and not mask.all():
        m = mask.astype(raw.dtype)
        sigma = T.mul(sigma, T.Tensor(m, dtype=raw.dtype))
        ch = T.mul(ch, T.Tensor(np.repeat(m[:, None], width - 1, axis=1), dtype=raw.dtype))
    return sigma, ch


def _as_points(pts) -> Tensor:
    pts = pts if isinstance(pts, Tensor) else Tensor(pts)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be [n, 3], got {pts.shape}")
    if not np.all(np.isfinite(pts.data)):
        raise ValueError("non-finite query points")
    return pts


class FeatureDecoder:
    """Tri-Plane feature decoder: 2 hidden SiLU layers -> (density logit, C channels)."""

    def __init__(self, features: int, channels: int, kind: str, rng: Rng, width: int = 64,
                 hidden: int = 2):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        self.features = features
        self.channels = channels
        self.kind = kind
        self.mlp = Mlp([features] + [width] * hidden + [1 + channels], rng)

    def __call__(self, feats: Tensor) -> Tensor:
        return self.mlp(feats)

    def parameters(self) -> list[Tensor]:
        return self.mlp.parameters()

    def named_parameters(self, prefix: str = "feature_decoder") -> dict[str, Tensor]:
        return self.mlp.named_parameters(prefix)


@dataclass
class TriPlane:
    planes: list  # three Tensors [F, K, K] for xy, xz, yz
    bounds: float

    def __post_init__(self):
        shapes = {p.shape for p in self.planes}
        if len(self.planes) != 3 or len(shapes) != 1:
            raise ValueError(f"a TriPlane needs three equally shaped planes, got {shapes}")

    @property
    def features(self) -> int:
        return self.planes[0].shape[0]

    @property
    def resolution(self) -> int:
        return self.planes[0].shape[1]

    @classmethod
    def create(cls, features: int, resolution: int, bounds: float, rng: Rng,
               init_std: float = 0.1) -> "TriPlane":
        planes = [
            Tensor(rng.normal(0.0, init_std, size=(features, resolution, resolution)),
                   requires_grad=True)
            for _ in range(3)
        ]
        return cls(planes, float(bounds))

    def parameters(self) -> list[Tensor]:
        return list(self.planes)

    def named_parameters(self, prefix: str = "triplane") -> dict[str, Tensor]:
        return {f"{prefix}.{n}": p for n, p in zip(PLANE_NAMES, self.planes)}


def triplane_features(tp: TriPlane, pts) -> Tensor:
    """Sum of the three bilinear plane samples for each point, [n, F]."""
    pts = _as_points(pts)
    normed = T.scale(pts, 1.0 / tp.bounds)
    feats = None
    for plane, (a, b) in zip(tp.planes, PLANE_AXES):
        uv = normed[:, [a, b]]
        f = T.grid_sample_bilinear(plane, uv)
        feats = f if feats is None else T.add(feats, f)
    return feats


def inside_bounds(pts: np.ndarray, bounds: float) -> np.ndarray:
    return np.all(np.abs(pts) <= bounds, axis=1)


def query_triplane(tp: TriPlane, dec: FeatureDecoder, pts, channels: int | None = None):
    """Density [n] and channels [n, C]; zero outside the Tri-Plane bounds."""
    if channels is not None and channels != dec.channels:
        raise ValueError(f"decoder produces {dec.channels} channels, caller expects {channels}")
    if tp.features != dec.features:
        raise ValueError(f"planes carry {tp.features} features, decoder expects {dec.features}")
    pts = _as_points(pts)
    raw = dec(triplane_features(tp, pts))
    return _heads(raw, dec.kind, inside_bounds(pts.data, tp.bounds))


def positional_encoding(pts: Tensor, order: int) -> Tensor:
    """(x, sin(2^k pi x), cos(2^k pi x)) for k < order; width 3 + 6 * order."""
    if order == 0:
        return pts
    parts = [pts]
    x = pts
    for k in range(order):
        arg = T.scale(x, (2.0**k) * np.pi)
        parts.append(_sin(arg))
        parts.append(_cos(arg))
    return T.concat(parts, axis=1)


def _sin(a: Tensor) -> Tensor:
    c = np.cos(a.data)
    return T._node(np.sin(a.data), (a,), lambda g: (g * c,))


def _cos(a: Tensor) -> Tensor:
    s = np.sin(a.data)
    return T._node(np.cos(a.data), (a,), lambda g: (-g * s,))


class TriPlaneField:
    """A Tri-Plane bound to its (possibly shared) feature decoder."""

    backend = "triplane"

    def __init__(self, triplane: TriPlane, decoder: FeatureDecoder):
        self.triplane = triplane
        self.decoder = decoder

    @property
    def channels(self) -> int:
        return self.decoder.channels

    @property
    def kind(self) -> str:
        return self.decoder.kind

    @property
    def bounds(self) -> float:
        return self.triplane.bounds

    def query(self, pts):
        return query_triplane(self.triplane, self.decoder, pts)

    def parameters(self) -> list[Tensor]:
        return self.triplane.parameters() + self.decoder.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {**self.triplane.named_parameters(), **self.decoder.named_parameters()}

    @classmethod
    def create(cls, channels: int, kind: str, rng: Rng, features: int = 16, resolution: int = 64,
               bounds: float = 1.0, width: int = 64) -> "TriPlaneField":
        tp = TriPlane.create(features, resolution, bounds, rng.spawn("planes"))
        dec = FeatureDecoder(features, channels, kind, rng.spawn("decoder"), width=width)
        return cls(tp, dec)


class MlpField:
    """Positional encoding followed by a 4x128 SiLU MLP."""

    backend = "mlp"

    def __init__(self, channels: int, kind: str, rng: Rng, pe_order: int = 6, width: int = 128,
                 hidden: int = 4, bounds: float = 1.0):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        self.channels = channels
        self.kind = kind
        self.pe_order = pe_order
        self.bounds = float(bounds)
        self.mlp = Mlp([self.encoding_dim] + [width] * hidden + [1 + channels], rng)

    @property
    def encoding_dim(self) -> int:
        return 3 + 6 * self.pe_order

    def query(self, pts):
        pts = _as_points(pts)
        x = positional_encoding(T.scale(pts, 1.0 / self.bounds), self.pe_order)
        return _heads(self.mlp(x), self.kind, inside_bounds(pts.data, self.bounds))

    def parameters(self) -> list[Tensor]:
        return self.mlp.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return self.mlp.named_parameters("mlp_field")


def query_mlp_field(f: MlpField, pts):
    return f.query(pts)


def make_field(backend: str, channels: int, kind: str, rng: Rng, bounds: float = 1.0, **kw):
    if backend == "triplane":
        return TriPlaneField.create(channels, kind, rng, bounds=bounds, **kw)
    if backend == "mlp":
        return MlpField(channels, kind, rng, bounds=bounds, **kw)
    raise ValueError(f"unknown backend {backend!r}; expected 'triplane' or 'mlp'")
