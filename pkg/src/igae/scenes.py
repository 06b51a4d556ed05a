"""Procedural scenes with an analytic ground-truth ray tracer, posed view sets,
latent caches and a surrogate stream of "real" images.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensor as T
from .camera import CameraPose, generate_rays, heldout_mask, sample_poses_on_sphere
from .tensor import Rng

LIGHT_DIR = np.array([0.4, -0.3, 0.85]) / np.linalg.norm([0.4, -0.3, 0.85])
AMBIENT = 0.35
CAMERA_DISTANCE = 4.0
FOV_Y = float(np.deg2rad(40.0))
PRIMITIVE_KINDS = ("sphere", "box", "torus")


@dataclass
class Primitive:
    kind: str
    center: np.ndarray
    size: np.ndarray  # sphere: (r, -, -); box: half extents; torus: (R, r, -)
    albedo: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.size = np.asarray(self.size, dtype=np.float64).reshape(3)
        self.albedo = np.asarray(self.albedo, dtype=np.float64).reshape(3)

    def extent(self) -> float:
        """Radius of a sphere around ``center`` enclosing the primitive."""
        if self.kind == "sphere":
            return float(self.size[0])
        if self.kind == "box":
            return float(np.linalg.norm(self.size))
        return float(self.size[0] + self.size[1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(), "size": self.size.tolist(),
                "albedo": self.albedo.tolist()}


@dataclass
class ProceduralScene:
    primitives: list
    radius: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"radius": self.radius, "seed": self.seed,
                "primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d: dict) -> "ProceduralScene":
        return cls([Primitive(**p) for p in d["primitives"]], d["radius"], d["seed"])


def _distinct_albedo(rng: Rng, taken: list, min_dist: float = 0.25) -> np.ndarray:
    for _ in range(100):
        a = rng.uniform(0.1, 0.95, size=3)
        if all(np.linalg.norm(a - b) >= min_dist for b in taken):
            return a
    return a


def make_scene(seed: int, difficulty: int = 1, radius: float = 1.0) -> ProceduralScene:
    """Deterministic scene; difficulty 0 is a single centred sphere, otherwise 2-8 primitives."""
    rng = Rng(seed, (101,))
    if difficulty <= 0:
        albedo = np.array([0.85, 0.35, 0.25])
        return ProceduralScene([Primitive("sphere", np.zeros(3), [0.6 * radius, 0, 0], albedo)],
                               radius, seed)
    count = int(rng.integers(2, 9))
    prims, albedos = [], []
    for _ in range(count):
        kind = PRIMITIVE_KINDS[int(rng.integers(0, 3))]
        center = rng.uniform(-0.35, 0.35, size=3) * radius
        room = 0.95 * radius - np.linalg.norm(center)
        scale = rng.uniform(0.5, 0.9) * room
        if kind == "sphere":
            size = [scale, 0, 0]
        elif kind == "box":
            half = rng.uniform(0.5, 1.0, size=3)
            size = half / np.linalg.norm(half) * scale
        else:
            minor = rng.uniform(0.25, 0.4) * scale
            size = [scale - minor, minor, 0]
        albedo = _distinct_albedo(rng, albedos)
        albedos.append(albedo)
        prims.append(Primitive(kind, center, size, albedo))
    return ProceduralScene(prims, radius, seed)


# ---------------------------------------------------------------------------
# analytic intersections; each returns (t [n], normal [n, 3]) with t = inf on miss


def _hit_sphere(o, d, prim: Primitive):
    p = o - prim.center
    r = prim.size[0]
    b = np.einsum("ij,ij->i", p, d)
    c = np.einsum("ij,ij->i", p, p) - r * r
    disc = b * b - c
    t = np.full(len(o), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0))
    t0 = -b - sq
    t1 = -b + sq
    tt = np.where(t0 > 1e-9, t0, t1)
    ok &= tt > 1e-9
    t[ok] = tt[ok]
    pos = o + d * np.where(ok, t, 0)[:, None]
    n = (pos - prim.center) / r
    return t, n


def _hit_box(o, d, prim: Primitive):
    lo = prim.center - prim.size
    hi = prim.center + prim.size
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
    tmin = np.minimum(ta, tb)
    tmax = np.maximum(ta, tb)
    tmin = np.where(np.isnan(tmin), -np.inf, tmin)
    tmax = np.where(np.isnan(tmax), np.inf, tmax)
    tn = tmin.max(axis=1)
    tf = tmax.min(axis=1)
    axis = tmin.argmax(axis=1)
    ok = (tn <= tf) & (tn > 1e-9)
    t = np.where(ok, tn, np.inf)
    n = np.zeros_like(o)
    rows = np.arange(len(o))
    n[rows, axis] = -np.sign(d[rows, axis])
    return t, n


def _hit_torus(o, d, prim: Primitive):
    """Torus around the z axis through ``center``; quartic solved per ray."""
    R, r = prim.size[0], prim.size[1]
    p = o - prim.center
    t = np.full(len(o), np.inf)
    n = np.zeros_like(o)
    # bounding-sphere prefilter
    b = np.einsum("ij,ij->i", p, d)
    c = np.einsum("ij,ij->i", p, p) - (R + r) ** 2
    cand = np.nonzero(b * b - c >= 0)[0]
    if len(cand) == 0:
        return t, n
    pc, dc = p[cand], d[cand]
    f = np.einsum("ij,ij->i", pc, dc)
    pp = np.einsum("ij,ij->i", pc, pc)
    k = pp + R * R - r * r
    dz, pz = dc[:, 2], pc[:, 2]
    a3 = 4 * f
    a2 = 4 * f * f + 2 * k - 4 * R * R * (1 - dz * dz)
    a1 = 4 * f * k - 8 * R * R * (f - pz * dz)
    a0 = k * k - 4 * R * R * (pp - pz * pz)
    comp = np.zeros((len(cand), 4, 4))
    comp[:, 0, :] = -np.stack([a3, a2, a1, a0], axis=1)
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) < 1e-5 * (1 + np.abs(roots.real))
    cand_t = np.where(real & (roots.real > 1e-9), roots.real, np.inf)
    best = cand_t.min(axis=1)
    hit = np.isfinite(best)
    tb = np.where(hit, best, 0.0)
    for _ in range(3):  # Newton polish
        val = (((tb + a3) * tb + a2) * tb + a1) * tb + a0
        der = ((4 * tb + 3 * a3) * tb + 2 * a2) * tb + a1
        step = np.where(np.abs(der) > 1e-12, val / np.where(der == 0, 1, der), 0)
        tb = np.where(hit, tb - step, tb)
    hit &= tb > 1e-9
    x = pc + dc * tb[:, None]
    s = np.einsum("ij,ij->i", x, x) + R * R - r * r
    g = 4 * s[:, None] * x
    g[:, :2] -= 8 * R * R * x[:, :2]
    g /= np.linalg.norm(g, axis=1, keepdims=True) + 1e-300
    t[cand[hit]] = tb[hit]
    n[cand[hit]] = g[hit]
    return t, n


_HITTERS = {"sphere": _hit_sphere, "box": _hit_box, "torus": _hit_torus}


def trace(scene: ProceduralScene, origins: np.ndarray, directions: np.ndarray):
    """Closest hit per ray -> (t, normal, albedo); t is inf where nothing is hit."""
    n = len(origins)
    best = np.full(n, np.inf)
    normal = np.zeros((n, 3))
    albedo = np.ones((n, 3))
    for prim in scene.primitives:
        t, nrm = _HITTERS[prim.kind](origins, directions, prim)
        closer = t < best
        best[closer] = t[closer]
        normal[closer] = nrm[closer]
        albedo[closer] = prim.albedo
    return best, normal, albedo


def shade(normal: np.ndarray, albedo: np.ndarray) -> np.ndarray:
    lam = np.clip(normal @ LIGHT_DIR, 0.0, None)
    return albedo * (AMBIENT + (1 - AMBIENT) * lam)[:, None]


def render_gt_view(scene: ProceduralScene, pose: CameraPose, extent: tuple[int, int],
                   supersample: int = 2) -> np.ndarray:
    """Ray-traced [H, W, 3] image on a white background, box-filtered over
    ``supersample``^2 sub-pixel rays."""
    h, w = extent
    ss = int(supersample)
    rays = generate_rays(pose, (h * ss, w * ss), scene_radius=scene.radius)
    t, normal, albedo = trace(scene, rays.origins, rays.directions)
    rgb = np.ones((len(t), 3))
    hit = np.isfinite(t)
    rgb[hit] = shade(normal[hit], albedo[hit])
    img = rgb.reshape(h, ss, w, ss, 3).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0)


def quantize8(img: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(img, 0, 1) * 255.0) / 255.0).astype(np.float32)


# ---------------------------------------------------------------------------
# view sets


@dataclass
class PosedViewSet:
    scene_id: str
    scene: ProceduralScene
    poses: list
    images: np.ndarray  # [V, H, W, 3] float32, 8-bit levels
    heldout: np.ndarray  # [V] bool
    seed: int = 0

    @property
    def extent(self) -> tuple[int, int]:
        return tuple(self.images.shape[1:3])

    @property
    def train_indices(self) -> np.ndarray:
        return np.nonzero(~self.heldout)[0]

    @property
    def heldout_indices(self) -> np.ndarray:
        return np.nonzero(self.heldout)[0]

    def __len__(self) -> int:
        return len(self.poses)


def build_view_set(scene: ProceduralScene, V: int, extent: tuple[int, int], seed: int,
                   scene_id: str | None = None, distance: float = CAMERA_DISTANCE,
                   fov_y: float = FOV_Y, supersample: int = 2) -> PosedViewSet:
    rng = Rng(seed, (202,))
    poses = sample_poses_on_sphere(V, distance * scene.radius, rng, fov_y=fov_y, extent=extent)
    images = np.stack([quantize8(render_gt_view(scene, p, extent, supersample)) for p in poses])
    sid = scene_id if scene_id is not None else f"scene_{scene.seed:04d}"
    return PosedViewSet(sid, scene, poses, images, heldout_mask(V), seed)


def area_downsample(images: np.ndarray, f: int) -> np.ndarray:
    """Box-filter [..., H, W, C] images by an integer factor."""
    *lead, H, W, C = images.shape
    return images.reshape(*lead, H // f, f, W // f, f, C).mean(axis=(-4, -2))


# ---------------------------------------------------------------------------
# latent caches

LATENT_MAGIC = b"IGLC"
LATENT_VERSION = 1


@dataclass
class LatentCache:
    scene_id: str
    fingerprint: str
    indices: np.ndarray  # pose indices
    latents: np.ndarray  # [n, h, w, c] float32

    def __len__(self) -> int:
        return len(self.indices)

    def is_valid(self, ae) -> bool:
        return self.fingerprint == ae.encoder_fingerprint()

    def nchw(self) -> np.ndarray:
        return np.ascontiguousarray(self.latents.transpose(0, 3, 1, 2))

    def lookup(self, pose_index: int) -> np.ndarray:
        pos = int(np.nonzero(self.indices == pose_index)[0][0])
        return self.latents[pos]


def encode_images(ae, images: np.ndarray, batch: int = 8) -> np.ndarray:
    """Encode [n, H, W, 3] images without building a graph -> [n, h, w, c]."""
    out = []
    with T.no_grad():
        for i in range(0, len(images), batch):
            x = images[i : i + batch].transpose(0, 3, 1, 2).astype(T.default_dtype())
            out.append(ae.encode(x).data.transpose(0, 2, 3, 1))
    return np.concatenate(out).astype(np.float32)


def build_latent_cache(ae, views: PosedViewSet, indices=None) -> LatentCache:
    idx = views.train_indices if indices is None else np.asarray(indices)
    lat = encode_images(ae, views.images[idx])
    return LatentCache(views.scene_id, ae.encoder_fingerprint(), idx.copy(), lat)


def ensure_latent_cache(cache: LatentCache | None, ae, views: PosedViewSet) -> LatentCache:
    """Return ``cache`` if it matches the current encoder, otherwise rebuild it."""
    if cache is not None and cache.is_valid(ae) and cache.scene_id == views.scene_id:
        return cache
    return build_latent_cache(ae, views)


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_latent_cache(directory, cache: LatentCache):
    """``latents.bin``: magic, version u32, count u32, then (pose index u32, f32 latents)
    per entry; extent and encoder fingerprint go to ``latents.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    buf = bytearray(LATENT_MAGIC)
    buf += struct.pack("<II", LATENT_VERSION, len(cache))
    for i, lat in zip(cache.indices, cache.latents):
        buf += struct.pack("<I", int(i))
        buf += np.ascontiguousarray(lat, dtype="<f4").tobytes()
    _atomic_write(directory / "latents.bin", bytes(buf))
    meta = {"scene_id": cache.scene_id, "fingerprint": cache.fingerprint,
            "shape": list(cache.latents.shape[1:])}
    _atomic_write(directory / "latents.json", json.dumps(meta, indent=2).encode())


def read_latent_cache(directory) -> LatentCache:
    directory = Path(directory)
    meta = json.loads((directory / "latents.json").read_text())
    raw = (directory / "latents.bin").read_bytes()
    if raw[:4] != LATENT_MAGIC:
        raise ValueError("latents.bin: bad magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != LATENT_VERSION:
        raise ValueError(f"latents.bin: unsupported version {version}")
    h, w, c = meta["shape"]
    per = h * w * c * 4
    off = 12
    if len(raw) != off + count * (4 + per):
        raise ValueError("latents.bin: truncated or oversized payload")
    idx, lats = [], []
    for _ in range(count):
        (i,) = struct.unpack_from("<I", raw, off)
        off += 4
        lats.append(np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=off).reshape(h, w, c))
        off += per
        idx.append(i)
    return LatentCache(meta["scene_id"], meta["fingerprint"], np.array(idx, dtype=np.int64),
                       np.stack(lats).astype(np.float32))


# ---------------------------------------------------------------------------
# surrogate real images


@dataclass
class RealImageSet:
    images: np.ndarray  # [L, H, W, 3] float32 in [0, 1]
    source: str = "procedural"

    def __len__(self) -> int:
        return len(self.images)


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Area-average resampling matrix [n_out, n_in]."""
    edges_out = np.linspace(0.0, n_in, n_out + 1)
    A = np.zeros((n_out, n_in))
    for i in range(n_out):
        a, b = edges_out[i], edges_out[i + 1]
        j0, j1 = int(np.floor(a)), int(np.ceil(b))
        for j in range(j0, min(j1, n_in)):
            A[i, j] = min(b, j + 1) - max(a, j)
        A[i] /= b - a
    return A


def center_crop_resize(img: np.ndarray, extent: int) -> np.ndarray:
    """Square centre crop followed by area downscaling to extent x extent."""
    H, W = img.shape[:2]
    s = min(H, W)
    top, left = (H - s) // 2, (W - s) // 2
    crop = img[top : top + s, left : left + s].astype(np.float64)
    A = _resample_matrix(s, extent)
    return np.einsum("ij,jkc,lk->ilc", A, crop, A)


def _smooth_noise(rng: Rng, extent: int, cells: int) -> np.ndarray:
    from scipy.ndimage import zoom

    grid = rng.uniform(0.0, 1.0, size=(cells + 1, cells + 1, 3))
    return zoom(grid, (extent / (cells + 1), extent / (cells + 1), 1), order=1)[:extent, :extent]


def _texture(rng: Rng, extent: int) -> np.ndarray:
    yy, xx = np.mgrid[0:extent, 0:extent] / max(extent - 1, 1)
    ang = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(ang) * xx + np.sin(ang) * yy
    c0, c1 = rng.uniform(0, 1, size=3), rng.uniform(0, 1, size=3)
    img = c0 + (c1 - c0) * ((ramp - ramp.min()) / (np.ptp(ramp) + 1e-9))[..., None]
    amp = 0.35
    for cells in (2, 4, 8):
        img = img + amp * (_smooth_noise(rng, extent, cells) - 0.5)
        amp *= 0.5
    for _ in range(int(rng.integers(1, 4))):
        col = rng.uniform(0, 1, size=3)
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        rad = rng.uniform(0.08, 0.3)
        if rng.uniform() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad**2
        else:
            mask = (np.abs(yy - cy) < rad) & (np.abs(xx - cx) < rad * rng.uniform(0.4, 1.2))
        img[mask] = 0.3 * img[mask] + 0.7 * col
    return np.clip(img, 0.0, 1.0)


def real_surrogate_stream(L: int, extent: int, seed: int = 0, directory=None) -> RealImageSet:
    """L seeded procedural textures, or images from ``directory`` (sorted, centre
    cropped and area-downscaled)."""
    if directory is not None:
        paths = sorted(p for p in Path(directory).iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
        if not paths:
            raise ValueError(f"no images found in {directory}")
        imgs = []
        for p in paths[:L] if L else paths:
            arr = np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
            imgs.append(center_crop_resize(arr, extent))
        return RealImageSet(np.clip(np.stack(imgs), 0, 1).astype(np.float32), str(directory))
    rng = Rng(seed, (303,))
    imgs = [quantize8(_texture(rng.spawn(i), extent)) for i in range(L)]
    return RealImageSet(np.stack(imgs).astype(np.float32))


# ---------------------------------------------------------------------------
# on-disk dataset


def save_png(path, img: np.ndarray):
    arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.png")
    Image.fromarray(arr).save(tmp)
    os.replace(tmp, path)


def load_png(path) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0).astype(np.float32)


def write_view_set(directory, views: PosedViewSet):
    d = Path(directory) / views.scene_id
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "scene_id": views.scene_id,
        "seed": views.seed,
        "fov_y": views.poses[0].fov_y,
        "extent": list(views.extent),
        "poses": [p.matrix().ravel().tolist() for p in views.poses],
        "split": ["heldout" if h else "train" for h in views.heldout],
        "scene": views.scene.to_dict(),
    }
    for i, img in enumerate(views.images):
        save_png(d / f"view_{i:04d}.png", img)
    _atomic_write(d / "meta.json", json.dumps(meta, indent=1).encode())
    return d


def read_view_set(directory) -> PosedViewSet:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    h, w = meta["extent"]
    poses = [CameraPose.from_matrix(m, meta["fov_y"], h, w) for m in meta["poses"]]
    images = np.stack([load_png(d / f"view_{i:04d}.png") for i in range(len(poses))])
    heldout = np.array([s == "heldout" for s in meta["split"]])
    return PosedViewSet(meta["scene_id"], ProceduralScene.from_dict(meta["scene"]), poses,
                        images, heldout, meta["seed"])


def write_real_images(directory, real: RealImageSet):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(real.images):
        save_png(d / f"real_{i:05d}.png", img)


def read_dataset(root) -> list[PosedViewSet]:
    root = Path(root)
    return [read_view_set(p) for p in sorted(root.iterdir()) if (p / "meta.json").exists()]
