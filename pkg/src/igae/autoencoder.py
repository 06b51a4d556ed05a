"""Deterministic convolutional autoencoder x -> z -> x_hat with downscale factor l."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Rng, Tensor


@dataclass
class AutoencoderSpec:
    l: int = 4
    c: int = 8
    channels: tuple = (32, 64, 128)
    activation: str = "silu"
    depth: int = 1  # extra stride-1 conv blocks per stage

    def __post_init__(self):
        self.channels = tuple(int(ch) for ch in self.channels)
        if self.l < 2 or self.l & (self.l - 1):
            raise ValueError(f"downscale factor must be a power of two >= 2, got {self.l}")
        if self.stages > len(self.channels):
            raise ValueError(f"l={self.l} needs {self.stages} stage widths, got {self.channels}")
        if self.activation != "silu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def stages(self) -> int:
        return int(round(math.log2(self.l)))

    @property
    def schedule(self) -> tuple:
        return self.channels[: self.stages]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


@dataclass
class Conv:
    weight: Tensor
    bias: Tensor
    stride: int = 1

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)

    @classmethod
    def create(cls, cin: int, cout: int, k: int, rng: Rng, stride: int = 1) -> "Conv":
        w = T.kaiming_uniform((cout, cin, k, k), cin * k * k, rng)
        return cls(w, T.zeros((cout,), requires_grad=True), stride)


@dataclass
class Autoencoder:
    spec: AutoencoderSpec
    encoder: list = field(default_factory=list)  # list[Conv]
    decoder: list = field(default_factory=list)

    @classmethod
    def create(cls, spec: AutoencoderSpec, rng: Rng) -> "Autoencoder":
        sched = spec.schedule
        enc, dec = [], []
        cin = 3
        for i, ch in enumerate(sched):
            enc.append(Conv.create(cin, ch, 3, rng.spawn("enc", i, 0), stride=2))
            for j in range(spec.depth):
                enc.append(Conv.create(ch, ch, 3, rng.spawn("enc", i, j + 1)))
            cin = ch
        enc.append(Conv.create(cin, spec.c, 1, rng.spawn("enc", "out")))

        dec.append(Conv.create(spec.c, sched[-1], 3, rng.spawn("dec", "in")))
        for i in reversed(range(len(sched))):
            ch = sched[i]
            for j in range(spec.depth):
                dec.append(Conv.create(ch, ch, 3, rng.spawn("dec", i, j + 1)))
            cout = sched[i - 1] if i > 0 else 3
            dec.append(Conv.create(ch, cout, 3, rng.spawn("dec", i, 0)))
        return cls(spec, enc, dec)

    # the layer lists are flat; upsampling points are implied by the schedule
    def _encode(self, x: Tensor) -> Tensor:
        h = T.scale(T.add(x, -0.5), 2.0)
        n = len(self.encoder)
        for i, conv in enumerate(self.encoder):
            h = conv(h)
            if i < n - 1:
                h = T.silu(h)
        return h

    def _decode(self, z: Tensor) -> Tensor:
        d = self.spec.depth
        layers = iter(self.decoder)
        h = T.silu(next(layers)(z))
        stages = len(self.spec.schedule)
        for s in range(stages):
            for _ in range(d):
                h = T.silu(next(layers)(h))
            h = T.upsample_nearest2x(h)
            h = next(layers)(h)
            h = T.silu(h) if s < stages - 1 else T.sigmoid(h)
        return h

    def encode(self, x) -> Tensor:
        """[B, 3, H, W] in [0, 1] -> [B, c, H/l, W/l]."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        B, C, H, W = x.shape
        l = self.spec.l
        if C != 3:
            raise ValueError(f"encoder expects 3 input channels, got {C}")
        if H % l or W % l:
            raise ValueError(f"image extent H={H}, W={W} is not divisible by l={l}")
        return self._encode(x)

    def decode(self, z) -> Tensor:
        """[B, c, h, w] -> [B, 3, h*l, w*l] in [0, 1]."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.ndim != 4 or z.shape[1] != self.spec.c:
            raise ValueError(f"decoder expects [B, {self.spec.c}, h, w], got {z.shape}")
        return self._decode(z)

    def encoder_parameters(self) -> list[Tensor]:
        return [t for conv in self.encoder for t in (conv.weight, conv.bias)]

    def decoder_parameters(self) -> list[Tensor]:
        return [t for conv in self.decoder for t in (conv.weight, conv.bias)]

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.decoder_parameters()

    def named_parameters(self) -> dict[str, tuple[str, Tensor]]:
        """name -> (role, tensor)."""
        out = {}
        for role, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, conv in enumerate(layers):
                out[f"{role}.{i}.weight"] = (role, conv.weight)
                out[f"{role}.{i}.bias"] = (role, conv.bias)
        return out

    def encoder_fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.encoder_parameters():
            h.update(np.ascontiguousarray(t.data, dtype=np.float32).tobytes())
        return h.hexdigest()

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.parameters():
            h.update(np.ascontiguousarray(t.data, dtype=np.float32).tobytes())
        return h.hexdigest()

    def copy(self) -> "Autoencoder":
        def clone(layers):
            return [
                Conv(Tensor(c.weight.data.copy(), requires_grad=True),
                     Tensor(c.bias.data.copy(), requires_grad=True), c.stride)
                for c in layers
            ]

        return Autoencoder(self.spec, clone(self.encoder), clone(self.decoder))


def _as_nchw(x):
    """Accept an [H, W, 3] image (array or Tensor) or an [B, 3, H, W] batch."""
    if isinstance(x, Tensor):
        if x.ndim == 3:
            return T.transpose(x, (2, 0, 1)).reshape(1, *x.shape[2:], *x.shape[:2]), True
        return x, False
    x = np.asarray(x)
    if x.ndim == 3:
        return Tensor(x.transpose(2, 0, 1)[None]), True
    return Tensor(x), False


def encode(ae: Autoencoder, x) -> Tensor:
    """Encode an [H, W, 3] image to [H/l, W/l, c] (or a NCHW batch to NCHW)."""
    xb, single = _as_nchw(x)
    z = ae.encode(xb)
    return T.transpose(z, (0, 2, 3, 1)).reshape(z.shape[2], z.shape[3], z.shape[1]) if single else z


def decode(ae: Autoencoder, z) -> Tensor:
    """Decode an [h, w, c] latent to [h*l, w*l, 3] (or NCHW to NCHW)."""
    if isinstance(z, Tensor) and z.ndim == 3 or not isinstance(z, Tensor) and np.ndim(z) == 3:
        zt = z if isinstance(z, Tensor) else Tensor(z)
        if zt.shape[2] != ae.spec.c:
            raise ValueError(f"latent has {zt.shape[2]} channels, decoder expects {ae.spec.c}")
        zb = T.transpose(zt, (2, 0, 1)).reshape(1, zt.shape[2], zt.shape[0], zt.shape[1])
        x = ae.decode(zb)
        return T.transpose(x, (0, 2, 3, 1)).reshape(x.shape[2], x.shape[3], 3)
    return ae.decode(z)


def images_to_batch(images) -> np.ndarray:
    """Stack [H, W, 3] images into a float NCHW array."""
    arr = np.stack([np.asarray(im) for im in images]).transpose(0, 3, 1, 2)
    return arr.astype(T.default_dtype())
