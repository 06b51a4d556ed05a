"""Loss terms and the composed objectives for 3-D regularization, AE preservation
and two-stage latent NeRF training.

Squared L2 terms reduce by the mean over all elements (and over the batch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .fields import TriPlane
from .tensor import Rng, Tensor


@dataclass
class LossWeights:
    latent: float = 1.0
    rgb: float = 1.0
    tv3d: float = 1e-4
    ae_synth: float = 0.1
    ae_real: float = 0.1
    perceptual: float = 0.1
    tv: float = 1e-4

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if val < 0:
                raise ValueError(f"loss weight {name} must be nonnegative, got {val}")


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    return T.mean(T.square(T.sub(a, b)))


def _norm(a: Tensor) -> Tensor:
    """sqrt with a zero subgradient at 0."""
    out = np.sqrt(a.data)
    safe = np.where(out > 0, out, 1.0)

    def fn(g):
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return T._node(out, (a,), fn)


def tv_image(img: Tensor, p: int = 2, q: int = 2) -> Tensor:
    """Total variation of [C, H, W] (or the batch mean over [B, C, H, W]).

    Differences are taken between interior neighbours only, the channel vector
    is measured with the L2 norm raised to ``q``, and the sum is divided by H*W.
    """
    if (p, q) not in ((2, 2), (2, 1)):
        raise ValueError(f"unsupported TV variant (p, q) = ({p}, {q})")
    batched = img.ndim == 4
    x = img if batched else img.reshape(1, *img.shape)
    B, C, H, W = x.shape
    if H < 2 or W < 2:
        raise ValueError(f"TV needs H, W >= 2, got {H}x{W}")
    dv = T.sub(x[:, :, 1:, :], x[:, :, :-1, :])
    dh = T.sub(x[:, :, :, 1:], x[:, :, :, :-1])
    sv = T.sum_(T.square(dv), axis=1)
    sh = T.sum_(T.square(dh), axis=1)
    if q == 1:
        sv, sh = _norm(sv), _norm(sh)
    total = T.add(T.sum_(sv), T.sum_(sh))
    return T.scale(total, 1.0 / (B * H * W))


def tv_triplane(tp: TriPlane) -> Tensor:
    """Sum of (2, 2) plane TVs, features treated as channels."""
    out = None
    for plane in tp.planes:
        t = tv_image(plane, 2, 2)
        out = t if out is None else T.add(out, t)
    return out


def loss_latent(z: Tensor, z_rendered: Tensor) -> Tensor:
    return mse(z, z_rendered)


def loss_rgb(x: Tensor, x_rendered: Tensor) -> Tensor:
    return mse(x, x_rendered)


def loss_ae_synth(x: Tensor, x_hat: Tensor) -> Tensor:
    return mse(x, x_hat)


class PerceptualProxy:
    """Frozen, seeded random conv stack standing in for a pretrained feature net.

    Three stride-2 3x3 stages (ReLU) of widths 16/32/64; features are unit
    normalized across channels at each location before comparison.
    """

    def __init__(self, seed: int = 1234, widths=(16, 32, 64), stage_weights=None, eps: float = 1e-8):
        rng = Rng(seed, (7,))
        self.kernels = []
        self.biases = []
        cin = 3
        for w in widths:
            bound = np.sqrt(6.0 / (cin * 9))
            self.kernels.append(Tensor(rng.uniform(-bound, bound, size=(w, cin, 3, 3))))
            self.biases.append(Tensor(np.zeros(w)))
            cin = w
        n = len(widths)
        self.stage_weights = list(stage_weights) if stage_weights is not None else [1.0 / n] * n
        self.eps = eps

    def features(self, x: Tensor) -> list[Tensor]:
        h = T.scale(T.add(x, -0.5), 2.0)
        feats = []
        for k, b in zip(self.kernels, self.biases):
            h = T.relu(T.conv2d(h, k, b, stride=2))
            B, C, H, W = h.shape
            nrm = T.sqrt(T.add(T.sum_(T.square(h), axis=1), self.eps))
            nrm = T.broadcast_to(nrm.reshape(B, 1, H, W), (B, C, H, W))
            feats.append(T.div(h, nrm))
        return feats

    def parameters(self) -> list[Tensor]:
        return []


def perceptual(proxy: PerceptualProxy, a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"perceptual: shape mismatch {a.shape} vs {b.shape}")
    out = None
    for w, fa, fb in zip(proxy.stage_weights, proxy.features(a), proxy.features(b)):
        t = T.scale(mse(fa, fb), w)
        out = t if out is None else T.add(out, t)
    return out


def loss_ae_real(I: Tensor, I_hat: Tensor, k: Tensor, w: LossWeights,
                 proxy: PerceptualProxy | None = None) -> Tensor:
    """Reconstruction + perceptual + (2, 1) latent TV on real images."""
    out = mse(I, I_hat)
    if w.perceptual:
        if proxy is None:
            raise ValueError("a PerceptualProxy is required when the perceptual weight is nonzero")
        out = T.add(out, T.scale(perceptual(proxy, I, I_hat), w.perceptual))
    if w.tv:
        out = T.add(out, T.scale(tv_image(k, 2, 1), w.tv))
    return out


def _wsum(terms) -> Tensor:
    out = None
    for weight, term in terms:
        if weight == 0 or term is None:
            continue
        t = T.scale(term, weight)
        out = t if out is None else T.add(out, t)
    return out if out is not None else Tensor(0.0)


def objective_3d(x, z, z_rendered, x_rendered, triplanes, w: LossWeights) -> Tensor:
    """lambda_latent * L_latent + lambda_rgb * L_rgb + lambda_tv3d * sum of plane TVs."""
    tv = None
    if w.tv3d and triplanes:
        for tp in triplanes:
            t = tv_triplane(tp)
            tv = t if tv is None else T.add(tv, t)
    return _wsum([
        (w.latent, loss_latent(z, z_rendered) if w.latent else None),
        (w.rgb, loss_rgb(x, x_rendered) if w.rgb else None),
        (w.tv3d, tv),
    ])


def objective_ae(synth, real, w: LossWeights, proxy: PerceptualProxy | None = None) -> Tensor:
    """synth = (x, x_hat) or None; real = (I, I_hat, k) or None."""
    s = loss_ae_synth(*synth) if synth is not None and w.ae_synth else None
    r = loss_ae_real(*real, w, proxy) if real is not None and w.ae_real else None
    return _wsum([(w.ae_synth, s), (w.ae_real, r)])


def objective_igae(l3d: Tensor | None, lae: Tensor | None) -> Tensor:
    return _wsum([(1.0, l3d), (1.0, lae)])


def objective_ls(z_cached: Tensor, z_rendered: Tensor) -> Tensor:
    return mse(z_cached, z_rendered)


def objective_align(x: Tensor, x_decoded: Tensor) -> Tensor:
    return mse(x, x_decoded)
