"""Central finite-difference checks for the autodiff engine (float64 mode)."""

from __future__ import annotations

import numpy as np

from . import tensor as T


def numeric_grad(fn, inputs, index: int, probes: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """d fn / d inputs[index] at flat positions ``probes`` by central differences.

    ``fn`` maps the list of input Tensors to a scalar Tensor.
    """
    x = inputs[index]
    flat = x.data.reshape(-1)
    out = np.empty(len(probes))
    for k, pos in enumerate(probes):
        orig = flat[pos]
        flat[pos] = orig + h
        with T.no_grad():
            fp = fn(inputs).item()
        flat[pos] = orig - h
        with T.no_grad():
            fm = fn(inputs).item()
        flat[pos] = orig
        out[k] = (fp - fm) / (2 * h)
    return out


def probe_count(inputs, probes: int = 20) -> int:
    """Coordinates ``check_gradients`` compares for these inputs."""
    return sum(min(probes, x.size) for x in inputs if x.requires_grad)


def check_gradients(fn, inputs, probes: int = 20, h: float = 1e-4, seed: int = 0,
                    atol: float = 1e-8) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    Inputs must be float64 Tensors with requires_grad set; ``probes`` random
    coordinates per input are compared. Relative error is
    |a - n| / max(|a|, |n|, atol).
    """
    rng = np.random.default_rng(seed)
    for x in inputs:
        x.grad = None
    loss = fn(inputs)
    T.backward(loss)
    worst = 0.0
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue
        n = x.size
        pos = rng.choice(n, size=min(probes, n), replace=False)
        analytic = (x.grad if x.grad is not None else np.zeros_like(x.data)).reshape(-1)[pos]
        numeric = numeric_grad(fn, inputs, i, pos, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst


def _away_from_zero(rng, shape, lo=0.2):
    x = rng.uniform(lo, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def standard_cases(seed: int = 0) -> dict:
    """name -> (fn, inputs) for every differentiable op, built in float64.

    Call inside ``precision("float64")``. Each fn reduces to a scalar through
    a fixed random projection so no gradient component is trivially uniform.
    """
    from . import losses as L
    from .fields import FeatureDecoder, TriPlane, positional_encoding, query_triplane
    from .tensor import Rng

    rng = np.random.default_rng(seed)

    def leaf(a):
        return T.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)

    def proj(out):
        # fixed random weights, drawn once per output shape
        key = out.shape
        if key not in weights:
            weights[key] = T.Tensor(rng.normal(size=out.shape))
        return T.sum_(T.mul(out, weights[key]))

    weights: dict = {}
    a = lambda *s: leaf(rng.normal(size=s))  # noqa: E731
    cases = {}

    def case(name, fn, *inputs):
        cases[name] = (lambda xs, fn=fn: proj(fn(*xs)), list(inputs))

    case("add", T.add, a(3, 4), a(3, 4))
    case("sub", T.sub, a(3, 4), a(3, 4))
    case("mul", T.mul, a(3, 4), a(3, 4))
    case("div", T.div, a(3, 4), leaf(_away_from_zero(rng, (3, 4), 0.5)))
    case("scale", lambda x: T.scale(x, -1.7), a(4, 6))
    case("exp", T.exp, a(4, 6))
    case("log", T.log, leaf(rng.uniform(0.5, 2.0, size=(24,))))
    case("sqrt", T.sqrt, leaf(rng.uniform(0.5, 2.0, size=(24,))))
    case("softplus", T.softplus, a(4, 5))
    case("sigmoid", T.sigmoid, a(4, 5))
    case("silu", T.silu, a(4, 5))
    case("relu", T.relu, leaf(_away_from_zero(rng, (4, 5))))
    case("square", T.square, a(4, 5))
    case("sum", lambda x: T.reshape(T.sum_(x, axis=1), (3, 1)), a(3, 8))
    case("mean", lambda x: T.reshape(T.mean(x, axis=0), (1, 8)), a(3, 8))
    case("reshape", lambda x: T.reshape(x, (6, 4)), a(3, 8))
    case("transpose", lambda x: T.transpose(x, (2, 0, 1)), a(2, 3, 4))
    case("broadcast_to", lambda x: T.broadcast_to(x, (3, 24)), a(1, 24))
    case("getitem", lambda x: x[1:, ::2], a(4, 6))
    case("getitem_advanced", lambda x: x[np.array([0, 2, 2, 3])], a(4, 6))
    case("concat", lambda x, y: T.concat([x, y], axis=1), a(3, 4), a(3, 5))
    case("stack", lambda x, y: T.stack([x, y], axis=0), a(3, 4), a(3, 4))
    case("linear", T.linear, a(5, 4), a(4, 3), a(3))
    case("conv2d_s1", lambda x, k, b: T.conv2d(x, k, b, stride=1), a(2, 3, 6, 5), a(4, 3, 3, 3), a(4))
    case("conv2d_s2", lambda x, k, b: T.conv2d(x, k, b, stride=2), a(2, 3, 6, 6), a(4, 3, 3, 3), a(4))
    case("conv2d_1x1", lambda x, k: T.conv2d(x, k), a(1, 3, 4, 4), a(2, 3, 1, 1))
    case("upsample_nearest2x", T.upsample_nearest2x, a(2, 3, 3, 4))
    case("avgpool", lambda x: T.avgpool(x, 2), a(2, 3, 4, 6))
    case("grid_sample_bilinear", T.grid_sample_bilinear, a(3, 5, 5),
         leaf(rng.uniform(-0.95, 0.95, size=(40, 2))))
    case("composite", lambda s, c, d, bg: T.composite(s, c, d, bg)[0],
         leaf(rng.uniform(0.05, 2.0, size=(6, 8))), a(6, 8, 3),
         leaf(rng.uniform(0.05, 0.3, size=(6, 8))), a(3))
    case("positional_encoding", lambda p: positional_encoding(p, 3),
         leaf(rng.uniform(-1, 1, size=(7, 3))))
    case("mse", lambda x, y: T.reshape(L.mse(x, y), (1,)), a(3, 4), a(3, 4))
    case("tv_image_22", lambda x: T.reshape(L.tv_image(x, 2, 2), (1,)), a(3, 5, 4))
    case("tv_image_21", lambda x: T.reshape(L.tv_image(x, 2, 1), (1,)), a(3, 5, 4))

    planes = [a(4, 6, 6) for _ in range(3)]
    tp = TriPlane(planes, 1.0)
    dec = FeatureDecoder(4, 3, "rgb", Rng(seed, (5,)), width=8)
    dec_params = dec.parameters()
    pts = leaf(rng.uniform(-0.9, 0.9, size=(10, 3)))

    def tri(p0, p1, p2, pts, *dp):
        tp.planes[:] = [p0, p1, p2]
        sigma, ch = query_triplane(tp, dec, pts)
        return T.concat([T.reshape(sigma, (10, 1)), ch], axis=1)

    case("query_triplane", tri, *planes, pts, *dec_params)
    return cases
