"""Dense tensors with define-by-run reverse-mode differentiation.

Every op builds a node holding its parents and a closure mapping the output
gradient to parent gradients. ``backward`` walks the graph in reverse
topological order and accumulates into the ``grad`` of leaf tensors.

Precision is float32 by default; ``precision("float64")`` switches newly
created tensors to float64, which the gradient checks use.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(name: str):
    """Temporarily change the dtype of newly created tensors."""
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.dtype(name).type
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Rng:
    """Seeded counter-based generator (numpy Philox), platform-stable.

    ``calls`` counts draws so two runs can be compared for identical
    consumption of randomness.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence([self.seed, *self.key])
        self._gen = np.random.Generator(np.random.Philox(ss))
        self.calls = 0

    def spawn(self, *key: int | str) -> "Rng":
        ints = []
        for k in key:
            if isinstance(k, str):
                ints.append(int.from_bytes(hashlib.sha256(k.encode()).digest()[:8], "little"))
            else:
                ints.append(int(k))
        return Rng(self.seed, self.key + tuple(ints))

    def uniform(self, low=0.0, high=1.0, size=None):
        self.calls += 1
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.calls += 1
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        self.calls += 1
        return self._gen.integers(low, high, size)

    def choice(self, n, size, replace=False):
        self.calls += 1
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n):
        self.calls += 1
        return self._gen.permutation(n)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.name = name

    # basic properties
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def backward(self, grad=None):
        backward(self, grad)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _node(data: np.ndarray, parents: tuple, fn: Callable) -> Tensor:
    """Create an op output; ``fn(g)`` returns one gradient (or None) per parent."""
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.ndim == 0


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unscalar(g: np.ndarray, t: Tensor) -> np.ndarray:
    if _is_scalar(t) and g.ndim:
        return np.asarray(g.sum(), dtype=g.dtype)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(g, b)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (_unscalar(g * bd, a), _unscalar(g * ad, b)))


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def fn(g):
        return _unscalar(g / bd, a), _unscalar(-g * out / bd, b)

    return _node(out, (a, b), fn)


def scale(a, k: float) -> Tensor:
    a = _wrap(a)
    k = a.data.dtype.type(k)
    return _node(a.data * k, (a,), lambda g: (g * k,))


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    ad = a.data
    return _node(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def _sigmoid_np(x):
    return expit(x)


def softplus(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    out = np.logaddexp(x, x.dtype.type(0))
    return _node(out.astype(x.dtype), (a,), lambda g: (g * _sigmoid_np(x),))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = _sigmoid_np(a.data)
    return _node(out, (a,), lambda g: (g * out * (1 - out),))


def silu(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    s = _sigmoid_np(x)
    out = x * s

    def fn(g):
        # d/dx x*s = s + x*s*(1-s) = s + out - out*s
        d = out - out * s
        d += s
        d *= g
        return (d,)

    return _node(out, (a,), fn)


def relu(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    mask = x > 0
    return _node(np.where(mask, x, 0).astype(x.dtype), (a,), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    return _node(x * x, (a,), lambda g: (2 * g * x,))


# ---------------------------------------------------------------------------
# reductions and shape ops


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None) -> Tensor:
    a = _wrap(a)
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape

    def fn(g):
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _node(np.asarray(a.data.sum(axis=axes)), (a,), fn)


def mean(a, axis=None) -> Tensor:
    a = _wrap(a)
    axes = _norm_axis(axis, a.ndim)
    n = math.prod(a.shape[ax] for ax in axes)
    shape = a.shape
    inv = a.dtype.type(1.0 / n) if n else a.dtype.type(0)

    def fn(g):
        return (np.broadcast_to(np.expand_dims(g * inv, axes), shape).copy(),)

    return _node(np.asarray(a.data.mean(axis=axes)), (a,), fn)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def broadcast_to(a, shape) -> Tensor:
    """Explicit broadcast; leading axes may be added and size-1 axes expanded."""
    a = _wrap(a)
    shape = tuple(shape)
    src = a.shape
    lead = len(shape) - len(src)
    if lead < 0:
        raise ValueError(f"broadcast_to: cannot broadcast {src} to {shape}")
    expanded = [i + lead for i, n in enumerate(src) if n == 1 and shape[i + lead] != 1]

    def fn(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        if expanded:
            g = g.sum(axis=tuple(i - lead for i in expanded), keepdims=True)
        return (g.reshape(src),)

    return _node(np.broadcast_to(a.data, shape).copy(), (a,), fn)


def getitem(a, idx) -> Tensor:
    a = _wrap(a)
    shape = a.shape
    basic = _is_basic_index(idx)

    def fn(g):
        out = np.zeros(shape, dtype=g.dtype)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _node(np.asarray(a.data[idx]), (a,), fn)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]

    def fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), fn)


# ---------------------------------------------------------------------------
# dispatcher over the elementwise/reduction op family

_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "exp": exp,
    "softplus": softplus,
    "sigmoid": sigmoid,
    "silu": silu,
    "relu": relu,
    "square": square,
    "sum": sum_,
    "mean": mean,
}


def elementwise_and_reduce(op: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# dense layers


def linear(x, W, b=None) -> Tensor:
    """y = x @ W + b for x [n, in], W [in, out], b [out]."""
    x, W = _wrap(x), _wrap(W)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"linear: dimension mismatch x{x.shape} @ W{W.shape}")
    if b is not None:
        b = _wrap(b)
        if b.shape != (W.shape[1],):
            raise ValueError(f"linear: bias shape {b.shape} does not match W{W.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd
    if b is not None:
        out = out + b.data

    def fn(g):
        gx = g @ Wd.T if x.requires_grad else None
        gW = xd.T @ g if W.requires_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _node(out, parents, fn)


def matmul(a, b) -> Tensor:
    return linear(a, b)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, Ho: int, Wo: int) -> np.ndarray:
    """xp is channels-last [B, Hp, Wp, C]; rows ordered (B, Ho, Wo), columns (kh, kw, C)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    B, C = xp.shape[0], xp.shape[3]
    # [B, Ho, Wo, kh, kw, C]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * Ho * Wo, kh * kw * C)


def conv2d(x, k, b=None, stride: int = 1, pad: int | None = None) -> Tensor:
    """2-D cross-correlation, x [B, Cin, H, W], k [Cout, Cin, kh, kw], optional bias [Cout].

    ``pad`` defaults to kh // 2 so stride 1 preserves the extent.
    """
    x, k = _wrap(x), _wrap(k)
    if x.ndim != 4 or k.ndim != 4 or x.shape[1] != k.shape[1]:
        raise ValueError(f"conv2d: incompatible input {x.shape} and kernel {k.shape}")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    B, C, H, W = x.shape
    O, _, kh, kw = k.shape
    if pad is None:
        pad = kh // 2
    Hp, Wp = H + 2 * pad, W + 2 * pad
    if kh > Hp or kw > Wp:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    xl = x.data.transpose(0, 2, 3, 1)
    xp = np.pad(xl, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else xl
    cols = _im2col(xp, kh, kw, stride, Ho, Wo)
    kmat = k.data.transpose(0, 2, 3, 1).reshape(O, -1)
    out = cols @ kmat.T
    if b is not None:
        b = _wrap(b)
        out = out + b.data
    out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    xreq = x.requires_grad

    def fn(g):
        gm = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gk = None
        if k.requires_grad:
            gk = (gm.T @ cols).reshape(O, kh, kw, C).transpose(0, 3, 1, 2)
        gx = None
        if xreq:
            gcols = (gm @ kmat).reshape(B, Ho, Wo, kh, kw, C)
            gxp = np.zeros((B, Hp, Wp, C), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += gcols[
                        :, :, :, i, j
                    ]
            gxp = gxp[:, pad : pad + H, pad : pad + W] if pad else gxp
            gx = gxp.transpose(0, 3, 1, 2)
        if b is None:
            return gx, gk
        return gx, gk, gm.sum(axis=0)

    parents = (x, k) if b is None else (x, k, b)
    return _node(np.ascontiguousarray(out), parents, fn)


def upsample_nearest2x(x) -> Tensor:
    x = _wrap(x)
    if x.ndim != 4:
        raise ValueError(f"upsample_nearest2x expects [B,C,H,W], got {x.shape}")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    B, C, H, W = x.shape

    def fn(g):
        return (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),)

    return _node(out, (x,), fn)


def avgpool(x, f: int) -> Tensor:
    """Non-overlapping f x f average pooling of [B, C, H, W]."""
    x = _wrap(x)
    B, C, H, W = x.shape
    if H % f or W % f:
        raise ValueError(f"avgpool: extent {H}x{W} not divisible by {f}")
    out = x.data.reshape(B, C, H // f, f, W // f, f).mean(axis=(3, 5))

    def fn(g):
        g = g / (f * f)
        return (g.repeat(f, axis=2).repeat(f, axis=3),)

    return _node(out, (x,), fn)


# ---------------------------------------------------------------------------
# bilinear plane sampling


def grid_sample_bilinear(plane, uv) -> Tensor:
    """Sample plane [F, K, K] at uv [n, 2] in [-1, 1]^2 -> [n, F].

    u indexes columns (last axis), v rows. -1 and +1 land on the first and
    last grid nodes. Coordinates outside the square are clamped, so their
    uv gradient is zero.
    """
    plane, uv = _wrap(plane), _wrap(uv)
    if plane.ndim != 3 or uv.ndim != 2 or uv.shape[1] != 2:
        raise ValueError(f"grid_sample_bilinear: bad shapes plane{plane.shape} uv{uv.shape}")
    if not np.all(np.isfinite(uv.data)):
        raise ValueError("grid_sample_bilinear: non-finite uv")
    F, Kh, Kw = plane.shape
    P = plane.data
    u = uv.data[:, 0]
    v = uv.data[:, 1]
    inside_u = (u > -1) & (u < 1)
    inside_v = (v > -1) & (v < 1)
    su = (Kw - 1) / 2.0
    sv = (Kh - 1) / 2.0
    px = (np.clip(u, -1, 1) + 1) * su
    py = (np.clip(v, -1, 1) + 1) * sv
    x0 = np.clip(np.floor(px), 0, max(Kw - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(py), 0, max(Kh - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, Kw - 1)
    y1 = np.minimum(y0 + 1, Kh - 1)
    fx = (px - x0).astype(P.dtype)
    fy = (py - y0).astype(P.dtype)
    flat = P.reshape(F, Kh * Kw)
    n = uv.shape[0]
    i00 = y0 * Kw + x0
    i01 = y0 * Kw + x1
    i10 = y1 * Kw + x0
    i11 = y1 * Kw + x1
    # sparse interpolation matrix [n, K*K], four weights per row
    cols = np.stack([i00, i01, i10, i11], axis=1).ravel()
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1).ravel()
    interp = sp.csr_matrix((wts, cols, np.arange(0, 4 * n + 1, 4)), shape=(n, Kh * Kw))
    out = np.asarray(interp @ flat.T, dtype=P.dtype)

    def fn(g):
        gp = guv = None
        if plane.requires_grad:
            gp = np.asarray(interp.T @ g, dtype=P.dtype).T.reshape(F, Kh, Kw)
        if uv.requires_grad:
            v00, v01, v10, v11 = (flat[:, i].T for i in (i00, i01, i10, i11))
            fyc = fy[:, None]
            top = v00 + fx[:, None] * (v01 - v00)
            bot = v10 + fx[:, None] * (v11 - v10)
            dfx = (1 - fyc) * (v01 - v00) + fyc * (v11 - v10)
            dfy = bot - top
            gu = (g * dfx).sum(axis=1) * su * inside_u
            gv = (g * dfy).sum(axis=1) * sv * inside_v
            guv = np.stack([gu, gv], axis=1).astype(uv.dtype)
        return gp, guv

    return _node(out.reshape(n, F), (plane, uv), fn)


# ---------------------------------------------------------------------------
# volume compositing


def composite(sigma, channels, deltas, bg) -> tuple[Tensor, np.ndarray]:
    """Alpha-composite R rays of S samples front to back.

    sigma [R, S] >= 0, channels [R, S, C], deltas [R, S] > 0, bg [C].
    Returns the composited [R, C] tensor and the accumulated opacity [R]
    (1 - final transmittance) as a plain array.
    """
    sigma, channels, deltas, bg = (_wrap(t) for t in (sigma, channels, deltas, bg))
    R, S = sigma.shape
    C = channels.shape[-1]
    if channels.shape != (R, S, C) or deltas.shape != (R, S) or bg.shape != (C,):
        raise ValueError(
            f"composite: inconsistent shapes sigma{sigma.shape} channels{channels.shape} "
            f"deltas{deltas.shape} bg{bg.shape}"
        )
    sd, cd, dd, bd = sigma.data, channels.data, deltas.data, bg.data
    if np.any(sd < 0):
        raise ValueError("composite: negative density")
    tau = sd * dd
    ctau = np.cumsum(tau, axis=1)
    t_next = np.exp(-ctau)  # transmittance after sample i
    t_prev = np.concatenate([np.ones((R, 1), dtype=sd.dtype), t_next[:, :-1]], axis=1)
    w = t_prev - t_next
    t_final = t_next[:, -1]
    out = np.einsum("rs,rsc->rc", w, cd) + t_final[:, None] * bd[None, :]

    def fn(g):
        gc = np.einsum("rc,rsc->rs", g, cd)
        gout = (g * out).sum(axis=1)
        cum = np.cumsum(w * gc, axis=1)
        gtau = t_next * gc - (gout[:, None] - cum)
        gs = gtau * dd if sigma.requires_grad else None
        gd = gtau * sd if deltas.requires_grad else None
        gch = w[:, :, None] * g[:, None, :] if channels.requires_grad else None
        gb = (g * t_final[:, None]).sum(axis=0) if bg.requires_grad else None
        return gs, gch, gd, gb

    result = _node(out.astype(sd.dtype), (sigma, channels, deltas, bg), fn)
    return result, 1.0 - t_final


def composite_weights(sigma: np.ndarray, deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample weights T_i * alpha_i and the final transmittance (no graph)."""
    ctau = np.cumsum(sigma * deltas, axis=-1)
    t_next = np.exp(-ctau)
    t_prev = np.concatenate([np.ones_like(t_next[..., :1]), t_next[..., :-1]], axis=-1)
    return t_prev - t_next, t_next[..., -1]


# ---------------------------------------------------------------------------
# graph traversal


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None):
    """Accumulate d(loss)/d(leaf) into every reachable leaf that requires grad."""
    if grad is None:
        if loss.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        grad = np.ones(loss.shape, dtype=loss.dtype)
    else:
        grad = np.asarray(grad, dtype=loss.dtype)
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any tensor requiring grad")
    grads: dict[int, np.ndarray] = {id(loss): grad}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.dtype)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# initialization


def kaiming_uniform(shape, fan_in: int, rng: Rng) -> Tensor:
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)
