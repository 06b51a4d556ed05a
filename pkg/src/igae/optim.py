"""Adam with per-parameter moments and epoch-wise exponential rate decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class Schedule:
    base: float
    gamma: float = 1.0
    xi: float = 1.0

    def rate(self, step: int, steps_per_epoch: int = 1) -> float:
        return schedule_rate(self, step, steps_per_epoch)


def schedule_rate(s: Schedule, step: int, steps_per_epoch: int = 1) -> float:
    epoch = step // max(int(steps_per_epoch), 1)
    return s.base * s.xi * s.gamma**epoch


class Adam:
    """Bias-corrected Adam. Moments are keyed by parameter and created lazily,
    so a parameter only advances its own step count when it is updated."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}
        self.t: dict[int, int] = {}
        self.steps = 0

    def step(self, lr: float, params=None):
        """Update ``params`` (default: all registered) in place from their grads."""
        params = self.params if params is None else list(params)
        missing = [i for i, p in enumerate(params) if p.grad is None]
        if missing:
            raise ValueError(f"Adam.step: {len(missing)} parameter(s) have no gradient")
        for p in params:
            adam_update(self, p, p.grad, lr)
        self.steps += 1

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_arrays(self, names: dict[int, str]) -> dict[str, np.ndarray]:
        """Moments as named arrays (for checkpoints); ``names`` maps id(param) -> name."""
        out = {}
        for key, name in names.items():
            if key in self.m:
                out[f"adam.m.{name}"] = self.m[key]
                out[f"adam.v.{name}"] = self.v[key]
        return out

    def step_counts(self, names: dict[int, str]) -> dict[str, int]:
        return {names[k]: t for k, t in self.t.items() if k in names}

    def load_state(self, arrays: dict[str, np.ndarray], counts: dict[str, int], params: dict[str, Tensor]):
        for name, p in params.items():
            if f"adam.m.{name}" in arrays:
                self.m[id(p)] = np.array(arrays[f"adam.m.{name}"], dtype=p.dtype)
                self.v[id(p)] = np.array(arrays[f"adam.v.{name}"], dtype=p.dtype)
                self.t[id(p)] = int(counts[name])


def adam_update(state: Adam, p: Tensor, g: np.ndarray, lr: float):
    key = id(p)
    if key not in state.m:
        state.m[key] = np.zeros_like(p.data)
        state.v[key] = np.zeros_like(p.data)
        state.t[key] = 0
    b1, b2 = state.beta1, state.beta2
    t = state.t[key] + 1
    state.t[key] = t
    m = state.m[key]
    v = state.v[key]
    m *= b1
    m += (1 - b1) * g
    v *= b2
    v += (1 - b2) * (g * g)
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)


def adam_step(state: Adam, params, grads, lr: float):
    """Functional form: apply one Adam update with explicit gradients."""
    params = list(params)
    grads = list(grads)
    if len(grads) != len(params) or any(g is None for g in grads):
        raise ValueError("adam_step: every parameter needs a gradient")
    for p, g in zip(params, grads):
        adam_update(state, p, np.asarray(g, dtype=p.dtype), lr)
    state.steps += 1
    return params
