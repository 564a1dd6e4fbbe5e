"""A small fully connected ReLU network with hand-written backprop and Adam."""

from __future__ import annotations

import numpy as np


def init_params(sizes, rng, zero_last: bool = False) -> list[np.ndarray]:
    """He-initialised weights as a flat list ``[W1, b1, W2, b2, ...]``.

    ``W_k`` has shape (fan_in, fan_out) so a batch multiplies on the left.
    All tensors are views into one contiguous vector (see :func:`flat_view`),
    which lets the optimiser update everything in a handful of array ops.
    """
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    params = _views(np.zeros(sum(int(np.prod(s)) for s in shapes)), shapes)
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        if zero_last and k == n_layers - 1:
            continue
        fan_in = sizes[k]
        params[2 * k][...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=params[2 * k].shape)
    return params


def _views(flat: np.ndarray, shapes) -> list[np.ndarray]:
    out, i = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        out.append(flat[i : i + n].reshape(shape))
        i += n
    return out


def flat_view(params) -> np.ndarray | None:
    """The shared backing vector of ``params``, or None if they are separate arrays."""
    base = params[0].base
    if base is None or base.ndim != 1:
        return None
    if sum(p.size for p in params) != base.size or any(p.base is not base for p in params):
        return None
    return base


def copy_params(params) -> list[np.ndarray]:
    flat = flat_view(params)
    if flat is None:
        return [p.copy() for p in params]
    return _views(flat.copy(), [p.shape for p in params])


def forward(params, x: np.ndarray):
    """Returns (output, cache). Hidden layers use ReLU, the last one is linear."""
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
        acts.append(h)
    return h, acts


def predict(params, x: np.ndarray) -> np.ndarray:
    h = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        h = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            np.maximum(h, 0.0, out=h)
    return h


def backward(params, acts, d_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/d(output)."""
    grads = [None] * len(params)
    delta = d_out
    n_layers = len(params) // 2
    for k in reversed(range(n_layers)):
        a_in = acts[k]
        grads[2 * k] = a_in.T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[2 * k].T) * (acts[k] > 0)
    return grads


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._flat = flat_view(params)
        if self._flat is not None:
            shapes = [p.shape for p in params]
            self._m = np.zeros_like(self._flat)
            self._v = np.zeros_like(self._flat)
            self._g = np.zeros_like(self._flat)
            self.m = _views(self._m, shapes)
            self.v = _views(self._v, shapes)
            self._g_views = _views(self._g, shapes)

    def step(self, params, grads) -> None:
        self.t += 1
        scale = self.lr * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        if self._flat is not None and flat_view(params) is self._flat:
            for dst, g in zip(self._g_views, grads):
                dst[...] = g
            self._update(self._flat, self._g, self._m, self._v, scale)
            return
        for p, g, m, v in zip(params, grads, self.m, self.v):
            self._update(p, g, m, v, scale)

    def _update(self, p, g, m, v, scale) -> None:
        b1, b2 = self.beta1, self.beta2
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= scale * m / (np.sqrt(v) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}
